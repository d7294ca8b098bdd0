#pragma once

#include "lvmselect/numerics.hpp"
#include "lvmselect/criteria.hpp"
#include "lvmselect/types.hpp"
#include "lvmselect/bpca.hpp"
#include "lvmselect/gmm.hpp"
#include "lvmselect/vb.hpp"
#include "lvmselect/harness.hpp"
#include "lvmselect/checks.hpp"
#include "lvmselect/io.hpp"
