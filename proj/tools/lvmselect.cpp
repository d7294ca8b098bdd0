#include "lvmselect/cli.hpp"

int main(int argc, char** argv) {
    return lvmselect::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
