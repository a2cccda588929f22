#include <iostream>
#include <string>
#include <vector>

#include "lrqk_tools/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lrqk::tools::run_cli(args, std::cout, std::cerr);
}
