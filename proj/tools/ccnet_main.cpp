#include <vector>

#include "ccnet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ccnet::cli_run(args);
}
