#include <string>
#include <vector>

#include "vfba/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vfba::run_cli(args);
}
