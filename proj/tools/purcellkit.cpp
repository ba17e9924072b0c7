#include <string>
#include <vector>

#include "purcellkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return purcellkit::cli::run(args);
}
