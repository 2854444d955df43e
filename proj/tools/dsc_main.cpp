#include "dsc/cli.hpp"

int main(int argc, char** argv) {
    return dsc::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
