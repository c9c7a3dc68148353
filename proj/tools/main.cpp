#include <iostream>
#include <string>
#include <vector>

#include "rbfvae/cli.hpp"

int main(int argc, char** argv) {
    return rbfvae::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
