//
// SPDX-License-Identifier: Apache-2.0
//

#include "sfs_cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return sfs::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
