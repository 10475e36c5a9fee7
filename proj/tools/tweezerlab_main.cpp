#include <iostream>

#include "tweezerlab/cli.hpp"

int main(int argc, char** argv)
{
    return tweezerlab::cli::dispatch(argc, argv, std::cout, std::cerr);
}
