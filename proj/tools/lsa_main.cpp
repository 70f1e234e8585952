#include "lsa/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return lsa::cli_run(argc, argv, std::cout, std::cerr);
}
