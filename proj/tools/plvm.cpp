#include "plvm/cli.hpp"

int main(int argc, char **argv)
{
    return plvm::run_cli(argc, argv);
}
