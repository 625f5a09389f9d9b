#include "tkg/cli_commands.hpp"

int main(int argc, char** argv) { return tkg::run_cli(argc, argv); }
