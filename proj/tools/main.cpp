#include "dhsplan/cli.hpp"

int main(int argc, char **argv) { return dhsplan::run_cli(argc, argv); }
