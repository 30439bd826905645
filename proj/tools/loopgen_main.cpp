#include "loopgen/cli.hpp"

int main(int argc, char** argv) { return loopgen::run_cli(argc, argv); }
