#include "bair/cli.hpp"

int main(int argc, char** argv) { return bair::run_cli(argc, argv); }
