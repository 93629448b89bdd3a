#include "collapsim/cli.hpp"

int main(int argc, char** argv) { return collapsim::run_cli(argc, argv); }
