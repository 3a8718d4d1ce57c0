#include "rvp/cli.hpp"

int main(int argc, char** argv) { return rvp::run_cli(argc, argv); }
