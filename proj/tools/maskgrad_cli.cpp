#include "maskgrad/cli.hpp"

int main(int argc, char** argv) { return maskgrad::run_cli(argc, argv); }
