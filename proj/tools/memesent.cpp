#include "memesent/cli.hpp"

int main(int argc, char** argv) { return memesent::run_cli(argc, argv); }
