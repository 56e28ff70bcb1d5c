#include "srnet/cli.hpp"

int main(int argc, char** argv) { return srnet::run_cli(argc, argv); }
