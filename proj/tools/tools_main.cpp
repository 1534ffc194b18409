#include "lego/harness/cli.hpp"

int main(int argc, char** argv) { return lego::harness::run_cli(argc, argv); }
