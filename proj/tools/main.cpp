#include "warpfuse/cli/cli.hpp"

int main(int argc, char** argv) { return warpfuse::cli::run_cli(argc, argv); }
