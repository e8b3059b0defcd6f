#include "cli.hpp"

int main(int argc, char** argv) { return sefc::cli::run_cli(argc, argv); }
