#include "smcf/cli.hpp"

int main(int argc, char** argv) { return smcf::cli::main(argc, argv); }
