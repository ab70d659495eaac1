#include "fspde/cli.hpp"

int main(int argc, char** argv) { return fspde::cli::main(argc, argv); }
