#include "ruot/cli.hpp"

int main(int argc, char** argv) { return ruot::cli::main(argc, argv); }
