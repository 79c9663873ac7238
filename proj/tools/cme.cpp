#include "cme/cli.hpp"

int main(int argc, char** argv) { return cme::cli::main(argc, argv); }
