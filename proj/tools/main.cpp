#include "quadsci/cli.hpp"

int main(int argc, char** argv) { return quadsci::cli::run(argc, argv); }
