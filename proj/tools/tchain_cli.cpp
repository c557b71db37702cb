#include "tchain/cli.hpp"

int main(int argc, char** argv) { return tchain::cli::run(argc, argv); }
