#include "corap/cli.hpp"

int main(int argc, char** argv) { return corap::cli::run(argc, argv); }
