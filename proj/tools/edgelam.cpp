#include "edgelam/cli.hpp"

int main(int argc, char** argv) { return edgelam::cli::main(argc, argv); }
