#include "relprop/cli.hpp"

int main(int argc, char** argv) { return relprop::cli::run(argc, argv); }
