#include "progtex/cli.hpp"

int main(int argc, char** argv) { return progtex::cli::run(argc, argv); }
