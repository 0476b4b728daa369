#include "linr/cli.hpp"

int main(int argc, char** argv) { return linr::cli_main(argc, argv); }
