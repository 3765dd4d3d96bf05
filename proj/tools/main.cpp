#include "gsapool/cli.hpp"

int main(int argc, char** argv) { return gsapool::cli_main(argc, argv); }
