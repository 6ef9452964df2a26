#include "npmix/cli.hpp"

int main(int argc, char** argv) { return npmix::cli_main(argc, argv); }
