#include "onoff/cli.hpp"

int main(int argc, char** argv) { return onoff::cli::run(argc, argv); }
