#include "mvavg/cli.hpp"

int main(int argc, char** argv) { return mvavg::cli::run(argc, argv); }
