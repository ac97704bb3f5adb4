#include "nrt/cli.hpp"

int main(int argc, char** argv) { return nrt::cli::run(argc, argv); }
