#include "fstab/cli.hpp"

int main(int argc, char** argv) { return fstab::cli::run(argc, argv); }
