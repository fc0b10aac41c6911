#include "fusionet/cli.hpp"

int main(int argc, char** argv) { return fusionet::cli::run(argc, argv); }
