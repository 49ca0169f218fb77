#include "prunenet/cli.hpp"

int main(int argc, char** argv) { return prunenet::cli::dispatch(argc, argv); }
