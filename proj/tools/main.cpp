#include "matlda/cli.hpp"

int main(int argc, char** argv) { return matlda::run_cli(argc, argv); }
