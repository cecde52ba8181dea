#include "tracktime/cli.hpp"

int main(int argc, char** argv) { return tracktime::cli::main(argc, argv); }
