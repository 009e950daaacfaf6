#include "dfl/cli.hpp"

int main(int argc, char** argv) { return dfl::cli::run(argc, argv); }
