#include "gelfab/commands.hpp"

int main(int argc, char** argv) { return gelfab::run_cli(argc, argv); }
