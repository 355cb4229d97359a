#include "commands.hpp"

int main(int argc, char** argv) { return mdam::cli::run_cli(argc, argv); }
