#include "cli.hpp"

int main(int argc, char** argv) { return heatmpc::cli::run({argv + 1, argv + argc}); }
