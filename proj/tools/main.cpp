#include "contextprobe/experiment.hpp"

int main(int argc, char** argv) { return contextprobe::run_cli(argc, argv); }
