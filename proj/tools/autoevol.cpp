#include "autoevol/cli.hpp"

int main(int argc, char** argv) { return autoevol::run_cli(argc, argv); }
