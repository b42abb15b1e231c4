#include "cli.hpp"

int main(int argc, char** argv) { return wunet_cli::run(argc, argv); }
