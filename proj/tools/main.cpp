#include "hdmr/cli.hpp"

int main(int argc, char** argv) { return hdmr::run_cli(argc, argv); }
