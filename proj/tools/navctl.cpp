#include "bnav/navctl.hpp"

int main(int argc, char** argv) { return bnav::run_cli(argc, argv); }
