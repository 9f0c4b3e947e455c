#include "gandistill/config.hpp"

int main(int argc, char** argv) { return gandistill::run_cli(argc, argv); }
