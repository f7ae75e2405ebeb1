#include "mdc/cli.hpp"

int main(int argc, char** argv) { return mdc::cli_main(argc, argv); }
