#include "eulerstab/cli_harness.hpp"

int main(int argc, char** argv) { return eulerstab::cli_main(argc, argv); }
