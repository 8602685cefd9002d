#include "crd_cli.hpp"

int main(int argc, char** argv) { return crd::cli::run(argc, argv); }
