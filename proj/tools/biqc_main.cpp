#include "biqc/cli.hpp"

int main(int argc, char** argv) { return biqc::cli::run(argc, argv); }
