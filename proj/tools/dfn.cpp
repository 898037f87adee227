#include "dfn/cli.hpp"

int main(int argc, char** argv) { return dfn::cli::run(argc, argv); }
