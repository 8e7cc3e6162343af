#include "mtlsed/cli/cli.hpp"

int main(int argc, char** argv) { return mtlsed::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
