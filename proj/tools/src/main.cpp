#include "opcm_cli/commands.hpp"

int main(int argc, char** argv) { return opcm::cli::run(argc, argv); }
