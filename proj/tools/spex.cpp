#include "spex/pipeline.hpp"

int main(int argc, char** argv) { return spex::run_cli(argc, argv); }
