#include "iotnat/cli.hpp"

int main(int argc, char** argv) { return iotnat::cli::run(argc, argv); }
