#include <iostream>

#include "upolicy/pipeline.hpp"

int main(int argc, char** argv) { return upolicy::pipeline::run_cli(argc, argv, std::cout, std::cerr); }
