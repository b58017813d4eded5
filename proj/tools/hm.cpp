#include <iostream>

#include "hm_app.hpp"

int main(int argc, char** argv) { return healthmap::cli::run(argc, argv, std::cout, std::cerr); }
