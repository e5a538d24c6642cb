#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) { return rgflow::app::main_with_args(argc, argv, std::cerr); }
