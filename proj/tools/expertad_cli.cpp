#include "expertad/cli.hpp"

int main(int argc, char** argv) { return expertad::run(argc, argv); }
