#include "riskpref/cli.hpp"

int main(int argc, char** argv) { return riskpref::dispatch(argc, argv); }
