#include "dyadic/cli.hpp"

int main(int argc, char** argv) { return dyadic::dispatch(argc, argv); }
