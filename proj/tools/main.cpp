#include "lnkit/cli.hpp"

int main(int argc, char** argv) { return lnkit::dispatch(argc, argv); }
