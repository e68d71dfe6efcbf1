#include "relrep/cli.hpp"

int main(int argc, char** argv) { return relrep::run(argc, argv); }
