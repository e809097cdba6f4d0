#include "flashdistill/experiment.hpp"

int main(int argc, char** argv) { return flashdistill::run_cli(argc, argv); }
