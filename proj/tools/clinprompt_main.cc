#include "clinprompt/cli.h"

int main(int argc, char** argv) { return clinprompt::cli::run(argc, argv); }
