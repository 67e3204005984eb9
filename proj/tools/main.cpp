// Command-line entry point. Subcommand wiring lands with the pipeline
// modules; for now this reports usage so the build stays exercised.
#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "error[USAGE]: no subcommand given (expected one of: gen-data, train, eval, profile, params)\n");
  return 2;
}
