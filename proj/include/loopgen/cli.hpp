#ifndef LOOPGEN_CLI_HPP
#define LOOPGEN_CLI_HPP

namespace loopgen {

// Full command-line surface: extract, train, train-prior, sample, evaluate,
// export-midi, inspect-codes. Returns the process exit status.
int run_cli(int argc, char** argv);

}  // namespace loopgen

#endif
