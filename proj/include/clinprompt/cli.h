#ifndef CLINPROMPT_CLI_H_
#define CLINPROMPT_CLI_H_

#include <string>
#include <vector>

namespace clinprompt::cli {

// Subcommands: tokenizer, pretrain, synth, convert, tune, generate, eval.
// Hyperparameters may also come from --config FILE (key=value lines, keys
// under a [subcommand] section or prefixed "subcommand."); flags win.
//
// Returns 0 on success, 1 on bad input or a violated contract, 2 on an
// internal error. Data goes to files, progress to stderr.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace clinprompt::cli

#endif  // CLINPROMPT_CLI_H_
