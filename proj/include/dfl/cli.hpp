#ifndef DFL_CLI_HPP
#define DFL_CLI_HPP

namespace dfl::cli {

/// Full command-line surface: train, evaluate, audit, dcov, synth, probe,
/// sweep. Exit codes: 0 success, 1 sweep warning (no candidate passed the
/// accuracy filter), 2 config/input error, 3 numerical divergence,
/// 4 undefined metric / insufficient samples.
int run(int argc, char** argv);

}  // namespace dfl::cli

#endif  // DFL_CLI_HPP
