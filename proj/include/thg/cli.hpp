#pragma once

#include <iosfwd>
#include <string>

namespace thg::cli {

// Subcommand bodies behind the `thg` binary, factored out so tests can drive
// them in-process. Each returns the process exit code and never throws.

// 0 ok; 1 bad config; 2 training divergence; 3 I/O failure.
int run_train(const std::string& config_path, std::ostream& out,
              std::ostream& err);

// 0 ok; 1 bad config or checkpoint/model shape mismatch; 3 I/O failure.
int run_eval(const std::string& ckpt_path, const std::string& config_path,
             std::ostream& out, std::ostream& err);

// 0 all checks pass; 4 otherwise.
int run_gradcheck(std::ostream& out);

// 0 ok; 1 invalid dims or repeats.
int run_bench_compat(int seq_len, int d_model, int n_heads, int repeats,
                     std::ostream& out, std::ostream& err);

}  // namespace thg::cli
