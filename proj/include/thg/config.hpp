#pragma once

#include <cstdint>
#include <string>

#include "thg/layers.hpp"
#include "thg/optim.hpp"
#include "thg/tasks.hpp"

namespace thg::config {

// Flat `key = value` run configuration with dotted section prefixes. Every
// field has a default; parse_config materializes them all and validates the
// result, so downstream code never sees a partial config.
struct RunConfig {
  // model
  int d_model = 60;
  int n_heads = 5;
  int n_layers = 1;
  double curvature = 1.0;
  nn::CompatMode compat_mode = nn::CompatMode::DotProduct;
  bool attention_scaling = true;
  nn::ModelKind model_kind = nn::ModelKind::Thg;
  // optim
  optim::Kind optim_kind = optim::Kind::Adam;
  double lr = 1e-3;  // default depends on optim.kind; see parse_config
  bool riemannian_rescale = true;
  // task
  int vocab_size = 32;
  int seq_len = 32;
  int n_train = 4096;
  int n_eval = 256;
  std::uint64_t seed = 42;
  // run
  long steps = 2000;
  long eval_interval = 100;
  int batch_size = 8;
  std::string out_dir = "out";
};

// `#` starts a comment; blank lines are skipped; unknown keys, malformed
// values, and out-of-range fields throw ContractError. When optim.lr is not
// given it defaults per optimizer: adam 1e-3, rmsprop 5e-4, rsgd 0.1.
RunConfig parse_config(const std::string& text);

// Reads the file and parses it; IoError if unreadable.
RunConfig load_config(const std::string& path);

// Every field written back out in a fixed order with full f64 precision;
// re-feeding the result to `thg train` reproduces the run exactly.
std::string serialize_resolved(const RunConfig& cfg);

nn::EncoderConfig encoder_config(const RunConfig& cfg);
tasks::TaggerConfig tagger_config(const RunConfig& cfg);
optim::Hyper optimizer_hyper(const RunConfig& cfg);
tasks::TrainOptions train_options(const RunConfig& cfg);

}  // namespace thg::config
