#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thg/autodiff.hpp"
#include "thg/layers.hpp"
#include "thg/optim.hpp"
#include "thg/parameter.hpp"
#include "thg/rng.hpp"

namespace thg::tasks {

inline constexpr int kPad = 0;
inline constexpr int kBegin = 1;
inline constexpr int kEnd = 2;
inline constexpr int kFillerBase = 3;
inline constexpr int kNumLabels = 2;

struct Example {
  std::vector<int> tokens;
  std::vector<int> labels;  // 1 strictly between BEGIN and END, else 0
};

struct SpanTaggingDataset {
  int vocab_size = 32;
  int seq_len = 32;
  std::uint64_t seed = 0;
  std::vector<Example> examples;
};

// Each sequence: uniform filler tokens from [3, vocab), one BEGIN/END pair at
// positions (b, e) drawn uniformly over all pairs with e >= b + 2.
// Regeneration with the same arguments is bit-identical.
SpanTaggingDataset generate_dataset(int vocab_size, int seq_len,
                                    int n_examples, std::uint64_t seed);

// One example per line: space-separated token ids, tab, space-separated labels.
std::string serialize(const SpanTaggingDataset& ds);
SpanTaggingDataset parse_dataset(const std::string& text, int vocab_size,
                                 int seq_len);

// Half-open [start, end) extents of the maximal runs of label 1.
std::vector<std::pair<int, int>> extract_spans(const std::vector<int>& labels);

struct TaggerConfig {
  int vocab_size = 32;
  int seq_len = 32;
  std::size_t n_layers = 1;
  nn::EncoderConfig encoder;
};

// Token + learned position embeddings, a stack of encoder blocks, and a
// two-way per-token classifier.
struct TaggerModel {
  TaggerConfig cfg;
  Parameter tok_emb;  // [vocab, d_model]
  Parameter pos_emb;  // [seq_len, d_model]
  std::vector<nn::ThgEncoder> blocks;
  nn::EuclideanLinear classifier;  // d_model -> 2

  TaggerModel(const TaggerConfig& cfg, Rng& rng);
  ad::Var logits(ad::Tape& t, const std::vector<int>& tokens);
  std::vector<Parameter*> params();
};

struct Metrics {
  double token_accuracy = 0.0;
  double span_f1 = 0.0;
};

// Scores per-token label predictions (one vector per example, parallel to
// ds.examples): token_accuracy over non-PAD positions, span F1 with
// exact-boundary matching pooled over the whole dataset.
Metrics score_predictions(const std::vector<std::vector<int>>& preds,
                          const SpanTaggingDataset& ds);

// Greedy-decodes the model on every example and scores it.
Metrics evaluate(TaggerModel& model, const SpanTaggingDataset& ds);

struct MetricsRow {
  long step;
  double loss;
  double token_accuracy;
  double span_f1;
};

struct TrainOptions {
  optim::Hyper opt;
  long steps = 2000;
  long eval_interval = 100;
  int batch_size = 8;
  std::uint64_t seed = 42;  // master seed; the shuffle stream derives from it
};

// Minibatch cross-entropy training; one metrics row per eval interval (plus a
// final row when steps is not a multiple). Non-finite loss throws
// DivergenceError carrying the step index.
std::vector<MetricsRow> train(TaggerModel& model,
                              const SpanTaggingDataset& train_ds,
                              const SpanTaggingDataset& eval_ds,
                              const TrainOptions& opts);

}  // namespace thg::tasks
