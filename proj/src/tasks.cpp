#include "thg/tasks.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "thg/errors.hpp"

namespace thg::tasks {

SpanTaggingDataset generate_dataset(int vocab_size, int seq_len,
                                    int n_examples, std::uint64_t seed) {
  if (seq_len < 4) throw ContractError("generate_dataset: seq_len must be >= 4");
  if (vocab_size < 4)
    throw ContractError("generate_dataset: vocab_size must be >= 4");
  if (n_examples < 1)
    throw ContractError("generate_dataset: n_examples must be >= 1");

  SpanTaggingDataset ds;
  ds.vocab_size = vocab_size;
  ds.seq_len = seq_len;
  ds.seed = seed;
  ds.examples.reserve(static_cast<std::size_t>(n_examples));

  Rng rng(seed);
  const std::uint64_t l = static_cast<std::uint64_t>(seq_len);
  const std::uint64_t n_pairs = (l - 1) * (l - 2) / 2;  // (b,e) with e >= b+2
  for (int ex = 0; ex < n_examples; ++ex) {
    Example e;
    e.tokens.resize(seq_len);
    e.labels.assign(seq_len, 0);
    for (int i = 0; i < seq_len; ++i)
      e.tokens[i] = kFillerBase + static_cast<int>(rng.uniform_int(
                                      static_cast<std::uint64_t>(vocab_size) -
                                      kFillerBase));
    std::uint64_t idx = rng.uniform_int(n_pairs);
    int b = 0;
    while (idx >= l - 2 - static_cast<std::uint64_t>(b)) {
      idx -= l - 2 - static_cast<std::uint64_t>(b);
      ++b;
    }
    const int end = b + 2 + static_cast<int>(idx);
    e.tokens[b] = kBegin;
    e.tokens[end] = kEnd;
    for (int i = b + 1; i < end; ++i) e.labels[i] = 1;
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

std::string serialize(const SpanTaggingDataset& ds) {
  std::ostringstream os;
  for (const Example& e : ds.examples) {
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i) os << ' ';
      os << e.tokens[i];
    }
    os << '\t';
    for (std::size_t i = 0; i < e.labels.size(); ++i) {
      if (i) os << ' ';
      os << e.labels[i];
    }
    os << '\n';
  }
  return os.str();
}

namespace {

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::istringstream is(s);
  std::vector<int> out;
  int v;
  while (is >> v) out.push_back(v);
  if (!is.eof())
    throw ContractError(std::string("parse_dataset: malformed ") + what);
  return out;
}

}  // namespace

SpanTaggingDataset parse_dataset(const std::string& text, int vocab_size,
                                 int seq_len) {
  SpanTaggingDataset ds;
  ds.vocab_size = vocab_size;
  ds.seq_len = seq_len;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ContractError("parse_dataset: line without tab separator");
    Example e;
    e.tokens = parse_int_list(line.substr(0, tab), "tokens");
    e.labels = parse_int_list(line.substr(tab + 1), "labels");
    if (e.tokens.size() != static_cast<std::size_t>(seq_len) ||
        e.labels.size() != static_cast<std::size_t>(seq_len))
      throw ContractError("parse_dataset: sequence length mismatch");
    for (int tok : e.tokens)
      if (tok < 0 || tok >= vocab_size)
        throw ContractError("parse_dataset: token id outside vocab");
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

std::vector<std::pair<int, int>> extract_spans(const std::vector<int>& labels) {
  std::vector<std::pair<int, int>> spans;
  const int n = static_cast<int>(labels.size());
  int i = 0;
  while (i < n) {
    if (labels[i] != 1) {
      ++i;
      continue;
    }
    int j = i;
    while (j < n && labels[j] == 1) ++j;
    spans.emplace_back(i, j);
    i = j;
  }
  return spans;
}

namespace {

const TaggerConfig& checked_config(const TaggerConfig& cfg) {
  if (cfg.n_layers == 0)
    throw ContractError("TaggerModel: n_layers must be >= 1");
  if (cfg.vocab_size < 4 || cfg.seq_len < 4)
    throw ContractError("TaggerModel: vocab_size and seq_len must be >= 4");
  return cfg;
}

Tensor embedding_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * rng.normal();
  return t;
}

std::vector<nn::ThgEncoder> make_blocks(const TaggerConfig& cfg, Rng& rng) {
  std::vector<nn::ThgEncoder> blocks;
  blocks.reserve(cfg.n_layers);
  for (std::size_t b = 0; b < cfg.n_layers; ++b)
    blocks.emplace_back("enc" + std::to_string(b), cfg.encoder, rng);
  return blocks;
}

}  // namespace

// Members initialize in declaration order, so the rng draw order is fixed:
// token embedding, position embedding, encoder blocks, classifier.
TaggerModel::TaggerModel(const TaggerConfig& config, Rng& rng)
    : cfg(checked_config(config)),
      tok_emb("tok_emb",
              embedding_init(static_cast<std::size_t>(config.vocab_size),
                             config.encoder.d_model, rng)),
      pos_emb("pos_emb",
              embedding_init(static_cast<std::size_t>(config.seq_len),
                             config.encoder.d_model, rng)),
      blocks(make_blocks(config, rng)),
      classifier("cls", kNumLabels, config.encoder.d_model, rng) {}

ad::Var TaggerModel::logits(ad::Tape& t, const std::vector<int>& tokens) {
  if (tokens.size() != static_cast<std::size_t>(cfg.seq_len))
    throw ContractError("TaggerModel: expected " +
                        std::to_string(cfg.seq_len) + " tokens, got " +
                        std::to_string(tokens.size()));
  ad::Var x = t.add(t.embedding_rows(t.leaf(tok_emb), tokens), t.leaf(pos_emb));
  for (nn::ThgEncoder& block : blocks) x = nn::encoder_forward(t, block, x);
  return classifier.forward(t, x);
}

std::vector<Parameter*> TaggerModel::params() {
  std::vector<Parameter*> out{&tok_emb, &pos_emb};
  for (nn::ThgEncoder& block : blocks) block.collect(out);
  classifier.collect(out);
  return out;
}

Metrics score_predictions(const std::vector<std::vector<int>>& preds,
                          const SpanTaggingDataset& ds) {
  if (ds.examples.empty())
    throw ContractError("score_predictions: empty dataset");
  if (preds.size() != ds.examples.size())
    throw ContractError("score_predictions: got " +
                        std::to_string(preds.size()) + " predictions for " +
                        std::to_string(ds.examples.size()) + " examples");
  long correct = 0, total = 0;
  long tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t e = 0; e < ds.examples.size(); ++e) {
    const Example& ex = ds.examples[e];
    const std::vector<int>& pred = preds[e];
    if (pred.size() != ex.tokens.size())
      throw ContractError("score_predictions: prediction length mismatch");
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (ex.tokens[i] == kPad) continue;
      ++total;
      if (pred[i] == ex.labels[i]) ++correct;
    }
    const auto gold_spans = extract_spans(ex.labels);
    const auto pred_spans = extract_spans(pred);
    n_gold += static_cast<long>(gold_spans.size());
    n_pred += static_cast<long>(pred_spans.size());
    for (const auto& s : pred_spans)
      for (const auto& g : gold_spans)
        if (s == g) {
          ++tp;
          break;
        }
  }
  Metrics m;
  m.token_accuracy =
      total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                : 0.0;
  const double precision =
      n_pred > 0 ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  const double recall =
      n_gold > 0 ? static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  m.span_f1 = (precision + recall) > 0.0
                  ? 2.0 * precision * recall / (precision + recall)
                  : 0.0;
  return m;
}

Metrics evaluate(TaggerModel& model, const SpanTaggingDataset& ds) {
  if (ds.examples.empty()) throw ContractError("evaluate: empty dataset");
  std::vector<std::vector<int>> preds;
  preds.reserve(ds.examples.size());
  for (const Example& ex : ds.examples) {
    ad::Tape t;
    const Tensor& lg = model.logits(t, ex.tokens).value();
    std::vector<int> pred(ex.tokens.size(), 0);
    for (std::size_t i = 0; i < ex.tokens.size(); ++i)
      pred[i] = lg.at(i, 1) > lg.at(i, 0) ? 1 : 0;
    preds.push_back(std::move(pred));
  }
  return score_predictions(preds, ds);
}

std::vector<MetricsRow> train(TaggerModel& model,
                              const SpanTaggingDataset& train_ds,
                              const SpanTaggingDataset& eval_ds,
                              const TrainOptions& opts) {
  if (train_ds.examples.empty() || eval_ds.examples.empty())
    throw ContractError("train: empty dataset");
  if (opts.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (opts.eval_interval < 1)
    throw ContractError("train: eval_interval must be >= 1");

  optim::Optimizer opt(opts.opt, model.params());
  Rng shuffle(Rng::derive(opts.seed, "shuffle"));
  std::vector<MetricsRow> rows;

  for (long step = 1; step <= opts.steps; ++step) {
    double loss_value;
    try {
      ad::Tape t;
      ad::Var loss;
      for (int b = 0; b < opts.batch_size; ++b) {
        const Example& ex =
            train_ds.examples[shuffle.uniform_int(train_ds.examples.size())];
        ad::Var l = t.cross_entropy_with_logits(model.logits(t, ex.tokens),
                                                ex.labels);
        loss = b == 0 ? l : t.add(loss, l);
      }
      loss = t.scalar_mul(loss, 1.0 / static_cast<double>(opts.batch_size));
      loss_value = loss.value().item();
      if (!std::isfinite(loss_value))
        throw DivergenceError(
            "training loss is not finite at step " + std::to_string(step),
            step);
      opt.zero_grad();
      t.backward(loss);
      opt.step();
    } catch (const DomainError& e) {
      throw DivergenceError("training diverged at step " +
                                std::to_string(step) + ": " + e.what(),
                            step);
    } catch (const NumericalError& e) {
      throw DivergenceError("training diverged at step " +
                                std::to_string(step) + ": " + e.what(),
                            step);
    }
    if (step % opts.eval_interval == 0 || step == opts.steps) {
      const Metrics m = evaluate(model, eval_ds);
      rows.push_back({step, loss_value, m.token_accuracy, m.span_f1});
    }
  }
  return rows;
}

}  // namespace thg::tasks
