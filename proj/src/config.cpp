#include "thg/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "thg/errors.hpp"

namespace thg::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ContractError("config: " + key + " " + why);
}

long parse_long(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long out;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    bad(key, "expects an integer, got '" + v + "'");
  }
  if (pos != v.size()) bad(key, "expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    bad(key, "expects an unsigned integer, got '" + v + "'");
  }
  if (pos != v.size() || v.find('-') != std::string::npos)
    bad(key, "expects an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    bad(key, "expects a number, got '" + v + "'");
  }
  if (pos != v.size()) bad(key, "expects a number, got '" + v + "'");
  return out;
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true") return true;
  if (v == "off" || v == "false") return false;
  bad(key, "expects on/off, got '" + v + "'");
}

int parse_int_range(const std::string& key, const std::string& v, long lo,
                    long hi) {
  const long out = parse_long(key, v);
  if (out < lo || out > hi)
    bad(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                 "], got " + v);
  return static_cast<int>(out);
}

double default_lr(optim::Kind kind) {
  switch (kind) {
    case optim::Kind::Adam: return 1e-3;
    case optim::Kind::Rmsprop: return 5e-4;
    case optim::Kind::Rsgd: return 0.1;
  }
  throw ContractError("config: unknown optimizer kind");
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  bool lr_given = false;

  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractError("config: line " + std::to_string(lineno) +
                          " is not 'key = value': '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ContractError("config: line " + std::to_string(lineno) +
                          " has an empty key or value");

    if (key == "model.d_model") {
      cfg.d_model = parse_int_range(key, val, 1, 1 << 16);
    } else if (key == "model.n_heads") {
      cfg.n_heads = parse_int_range(key, val, 1, 1 << 16);
    } else if (key == "model.n_layers") {
      cfg.n_layers = parse_int_range(key, val, 1, 1 << 10);
    } else if (key == "model.curvature") {
      cfg.curvature = parse_double(key, val);
    } else if (key == "model.compat_mode") {
      if (val == "dot_product") cfg.compat_mode = nn::CompatMode::DotProduct;
      else if (val == "hyperbolic_distance")
        cfg.compat_mode = nn::CompatMode::HyperbolicDistance;
      else bad(key, "expects dot_product or hyperbolic_distance, got '" + val + "'");
    } else if (key == "model.attention_scaling") {
      cfg.attention_scaling = parse_switch(key, val);
    } else if (key == "model.model_kind") {
      if (val == "thg") cfg.model_kind = nn::ModelKind::Thg;
      else if (val == "euclidean") cfg.model_kind = nn::ModelKind::Euclidean;
      else bad(key, "expects thg or euclidean, got '" + val + "'");
    } else if (key == "optim.kind") {
      if (val == "adam") cfg.optim_kind = optim::Kind::Adam;
      else if (val == "rmsprop") cfg.optim_kind = optim::Kind::Rmsprop;
      else if (val == "rsgd") cfg.optim_kind = optim::Kind::Rsgd;
      else bad(key, "expects adam, rmsprop or rsgd, got '" + val + "'");
    } else if (key == "optim.lr") {
      cfg.lr = parse_double(key, val);
      lr_given = true;
    } else if (key == "optim.riemannian_rescale") {
      cfg.riemannian_rescale = parse_switch(key, val);
    } else if (key == "task.vocab_size") {
      cfg.vocab_size = parse_int_range(key, val, 4, 1 << 20);
    } else if (key == "task.seq_len") {
      cfg.seq_len = parse_int_range(key, val, 4, 1 << 16);
    } else if (key == "task.n_train") {
      cfg.n_train = parse_int_range(key, val, 1, 1 << 24);
    } else if (key == "task.n_eval") {
      cfg.n_eval = parse_int_range(key, val, 1, 1 << 24);
    } else if (key == "task.seed") {
      cfg.seed = parse_u64(key, val);
    } else if (key == "run.steps") {
      cfg.steps = parse_long(key, val);
      if (cfg.steps < 0) bad(key, "must be >= 0, got " + val);
    } else if (key == "run.eval_interval") {
      cfg.eval_interval = parse_long(key, val);
      if (cfg.eval_interval < 1) bad(key, "must be >= 1, got " + val);
    } else if (key == "run.batch_size") {
      cfg.batch_size = parse_int_range(key, val, 1, 1 << 16);
    } else if (key == "run.out_dir") {
      cfg.out_dir = val;
    } else {
      throw ContractError("config: unknown key '" + key + "'");
    }
  }

  if (!lr_given) cfg.lr = default_lr(cfg.optim_kind);

  if (!(std::isfinite(cfg.curvature) && cfg.curvature > 0.0))
    throw ContractError("config: model.curvature must be finite and > 0");
  if (!(std::isfinite(cfg.lr) && cfg.lr > 0.0))
    throw ContractError("config: optim.lr must be finite and > 0");
  if (cfg.d_model % cfg.n_heads != 0)
    throw ContractError("config: model.d_model (" + std::to_string(cfg.d_model) +
                        ") must be divisible by model.n_heads (" +
                        std::to_string(cfg.n_heads) + ")");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_resolved(const RunConfig& cfg) {
  std::ostringstream os;
  os << "model.d_model = " << cfg.d_model << '\n';
  os << "model.n_heads = " << cfg.n_heads << '\n';
  os << "model.n_layers = " << cfg.n_layers << '\n';
  os << "model.curvature = " << fmt_f64(cfg.curvature) << '\n';
  os << "model.compat_mode = "
     << (cfg.compat_mode == nn::CompatMode::DotProduct ? "dot_product"
                                                       : "hyperbolic_distance")
     << '\n';
  os << "model.attention_scaling = " << (cfg.attention_scaling ? "on" : "off")
     << '\n';
  os << "model.model_kind = "
     << (cfg.model_kind == nn::ModelKind::Thg ? "thg" : "euclidean") << '\n';
  os << "optim.kind = "
     << (cfg.optim_kind == optim::Kind::Adam      ? "adam"
         : cfg.optim_kind == optim::Kind::Rmsprop ? "rmsprop"
                                                  : "rsgd")
     << '\n';
  os << "optim.lr = " << fmt_f64(cfg.lr) << '\n';
  os << "optim.riemannian_rescale = " << (cfg.riemannian_rescale ? "on" : "off")
     << '\n';
  os << "task.vocab_size = " << cfg.vocab_size << '\n';
  os << "task.seq_len = " << cfg.seq_len << '\n';
  os << "task.n_train = " << cfg.n_train << '\n';
  os << "task.n_eval = " << cfg.n_eval << '\n';
  os << "task.seed = " << cfg.seed << '\n';
  os << "run.steps = " << cfg.steps << '\n';
  os << "run.eval_interval = " << cfg.eval_interval << '\n';
  os << "run.batch_size = " << cfg.batch_size << '\n';
  os << "run.out_dir = " << cfg.out_dir << '\n';
  return os.str();
}

nn::EncoderConfig encoder_config(const RunConfig& cfg) {
  nn::EncoderConfig ec;
  ec.d_model = static_cast<std::size_t>(cfg.d_model);
  ec.n_heads = static_cast<std::size_t>(cfg.n_heads);
  ec.curvature = cfg.curvature;
  ec.compat = cfg.compat_mode;
  ec.scale_scores = cfg.attention_scaling;
  ec.kind = cfg.model_kind;
  return ec;
}

tasks::TaggerConfig tagger_config(const RunConfig& cfg) {
  tasks::TaggerConfig tc;
  tc.vocab_size = cfg.vocab_size;
  tc.seq_len = cfg.seq_len;
  tc.n_layers = static_cast<std::size_t>(cfg.n_layers);
  tc.encoder = encoder_config(cfg);
  return tc;
}

optim::Hyper optimizer_hyper(const RunConfig& cfg) {
  optim::Hyper h;
  h.kind = cfg.optim_kind;
  h.lr = cfg.lr;
  h.riemannian_rescale = cfg.riemannian_rescale;
  return h;
}

tasks::TrainOptions train_options(const RunConfig& cfg) {
  tasks::TrainOptions opts;
  opts.opt = optimizer_hyper(cfg);
  opts.steps = cfg.steps;
  opts.eval_interval = cfg.eval_interval;
  opts.batch_size = cfg.batch_size;
  opts.seed = cfg.seed;
  return opts;
}

}  // namespace thg::config
