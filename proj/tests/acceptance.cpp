// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each block is self-contained so a regression points straight at
// the broken property.
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "thg/checkpoint.hpp"
#include "thg/cli.hpp"
#include "thg/config.hpp"
#include "thg/geometry.hpp"
#include "thg/kernels.hpp"
#include "thg/layers.hpp"
#include "thg/rng.hpp"
#include "thg/tasks.hpp"
#include "thg/tensor.hpp"

using namespace thg;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
  std::printf("%s: %d %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

double norm(const std::vector<double>& v) {
  return std::sqrt(kernels::norm_sq(v.data(), v.size()));
}

double norm(const Tensor& t) {
  return std::sqrt(kernels::norm_sq(t.data(), t.size()));
}

std::vector<double> sample_ball(Rng& rng, std::size_t d, geometry::Curvature c,
                                double frac) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  const double s = frac * c.max_norm() / norm(v);
  for (auto& x : v) x *= s;
  return v;
}

// --- 1: exp/log inverses and the Mobius group structure -------------------
bool criterion1(std::string& what) {
  const auto t0 = clk::now();
  Rng rng(1001);
  const double curvatures[] = {0.5, 1.0, 2.0};
  double worst_inv = 0.0;
  for (int i = 0; i < 1000; ++i) {
    geometry::Curvature c(curvatures[i % 3]);
    const std::size_t d = 2 + rng.uniform_int(15);
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    const double target = rng.uniform(1e-3, 3.0);  // stays clear of the clip
    const double s = target / norm(v);
    for (auto& x : v) x *= s;

    std::vector<double> p(d), back(d), diff(d);
    geometry::exp_map0(v, c, p);
    geometry::log_map0(p, c, back);
    kernels::sub(back.data(), v.data(), diff.data(), d);
    worst_inv = std::max(worst_inv, norm(diff));
  }

  double worst_ident = 0.0, worst_inverse = 0.0;
  bool closure = true;
  for (int i = 0; i < 1000; ++i) {
    geometry::Curvature c(curvatures[i % 3]);
    const std::size_t d = 2 + rng.uniform_int(7);
    auto x = sample_ball(rng, d, c, rng.uniform(0.0, 0.95));
    auto y = sample_ball(rng, d, c, rng.uniform(0.0, 0.95));
    std::vector<double> zero(d, 0.0), neg(d), out(d), diff(d);

    geometry::mobius_add(x, zero, c, out);
    kernels::sub(out.data(), x.data(), diff.data(), d);
    worst_ident = std::max(worst_ident, norm(diff));
    geometry::mobius_add(zero, x, c, out);
    kernels::sub(out.data(), x.data(), diff.data(), d);
    worst_ident = std::max(worst_ident, norm(diff));

    for (std::size_t k = 0; k < d; ++k) neg[k] = -x[k];
    geometry::mobius_add(neg, x, c, out);
    worst_inverse = std::max(worst_inverse, norm(out));

    geometry::mobius_add(x, y, c, out);
    closure = closure && norm(out) < 1.0 / c.sqrt_c();  // strictly inside
  }
  const double dt = seconds_since(t0);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "geometry inverses: log(exp(v)) worst %.2e (< 1e-9), mobius "
                "identity %.2e / inverse %.2e (< 1e-12), closure %s, %.2fs",
                worst_inv, worst_ident, worst_inverse,
                closure ? "strict" : "VIOLATED", dt);
  what = buf;
  return worst_inv < 1e-9 && worst_ident < 1e-12 && worst_inverse < 1e-12 &&
         closure && dt < 2.0;
}

// --- 2: metric axioms and the small-curvature limit -----------------------
bool criterion2(std::string& what) {
  Rng rng(1002);
  const double curvatures[] = {0.5, 1.0, 2.0};
  double worst_sym = 0.0, worst_self = 0.0, worst_tri = -1e300;
  for (int i = 0; i < 1000; ++i) {
    geometry::Curvature c(curvatures[i % 3]);
    const std::size_t d = 2 + rng.uniform_int(7);
    auto x = sample_ball(rng, d, c, rng.uniform(0.0, 0.9));
    auto y = sample_ball(rng, d, c, rng.uniform(0.0, 0.9));
    auto z = sample_ball(rng, d, c, rng.uniform(0.0, 0.9));
    const double dxy = geometry::hyperbolic_distance(x, y, c);
    const double dyx = geometry::hyperbolic_distance(y, x, c);
    const double dxx = geometry::hyperbolic_distance(x, x, c);
    const double dxz = geometry::hyperbolic_distance(x, z, c);
    const double dzy = geometry::hyperbolic_distance(z, y, c);
    worst_sym = std::max(worst_sym, std::abs(dxy - dyx));
    worst_self = std::max(worst_self, std::abs(dxx));
    worst_tri = std::max(worst_tri, dxy - (dxz + dzy));
  }

  geometry::Curvature tiny(1e-8);
  double worst_limit = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t d = 2 + rng.uniform_int(7);
    std::vector<double> x(d), y(d), diff(d);
    for (auto& e : x) e = rng.uniform(-0.5, 0.5);
    for (auto& e : y) e = rng.uniform(-0.5, 0.5);
    kernels::sub(x.data(), y.data(), diff.data(), d);
    const double eu = 2.0 * norm(diff);
    if (eu < 1e-6) continue;
    const double hy = geometry::hyperbolic_distance(x, y, tiny);
    worst_limit = std::max(worst_limit, std::abs(hy - eu) / eu);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "metric axioms: symmetry %.2e (< 1e-10), d(x,x) %.2e, triangle "
                "slack %.2e (<= 1e-9), small-c limit %.2e (< 1e-3)",
                worst_sym, worst_self, worst_tri, worst_limit);
  what = buf;
  return worst_sym < 1e-10 && worst_self < 1e-10 && worst_tri <= 1e-9 &&
         worst_limit < 1e-3;
}

// --- 3: orthogonal maps act as hyperbolic isometries -----------------------
bool criterion3(std::string& what) {
  Rng rng(1003);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    geometry::Curvature c(trial % 2 ? 1.0 : 2.0);
    const std::size_t d = 2 + rng.uniform_int(7);
    Tensor w = nn::init_orthogonal(d, d, rng);

    std::vector<double> x(d), y(d);
    for (auto& e : x) e = rng.uniform(-1.0, 1.0);
    for (auto& e : y) e = rng.uniform(-1.0, 1.0);

    auto apply = [&](const std::vector<double>& v) {
      std::vector<double> out(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t k = 0; k < d; ++k) out[r] += w.at(r, k) * v[k];
      return out;
    };
    std::vector<double> px(d), py(d), pwx(d), pwy(d);
    geometry::exp_map0(x, c, px);
    geometry::exp_map0(y, c, py);
    const auto wx = apply(x), wy = apply(y);
    geometry::exp_map0(wx, c, pwx);
    geometry::exp_map0(wy, c, pwy);
    const double before = geometry::hyperbolic_distance(px, py, c);
    const double after = geometry::hyperbolic_distance(pwx, pwy, c);
    worst = std::max(worst, std::abs(after - before));
  }
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "isometry: 100 orthogonal maps, worst distance drift %.2e "
                "(< 1e-8)",
                worst);
  what = buf;
  return worst < 1e-8;
}

// --- 4: b = 0 recovers the Euclidean layer and block -----------------------
bool criterion4(std::string& what) {
  Rng rng(1004);
  double worst_layer = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    geometry::Curvature c(trial % 2 ? 1.0 : 0.5);
    nn::HyperbolicLinear hl("hl", 6, 6, c, rng);
    hl.b.value.fill(0.0);
    Tensor x(std::vector<std::size_t>{3, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    ad::Tape t;
    ad::Var y = hl.forward(t, t.constant(x));
    // reference: plain x w^T
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t o = 0; o < 6; ++o) {
        double ref = 0.0;
        for (std::size_t k = 0; k < 6; ++k)
          ref += x.at(r, k) * hl.w.value.at(o, k);
        worst_layer = std::max(worst_layer, std::abs(y.value().at(r, o) - ref));
      }
  }

  // full block at spec scale
  nn::EncoderConfig ct;  // d_model 60, heads 5, curvature 1, thg
  nn::EncoderConfig ce = ct;
  ce.kind = nn::ModelKind::Euclidean;
  Rng r1(77), r2(78);
  nn::ThgEncoder enc_t("t", ct, r1), enc_e("e", ce, r2);
  std::vector<Parameter*> pt, pe;
  enc_t.collect(pt);
  enc_e.collect(pe);
  for (std::size_t i = 0; i < pt.size(); ++i) pe[i]->value = pt[i]->value;
  enc_t.q_h->b.value.fill(0.0);
  enc_t.k_h->b.value.fill(0.0);
  enc_e.q_e->b.value.fill(0.0);
  enc_e.k_e->b.value.fill(0.0);
  Tensor x(std::vector<std::size_t>{16, 60});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * rng.normal();
  ad::Tape t;
  ad::Var yt = nn::encoder_forward(t, enc_t, t.constant(x));
  ad::Var ye = nn::encoder_forward(t, enc_e, t.constant(x));
  double worst_block = 0.0;
  for (std::size_t i = 0; i < yt.value().size(); ++i)
    worst_block =
        std::max(worst_block, std::abs(yt.value()[i] - ye.value()[i]));

  char buf[192];
  std::snprintf(buf, sizeof buf,
                "euclidean recovery at b=0: layer %.2e (< 1e-12), full block "
                "%.2e (< 1e-9)",
                worst_layer, worst_block);
  what = buf;
  return worst_layer < 1e-12 && worst_block < 1e-9;
}

// --- 5: the shipped gradient checker ---------------------------------------
bool criterion5(std::string& what) {
  const auto t0 = clk::now();
  std::ostringstream out;
  const int rc = cli::run_gradcheck(out);
  const double dt = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "gradcheck exit %d (want 0), %.1fs (< 60)",
                rc, dt);
  what = buf;
  return rc == 0 && dt < 60.0;
}

// --- 6: hyperbolic-distance attention costs >= 3x dot-product --------------
bool criterion6(std::string& what) {
  const auto t0 = clk::now();
  std::ostringstream out, err;
  const int rc = cli::run_bench_compat(128, 60, 5, 20, out, err);
  const double dt = seconds_since(t0);
  double ratio = 0.0;
  std::istringstream lines(out.str());
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind("hyperbolic_distance,", 0) == 0)
      ratio = std::stod(line.substr(line.find_last_of(',') + 1));
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "bench seq=128 d=60 heads=5: hyperbolic/dot ratio %.2f "
                "(>= 3.0), %.1fs (< 120)",
                ratio, dt);
  what = buf;
  return rc == 0 && ratio >= 3.0 && dt < 120.0;
}

struct TrainedRun {
  tasks::Metrics metrics;
  double seconds = 0.0;
  std::vector<ckpt::NamedTensor> snapshot;
  std::vector<std::pair<std::string, double>> ball_limits;  // name, max_norm
};

TrainedRun full_run(nn::ModelKind kind, optim::Kind opt, std::uint64_t seed) {
  config::RunConfig rc;  // spec defaults: d60 h5 L1, 2000 steps, batch 8
  rc.model_kind = kind;
  rc.optim_kind = opt;
  switch (opt) {  // the per-kind default lr, as parse_config would set it
    case optim::Kind::Adam: rc.lr = 1e-3; break;
    case optim::Kind::Rmsprop: rc.lr = 5e-4; break;
    case optim::Kind::Rsgd: rc.lr = 0.1; break;
  }
  rc.seed = seed;

  const auto t0 = clk::now();
  auto train_ds = tasks::generate_dataset(rc.vocab_size, rc.seq_len,
                                          rc.n_train,
                                          Rng::derive(seed, "data.train"));
  auto eval_ds = tasks::generate_dataset(rc.vocab_size, rc.seq_len, rc.n_eval,
                                         Rng::derive(seed, "data.eval"));
  Rng init(Rng::derive(seed, "init"));
  tasks::TaggerModel model(config::tagger_config(rc), init);
  tasks::TrainOptions opts = config::train_options(rc);
  opts.eval_interval = opts.steps;  // only the final row matters here
  tasks::train(model, train_ds, eval_ds, opts);

  TrainedRun out;
  out.metrics = tasks::evaluate(model, eval_ds);
  out.seconds = seconds_since(t0);
  out.snapshot = ckpt::snapshot(model.params());
  for (Parameter* p : model.params())
    if (p->is_ball())
      out.ball_limits.emplace_back(p->name, p->ball->max_norm());
  return out;
}

// --- 7: both model kinds learn the task, 3 seeds each -----------------------
bool criterion7(std::string& what) {
  bool ok = true;
  std::ostringstream detail;
  for (nn::ModelKind kind : {nn::ModelKind::Thg, nn::ModelKind::Euclidean}) {
    for (std::uint64_t seed : {42ull, 43ull, 44ull}) {
      TrainedRun run = full_run(kind, optim::Kind::Adam, seed);
      const bool pass = run.metrics.token_accuracy >= 0.97 &&
                        run.metrics.span_f1 >= 0.90 && run.seconds < 300.0;
      ok = ok && pass;
      char buf[96];
      std::snprintf(buf, sizeof buf, " [%s/%llu acc=%.4f f1=%.4f %.0fs]",
                    kind == nn::ModelKind::Thg ? "thg" : "euc",
                    static_cast<unsigned long long>(seed),
                    run.metrics.token_accuracy, run.metrics.span_f1,
                    run.seconds);
      detail << buf;
    }
  }
  what = "end-to-end learning, acc >= 0.97 / F1 >= 0.90, < 300s:" +
         detail.str();
  return ok;
}

// --- 8: ball constraint after a full run of every optimizer ----------------
bool criterion8(std::string& what) {
  const fs::path dir =
      fs::temp_directory_path() / ("thg_acc8_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  bool ok = true;
  std::ostringstream detail;
  for (optim::Kind opt :
       {optim::Kind::Adam, optim::Kind::Rmsprop, optim::Kind::Rsgd}) {
    TrainedRun run = full_run(nn::ModelKind::Thg, opt, 42);
    const std::string path =
        (dir / (std::to_string(static_cast<int>(opt)) + ".ckpt")).string();
    ckpt::save(path, run.snapshot);
    auto loaded = ckpt::load(path);  // post-hoc, from the file

    double worst_excess = -1e300;
    for (const auto& [name, limit] : run.ball_limits) {
      bool found = false;
      for (const auto& nt : loaded)
        if (nt.name == name) {
          worst_excess = std::max(worst_excess, norm(nt.value) - limit);
          found = true;
        }
      ok = ok && found;
    }
    ok = ok && worst_excess <= 0.0 && !run.ball_limits.empty();
    const char* names[] = {"adam", "rmsprop", "rsgd"};
    char buf[96];
    std::snprintf(buf, sizeof buf, " [%s worst |b|-limit=%.1e]",
                  names[static_cast<int>(opt)], worst_excess);
    detail << buf;
  }
  fs::remove_all(dir);
  what = "ball constraint |b| <= (1-1e-5)/sqrt(c) after full runs:" +
         detail.str();
  return ok;
}

// --- 9: byte-identical reruns and bit-exact persistence ---------------------
bool criterion9(std::string& what) {
  const fs::path dir =
      fs::temp_directory_path() / ("thg_acc9_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cfg_text = [&](const std::string& out_dir) {
    return "run.steps = 60\nrun.eval_interval = 20\ntask.n_train = 256\n"
           "task.n_eval = 32\nrun.out_dir = " +
           out_dir + "\n";
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };

  const std::string cfg_a = (dir / "a.cfg").string(),
                    cfg_b = (dir / "b.cfg").string();
  {
    std::ofstream(cfg_a) << cfg_text((dir / "a").string());
    std::ofstream(cfg_b) << cfg_text((dir / "b").string());
  }
  std::ostringstream sink;
  const int ra = cli::run_train(cfg_a, sink, sink);
  const int rb = cli::run_train(cfg_b, sink, sink);
  const bool metrics_same =
      ra == 0 && rb == 0 &&
      slurp(dir / "a/metrics.csv") == slurp(dir / "b/metrics.csv") &&
      !slurp(dir / "a/metrics.csv").empty();

  // checkpoint roundtrip: load + save again must reproduce the bytes
  auto tensors = ckpt::load((dir / "a/final.ckpt").string());
  ckpt::save((dir / "resaved.ckpt").string(), tensors);
  const bool ckpt_same =
      slurp(dir / "a/final.ckpt") == slurp(dir / "resaved.ckpt") &&
      !slurp(dir / "a/final.ckpt").empty();

  fs::remove_all(dir);
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "determinism: metrics.csv byte-identical %s, checkpoint "
                "roundtrip bit-exact %s",
                metrics_same ? "yes" : "NO", ckpt_same ? "yes" : "NO");
  what = buf;
  return metrics_same && ckpt_same;
}

}  // namespace

int main() {
  struct Entry {
    int n;
    bool (*fn)(std::string&);
  };
  const Entry entries[] = {{1, criterion1}, {2, criterion2}, {3, criterion3},
                           {4, criterion4}, {5, criterion5}, {6, criterion6},
                           {7, criterion7}, {8, criterion8}, {9, criterion9}};
  for (const Entry& e : entries) {
    std::string what;
    bool pass = false;
    try {
      pass = e.fn(what);
    } catch (const std::exception& ex) {
      what += std::string(" threw: ") + ex.what();
    }
    report(e.n, pass, what);
  }
  return g_failures == 0 ? 0 : 1;
}
