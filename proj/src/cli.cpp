#include "thg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <vector>

#include "thg/checkpoint.hpp"
#include "thg/config.hpp"
#include "thg/errors.hpp"
#include "thg/gradcheck.hpp"
#include "thg/tasks.hpp"

namespace thg::cli {

namespace {

std::string fmt_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& body) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << body;
  os.flush();
  if (!os) throw IoError("failed writing: " + path.string());
}

std::string metrics_csv(const std::vector<tasks::MetricsRow>& rows) {
  std::string csv = "step,loss,token_accuracy,span_f1\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.step);
    csv += ',';
    csv += fmt_g9(r.loss);
    csv += ',';
    csv += fmt_g9(r.token_accuracy);
    csv += ',';
    csv += fmt_g9(r.span_f1);
    csv += '\n';
  }
  return csv;
}

struct BuiltRun {
  tasks::SpanTaggingDataset train_ds;
  tasks::SpanTaggingDataset eval_ds;
  tasks::TaggerModel model;
};

BuiltRun build_run(const config::RunConfig& cfg) {
  Rng init(Rng::derive(cfg.seed, "init"));
  return BuiltRun{
      tasks::generate_dataset(cfg.vocab_size, cfg.seq_len, cfg.n_train,
                              Rng::derive(cfg.seed, "data.train")),
      tasks::generate_dataset(cfg.vocab_size, cfg.seq_len, cfg.n_eval,
                              Rng::derive(cfg.seed, "data.eval")),
      tasks::TaggerModel(config::tagger_config(cfg), init)};
}

}  // namespace

int run_train(const std::string& config_path, std::ostream& out,
              std::ostream& err) {
  try {
    const config::RunConfig cfg = config::load_config(config_path);
    BuiltRun run = build_run(cfg);

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create out_dir '" + cfg.out_dir +
                          "': " + ec.message());
    const std::filesystem::path out_dir(cfg.out_dir);
    write_text_file(out_dir / "config.resolved", config::serialize_resolved(cfg));

    const auto rows =
        tasks::train(run.model, run.train_ds, run.eval_ds,
                     config::train_options(cfg));

    write_text_file(out_dir / "metrics.csv", metrics_csv(rows));
    ckpt::save((out_dir / "final.ckpt").string(),
               ckpt::snapshot(run.model.params()));

    if (!rows.empty()) {
      const auto& last = rows.back();
      out << "step " << last.step << " loss " << fmt_g9(last.loss)
          << " token_accuracy " << fmt_g9(last.token_accuracy) << " span_f1 "
          << fmt_g9(last.span_f1) << "\n";
    }
    out << "wrote " << (out_dir / "metrics.csv").string() << ", "
        << (out_dir / "final.ckpt").string() << ", "
        << (out_dir / "config.resolved").string() << "\n";
    return 0;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int run_eval(const std::string& ckpt_path, const std::string& config_path,
             std::ostream& out, std::ostream& err) {
  try {
    const config::RunConfig cfg = config::load_config(config_path);
    Rng init(Rng::derive(cfg.seed, "init"));
    tasks::TaggerModel model(config::tagger_config(cfg), init);
    ckpt::load_into(ckpt::load(ckpt_path), model.params());

    const auto eval_ds =
        tasks::generate_dataset(cfg.vocab_size, cfg.seq_len, cfg.n_eval,
                                Rng::derive(cfg.seed, "data.eval"));
    const tasks::Metrics m = tasks::evaluate(model, eval_ds);
    out << "token_accuracy=" << fmt_g9(m.token_accuracy) << "\n";
    out << "span_f1=" << fmt_g9(m.span_f1) << "\n";
    return 0;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int run_gradcheck(std::ostream& out) {
  const auto results = gradcheck::run_standard_checks();
  bool all_pass = true;
  for (const auto& r : results) {
    out << r.name << " max_rel_err=" << fmt_g9(r.max_err) << " "
        << (r.pass ? "pass" : "FAIL") << "\n";
    all_pass = all_pass && r.pass;
  }
  out << (all_pass ? "gradcheck: all checks passed\n"
                   : "gradcheck: FAILURES above\n");
  return all_pass ? 0 : 4;
}

int run_bench_compat(int seq_len, int d_model, int n_heads, int repeats,
                     std::ostream& out, std::ostream& err) {
  if (seq_len < 1 || d_model < 1 || n_heads < 1 || repeats < 1 ||
      d_model % n_heads != 0) {
    err << "error: bench-compat needs seq_len >= 1, d_model >= 1 and "
           "divisible by n_heads, repeats >= 1\n";
    return 1;
  }

  nn::EncoderConfig ec;
  ec.d_model = static_cast<std::size_t>(d_model);
  ec.n_heads = static_cast<std::size_t>(n_heads);
  Rng rng(Rng::derive(20240101, "bench"));
  nn::ThgEncoder enc("bench", ec, rng);

  Tensor x({static_cast<std::size_t>(seq_len), ec.d_model});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-0.5, 0.5);

  // Same encoder object in both modes: identical weights and input, the
  // score computation is the only difference.
  auto time_mode = [&](nn::CompatMode mode) {
    enc.cfg.compat = mode;
    auto pass = [&] {
      ad::Tape t;
      nn::thg_attention(t, enc, t.constant(x));
    };
    pass();  // warmup, excluded from timing
    std::vector<double> ms(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      pass();
      const auto t1 = std::chrono::steady_clock::now();
      ms[static_cast<std::size_t>(r)] =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= static_cast<double>(repeats);
    const std::size_t n = ms.size();
    const double median =
        n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    return std::pair<double, double>(mean, median);
  };

  const auto [dot_mean, dot_median] = time_mode(nn::CompatMode::DotProduct);
  const auto [hyp_mean, hyp_median] =
      time_mode(nn::CompatMode::HyperbolicDistance);

  // The ratio uses the medians: one scheduler stall inside the short
  // dot-product window would swing a ratio of means wildly.
  out << "mode,mean_ms,median_ms,ratio_vs_dot\n";
  out << "dot_product," << fmt_g9(dot_mean) << "," << fmt_g9(dot_median)
      << ",1\n";
  out << "hyperbolic_distance," << fmt_g9(hyp_mean) << ","
      << fmt_g9(hyp_median) << "," << fmt_g9(hyp_median / dot_median) << "\n";
  return 0;
}

}  // namespace thg::cli
