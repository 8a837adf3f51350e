#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "thg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"THG: transformer with hyperbolic-geometry attention"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train = app.add_subcommand(
      "train", "Train per config; writes metrics.csv, final.ckpt, config.resolved");
  train->add_option("--config", train_config, "run config file")->required();

  std::string eval_ckpt, eval_config;
  auto* eval =
      app.add_subcommand("eval", "Evaluate a checkpoint on a fresh eval split");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--config", eval_config, "run config file")->required();

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference verification of the composed gradients");

  int seq = 128, dmodel = 60, heads = 5, repeats = 20;
  auto* bench = app.add_subcommand(
      "bench-compat", "Time dot-product vs hyperbolic-distance attention");
  bench->add_option("--seq", seq, "sequence length");
  bench->add_option("--dmodel", dmodel, "model width");
  bench->add_option("--heads", heads, "attention heads");
  bench->add_option("--repeats", repeats, "timed repeats per mode");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed())
    return thg::cli::run_train(train_config, std::cout, std::cerr);
  if (eval->parsed())
    return thg::cli::run_eval(eval_ckpt, eval_config, std::cout, std::cerr);
  if (gradcheck->parsed()) return thg::cli::run_gradcheck(std::cout);
  if (bench->parsed())
    return thg::cli::run_bench_compat(seq, dmodel, heads, repeats, std::cout,
                                      std::cerr);
  return 0;
}
