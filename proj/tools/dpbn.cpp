#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Deterministic projected belief network auto-encoder"};
  app.require_subcommand(1);

  std::string config, model, out, input;
  std::uint64_t seed = 0;
  int count = 16;
  bool corrupt = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run configuration");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out, "Output directory");
  };

  auto* train = app.add_subcommand("train", "Prepare data, train, write the model file and CSV log");
  add_common(train);
  train->add_option("--model", model, "Model output path (overrides output.model)");

  auto* eval = app.add_subcommand("eval", "Print train/test MSE and sampling efficiency of a saved model");
  add_common(eval);
  eval->add_option("--model", model, "Model file")->required();

  auto* recon = app.add_subcommand("reconstruct", "Write original/reconstruction PGM pairs and per-sample errors");
  add_common(recon);
  recon->add_option("--model", model, "Model file")->required();
  recon->add_option("--input", input, "Gaussianified DPBD batch (default: the config's test split)");
  recon->add_option("--count", count, "Number of samples; -1 for all");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the training gradient");
  add_common(grad);
  grad->add_flag("--corrupt-gradient", corrupt)->group("");

  CLI11_PARSE(app, argc, argv);

  dpbn::cli::Overrides o;
  o.model = model;
  o.out = out;
  for (auto* sub : {train, eval, recon, grad}) {
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;
  }

  try {
    if (train->parsed()) return dpbn::cli::cmd_train(config, o, std::cout, std::cerr);
    if (eval->parsed()) return dpbn::cli::cmd_eval(model, config, o, std::cout, std::cerr);
    if (recon->parsed()) return dpbn::cli::cmd_reconstruct(model, config, input, count, o, std::cout, std::cerr);
    return dpbn::cli::cmd_gradcheck(config, o, corrupt, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
