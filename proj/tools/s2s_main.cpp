// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "s2s/cli.hpp"
#include "s2s/kernels.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale sequence-to-sequence laboratory"};
  app.require_subcommand(1);

  std::string config, resume, toggle, checkpoint, source, reference, hypotheses;
  std::size_t beam = 4;

  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("config", config, "Run config")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Beam-decode a source file and score it with BLEU");
  eval->add_option("checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("source", source, "Source sentences, one per line")->required();
  eval->add_option("reference", reference, "Reference sentences, one per line")->required();
  eval->add_option("--beam", beam, "Beam width")->capture_default_str();
  eval->add_option("--output", hypotheses, "Hypotheses file (default <checkpoint>.hyp)");

  auto* count = app.add_subcommand("count", "Print parameter and FLOP counts for a config");
  count->add_option("config", config, "Run or preset config")->required();

  auto* ablate = app.add_subcommand("ablate", "Train with one technique removed");
  ablate->add_option("config", config, "Run config")->required();
  ablate->add_option("--drop", toggle, "label_smoothing | multi_head | layer_norm | sync_training")->required();

  CLI11_PARSE(app, argc, argv);
  s2s::kernels::tune_allocator();

  if (*train) return s2s::cli::cmd_train(config, resume, std::cout, std::cerr);
  if (*eval) return s2s::cli::cmd_eval(checkpoint, source, reference, beam, hypotheses, std::cout, std::cerr);
  if (*count) return s2s::cli::cmd_count(config, std::cout, std::cerr);
  if (*ablate) return s2s::cli::cmd_ablate(config, toggle, std::cout, std::cerr);
  return 1;
}
