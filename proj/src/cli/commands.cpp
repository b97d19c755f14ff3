// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <ostream>

#include "s2s/cli.hpp"
#include "s2s/errors.hpp"

namespace s2s::cli {

namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void summarize(const TrainReport& r, std::size_t window, std::ostream& out) {
  out << "steps " << r.steps << ", updates " << r.updates << ", aborted " << r.steps - r.updates << '\n';
  if (!r.evals.empty()) {
    const EvalRecord& last = r.evals.back();
    out << "final dev BLEU " << fixed(last.bleu, 2) << ", token accuracy " << fixed(last.token_accuracy, 4) << '\n';
  }
  if (r.bleu_window)
    out << "best " << window << "-evaluation window: BLEU " << fixed(r.bleu_window->mean, 2) << " +- "
        << fixed(r.bleu_window->stddev, 2) << " from evaluation " << r.bleu_window->start << '\n';
  else
    out << "fewer than " << window << " evaluations; no evaluation window reported\n";
  out << "checkpoint " << r.checkpoint_path << "\nmetrics " << r.metrics_path << '\n';
}

void run_training(const RunConfig& config, const std::string& resume, std::ostream& out) {
  TrainOptions options;
  options.resume = resume;
  options.progress = &out;
  summarize(train(config, options), config.training.eval_window, out);
}

}  // namespace

int cmd_train(const std::string& config_path, const std::string& resume, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] { run_training(load_run_config(config_path), resume, out); });
}

int cmd_ablate(const std::string& config_path, const std::string& toggle, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig config = ablate(load_run_config(config_path), toggle);
    config.paths.output_dir += "-no-" + toggle;
    if (!config.paths.log_dir.empty()) config.paths.log_dir += "-no-" + toggle;
    out << ablation_note(toggle) << '\n';
    run_training(config, "", out);
  });
}

int cmd_count(const std::string& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(config_path);
    if (!in) fail(ErrorKind::IoError, "cannot open config '" + config_path + "'");
    Json json;
    try {
      json = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::ConfigInvalid, "config '" + config_path + "' is not valid JSON: " + e.what());
    }
    if (!json.is_object() || !json.contains("model")) fail(ErrorKind::ConfigInvalid, "config needs a 'model' section");
    const arch::ModelConfig model = parse_model_config(json.at("model"));
    const std::size_t params = decode::count_params(model);
    const std::size_t flops = decode::count_flops(model);
    out << "family " << model.family_name() << '\n'
        << "parameters " << params << " (" << fixed(static_cast<double>(params) / 1e6, 1) << "M)\n"
        << "flops " << flops << " (" << fixed(static_cast<double>(flops) / 1e9, 2)
        << "G, source and target length 50)\n"
        << decode::counting_conventions() << '\n';
  });
}

int cmd_eval(const std::string& checkpoint, const std::string& source, const std::string& reference,
             std::size_t beam, const std::string& hypotheses_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (beam == 0) fail(ErrorKind::ConfigInvalid, "beam must be at least 1");
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const auto model = restore_model(ckpt);
    const data::Vocabulary vocab(ckpt.vocabulary);
    const auto sources = data::read_lines(source);
    const auto references = data::read_lines(reference);
    if (sources.empty()) fail(ErrorKind::EmptyCorpus, "'" + source + "' has no lines");
    if (sources.size() != references.size())
      fail(ErrorKind::ShapeMismatch, std::to_string(sources.size()) + " source lines but " +
                                         std::to_string(references.size()) + " reference lines");
    std::vector<std::string> hypotheses;
    for (const auto& line : sources) {
      const std::vector<int> ids = vocab.encode(line);
      if (ids.empty()) {
        hypotheses.emplace_back();
        continue;
      }
      decode::BeamOptions options;
      options.beam = beam;
      options.max_length = 2 * ids.size() + 10;
      hypotheses.push_back(vocab.decode(decode::beam_search(*model, ids, options).tokens));
    }
    const std::string path = hypotheses_path.empty() ? checkpoint + ".hyp" : hypotheses_path;
    std::ofstream hyp(path, std::ios::trunc);
    if (!hyp) fail(ErrorKind::IoError, "cannot write '" + path + "'");
    for (const auto& h : hypotheses) hyp << h << '\n';
    const decode::BleuResult bleu = decode::bleu_lines(hypotheses, references);
    out << "BLEU " << fixed(bleu.score, 2) << " (BP " << fixed(bleu.brevity_penalty, 4) << ", hyp "
        << bleu.hypothesis_length << ", ref " << bleu.reference_length << ")\nhypotheses " << path << '\n';
  });
}

}  // namespace s2s::cli
