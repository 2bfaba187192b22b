// Copyright 2026 The Cotask Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cotask/cli.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cotask/checkpoint.hpp"
#include "cotask/errors.hpp"
#include "cotask/experiment.hpp"
#include "cotask/synth.hpp"

namespace cotask {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string_view cli_name(SharingStrategy s) {
  switch (s) {
    case SharingStrategy::single_task:
      return "stl";
    case SharingStrategy::hard_shared:
      return "hard";
    case SharingStrategy::cross_stitch:
      return "cross-stitch";
    case SharingStrategy::co_task_aware:
      return "cotask";
  }
  return "?";
}

const std::vector<std::string> kStrategyNames = {"stl", "hard", "cross-stitch", "cotask"};

// Training flags shared by `train` and `compare`; unset ones leave the
// config file untouched.
struct TrainOverrides {
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> dropout;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--learning-rate", learning_rate, "Adam learning rate");
    cmd->add_option("--dropout", dropout, "Dropout on projected features");
  }

  void apply(TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (dropout) c.dropout_p = *dropout;
  }
};

RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

std::string class_name(const std::vector<std::string>& names, std::size_t classes, std::size_t c) {
  return names.size() == classes ? names[c] : "class" + std::to_string(c);
}

const std::vector<std::string>& task_names(const LabelSchema& schema, std::size_t task) {
  return task == 0 ? schema.primary_names : schema.aux_names;
}

ordered_json aggregate_json(const AggregateMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

ordered_json metrics_json(const Metrics& m, const std::vector<std::string>& names,
                          double threshold) {
  ordered_json j;
  j["threshold"] = threshold;
  j["per_class"] = ordered_json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    j["per_class"].push_back({{"label", class_name(names, m.per_class.size(), c)},
                              {"precision", pc.precision},
                              {"recall", pc.recall},
                              {"f1", pc.f1},
                              {"support", pc.support}});
  }
  j["weighted"] = aggregate_json(m.weighted);
  j["micro"] = aggregate_json(m.micro);
  return j;
}

// ---- synth -----------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  SynthSpec spec;
  bool force = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  if (fs::exists(a.out) && !a.force) {
    err << "synth: " << a.out << " exists; pass --force to overwrite\n";
    return kExitIo;
  }
  a.spec.validate();
  const Dataset data = synth_generate(a.n, a.seed, a.spec);
  save_jsonl(a.out, data, LabelSchema::standard());
  out << "wrote " << data.size() << " examples to " << a.out << '\n';
  return kExitOk;
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string strategy = "cotask";
  std::string config;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string log;
  TrainOverrides overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config = load_config_or_default(a.config);
  a.overrides.apply(config.train);
  if (a.seed) config.train.seed = *a.seed;
  const SharingStrategy strategy = parse_strategy(a.strategy);
  const LabelSchema schema = LabelSchema::standard();
  const Dataset data = load_jsonl(a.data, schema);

  const std::string log_path = a.log.empty() ? a.checkpoint + ".log.jsonl" : a.log;
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw IoError("cannot write log " + log_path);

  std::optional<TrainedRun> trained;
  try {
    trained = train_run(data, strategy, config, config.train.seed,
                    [&](const EpochRecord& r) { log << to_json_line(r) << '\n' << std::flush; });
  } catch (const DivergedError& e) {
    err << "train: diverged at epoch " << e.epoch() << ", batch " << e.batch() << '\n';
    return kExitDiverged;
  }
  const TrainedRun& run = *trained;
  save_checkpoint(a.checkpoint, make_checkpoint(run.model, run.train_config, schema,
                                                run.data.vocabulary, run.training.threshold));

  ordered_json final;
  final["event"] = "final";
  final["strategy"] = std::string(cli_name(strategy));
  final["seed"] = config.train.seed;
  final["epochs"] = run.training.log.size();
  final["train_loss"] = run.training.final_train_loss;
  const auto& last = run.training.log.back();
  if (last.dev_weighted_f1) {
    final["dev_weighted_f1"] = *last.dev_weighted_f1;
  } else {
    final["dev_weighted_f1"] = nullptr;
  }
  final["threshold"] = run.training.threshold;
  final["checkpoint"] = a.checkpoint;
  log << final.dump() << '\n';
  out << final.dump() << '\n';
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const MultiTaskModel model = model_from_checkpoint(ckpt);
  const Dataset data = load_jsonl(a.data, ckpt.schema);

  Dataset part;
  if (a.split == "all") {
    part = data;
  } else {
    Splits s = split(data, ckpt.train_config.split, ckpt.train_config.seed);
    part = a.split == "train" ? s.train : a.split == "dev" ? s.dev : s.test;
  }
  encode_dataset(part, ckpt.vocabulary, static_cast<std::size_t>(ckpt.model_config.encoder.max_len));
  const TaskDataset examples = multitask_examples(part);
  const TaskEvaluation eval = evaluate_model(model, examples, ckpt.selected_threshold);

  ordered_json j;
  j["split"] = a.split;
  j["examples"] = examples.size();
  j["threshold"] = ckpt.selected_threshold;
  j["primary"] = metrics_json(eval.primary, ckpt.schema.primary_names, ckpt.selected_threshold);
  if (model.num_tasks() > 1) {
    j["aux"] = metrics_json(eval.aux, ckpt.schema.aux_names, kAuxThreshold);
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---- predict ---------------------------------------------------------------------

int cmd_predict(const std::string& checkpoint, const std::string& text, std::ostream& out,
                std::ostream& err) {
  if (text.empty()) {
    err << "predict: --text must not be empty\n";
    return kExitUsage;
  }
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const MultiTaskModel model = model_from_checkpoint(ckpt);
  const auto ids =
      ckpt.vocabulary.encode(text, static_cast<std::size_t>(ckpt.model_config.encoder.max_len));
  const auto probs = model.forward(ids);

  ordered_json j;
  j["text"] = text;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double threshold = t == 0 ? ckpt.selected_threshold : kAuxThreshold;
    const auto& names = task_names(ckpt.schema, t);
    const auto values = probs[t].values();
    ordered_json task;
    task["threshold"] = threshold;
    task["probabilities"] = ordered_json::array();
    for (std::size_t c = 0; c < values.size(); ++c) {
      task["probabilities"].push_back(
          {{"label", class_name(names, values.size(), c)}, {"probability", values[c]}});
    }
    task["labels"] = ordered_json::array();
    for (std::size_t c : predict_labels(values, threshold)) {
      task["labels"].push_back(class_name(names, values.size(), c));
    }
    j[ckpt.model_config.tasks[t].name] = std::move(task);
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::string> strategies;
  double eps = 1e-5;
  std::size_t batch = 3;
};

RunConfig small_gradcheck_config() {
  RunConfig c;
  c.encoder.num_layers = 2;
  c.encoder.hidden_dim = 8;
  c.encoder.num_heads = 2;
  c.encoder.ffn_dim = 16;
  c.encoder.max_len = 8;
  c.encoder.vocab_size = 16;
  c.encoder.tap_top_k = 2;
  c.proj_dim = 8;
  return c;
}

TaskDataset random_batch(const ModelConfig& config, std::size_t n, Rng& rng) {
  TaskDataset batch;
  const auto max_len = static_cast<std::uint64_t>(config.encoder.max_len);
  const auto vocab = static_cast<std::uint64_t>(config.encoder.vocab_size);
  for (std::size_t i = 0; i < n; ++i) {
    TaskExample ex;
    const std::size_t len = 2 + rng.below(max_len - 1);
    ex.ids.push_back(Vocabulary::kSeqStart);
    while (ex.ids.size() < len) {
      ex.ids.push_back(Vocabulary::kReserved + static_cast<int>(rng.below(vocab - Vocabulary::kReserved)));
    }
    for (const auto& task : config.tasks) {
      std::vector<double> y(task.num_classes);
      for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
      ex.targets.push_back(std::move(y));
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream&) {
  RunConfig config = small_gradcheck_config();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open config " + a.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + a.config + ": " + e.what());
    }
    update_from_json(config, j);
    if (config.encoder.vocab_size == 0) config.encoder.vocab_size = 16;
  }
  std::vector<SharingStrategy> strategies;
  for (const auto& s : a.strategies.empty() ? kStrategyNames : a.strategies) {
    strategies.push_back(parse_strategy(s));
  }
  GradCheckOptions options;
  options.eps = a.eps;

  bool all_passed = true;
  double worst = 0;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const ModelConfig mc = make_model_config(config, strategies[i], LabelSchema::standard(),
                                             static_cast<std::size_t>(config.encoder.vocab_size));
    const Rng root(a.seed);
    MultiTaskModel model = MultiTaskModel::create(mc, a.seed);
    Rng data_rng = root.split(1);
    const TaskDataset batch = random_batch(mc, a.batch, data_rng);
    const auto weights = config.train.loss_weights(mc.tasks.size());
    const GradCheckReport r = gradient_check(model, batch, weights, options);
    all_passed = all_passed && r.passed;
    worst = std::max(worst, r.max_rel_err);
    out << std::left << std::setw(13) << cli_name(strategies[i]) << (r.passed ? "PASS" : "FAIL")
        << "  max_rel_err=" << std::scientific << std::setprecision(3) << r.max_rel_err
        << "  max_abs_err=" << r.max_abs_err << "  worst=" << r.offending << '['
        << r.offending_index << "]\n"
        << std::defaultfloat;
  }
  out << "gradcheck " << (all_passed ? "PASS" : "FAIL") << "  max_rel_err=" << std::scientific
      << std::setprecision(3) << worst << std::defaultfloat << '\n';
  return all_passed ? kExitOk : kExitFailure;
}

// ---- compare ---------------------------------------------------------------------

struct CompareArgs {
  std::string data;
  std::size_t seeds = 10;
  std::uint64_t seed = 0;
  std::vector<std::string> strategies;
  std::string config;
  std::string out_json;
  std::size_t jobs = 1;
  TrainOverrides overrides;
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config = load_config_or_default(a.config);
  a.overrides.apply(config.train);
  std::vector<SharingStrategy> strategies;
  for (const auto& s : a.strategies.empty() ? kStrategyNames : a.strategies) {
    strategies.push_back(parse_strategy(s));
  }
  const Dataset data = load_jsonl(a.data, LabelSchema::standard());

  struct Job {
    SharingStrategy strategy;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto s : strategies) {
    for (std::size_t k = 0; k < a.seeds; ++k) jobs.push_back({s, a.seed + k});
  }
  std::vector<ExperimentResult> results(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_experiment(data, jobs[i].strategy, config, jobs[i].seed);
        std::lock_guard lock(log_mutex);
        err << "compare: " << cli_name(jobs[i].strategy) << " seed " << jobs[i].seed
            << " primary_f1=" << results[i].primary_weighted_f1
            << " aux_f1=" << results[i].aux_weighted_f1 << '\n';
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(a.jobs, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  ordered_json report;
  report["seeds"] = a.seeds;
  report["rows"] = ordered_json::array();
  out << std::left << std::setw(14) << "strategy" << std::setw(9) << "task" << std::setw(12)
      << "median_f1" << std::setw(12) << "iqr" << "seeds\n";
  for (const auto s : strategies) {
    for (const char* task : {"primary", "aux"}) {
      std::vector<double> f1;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].strategy != s) continue;
        f1.push_back(std::string_view(task) == "primary" ? results[i].primary_weighted_f1
                                                         : results[i].aux_weighted_f1);
      }
      const double med = median(f1);
      const double iqr = interquartile_range(f1);
      out << std::left << std::setw(14) << cli_name(s) << std::setw(9) << task << std::fixed
          << std::setprecision(6) << std::setw(12) << med << std::setw(12) << iqr
          << std::defaultfloat << f1.size() << '\n';
      report["rows"].push_back({{"strategy", std::string(cli_name(s))},
                                {"task", task},
                                {"median_weighted_f1", med},
                                {"iqr", iqr},
                                {"values", f1}});
    }
  }
  if (!a.out_json.empty()) {
    std::ofstream f(a.out_json, std::ios::binary);
    if (!f) throw IoError("cannot write " + a.out_json);
    f << report.dump(2) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Co-task aware multi-task learning toolkit", "cotask"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic JSONL corpus");
  c_synth->add_option("--n", synth.n, "Number of examples")->required()->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed, "Generator seed");
  c_synth->add_option("--out", synth.out, "Output JSONL path")->required();
  c_synth->add_option("--figurative-fraction", synth.spec.figurative_fraction,
                      "Fraction of depressive examples phrased figuratively");
  c_synth->add_option("--non-depressive-fraction", synth.spec.non_depressive_fraction,
                      "Fraction of examples without symptoms");
  c_synth->add_option("--multi-p", synth.spec.multi_p, "Probability of a second symptom");
  c_synth->add_flag("--force", synth.force, "Overwrite an existing file");

  TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  c_train->add_option("--data", train_args.data, "JSONL corpus")->required();
  c_train->add_option("--strategy", train_args.strategy, "stl, hard, cross-stitch or cotask")
      ->check(CLI::IsMember(kStrategyNames));
  c_train->add_option("--config", train_args.config, "JSON config file");
  c_train->add_option("--out-checkpoint", train_args.checkpoint, "Checkpoint path")->required();
  c_train->add_option("--seed", train_args.seed, "Seed for split, init and shuffling");
  c_train->add_option("--log", train_args.log, "Training log path");
  train_args.overrides.add_to(c_train);

  EvalArgs eval_args;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  c_eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint path")->required();
  c_eval->add_option("--data", eval_args.data, "JSONL corpus")->required();
  c_eval->add_option("--split", eval_args.split, "train, dev, test or all")
      ->check(CLI::IsMember({"train", "dev", "test", "all"}));

  std::string predict_checkpoint, predict_text;
  auto* c_predict = app.add_subcommand("predict", "Classify one text");
  c_predict->add_option("--checkpoint", predict_checkpoint, "Checkpoint path")->required();
  c_predict->add_option("--text", predict_text, "Input text")->required();

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Compare backprop with finite differences");
  c_grad->add_option("--config", grad.config, "JSON config file");
  c_grad->add_option("--seed", grad.seed, "Seed for weights and batch");
  c_grad->add_option("--strategy", grad.strategies, "Strategies to check (default: all)")
      ->check(CLI::IsMember(kStrategyNames));
  c_grad->add_option("--eps", grad.eps, "Central difference step")->check(CLI::PositiveNumber);
  c_grad->add_option("--batch", grad.batch, "Examples in the batch")->check(CLI::PositiveNumber);

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Train strategies over several seeds");
  c_cmp->add_option("--data", cmp.data, "JSONL corpus")->required();
  c_cmp->add_option("--seeds", cmp.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  c_cmp->add_option("--seed", cmp.seed, "First seed");
  c_cmp->add_option("--strategies", cmp.strategies, "Strategies to compare (default: all)")
      ->check(CLI::IsMember(kStrategyNames));
  c_cmp->add_option("--config", cmp.config, "JSON config file");
  c_cmp->add_option("--out", cmp.out_json, "Optional JSON report path");
  c_cmp->add_option("--jobs", cmp.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  cmp.overrides.add_to(c_cmp);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return kExitOk;
    }
    err << "cotask: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out, err);
    if (c_train->parsed()) return cmd_train(train_args, out, err);
    if (c_eval->parsed()) return cmd_eval(eval_args, out, err);
    if (c_predict->parsed()) return cmd_predict(predict_checkpoint, predict_text, out, err);
    if (c_grad->parsed()) return cmd_gradcheck(grad, out, err);
    if (c_cmp->parsed()) return cmd_compare(cmp, out, err);
  } catch (const DivergedError& e) {
    err << "cotask: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const IoError& e) {
    err << "cotask: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "cotask: " << e.what() << '\n';
    return kExitIo;
  } catch (const SchemaError& e) {
    err << "cotask: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "cotask: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cotask
