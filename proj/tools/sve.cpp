// Command-line surface: bundle generation, training, evaluation and
// interpretability analysis over checkpoints.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sve/checkpoint.hpp"
#include "sve/reports.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::string bundle;
  std::string out;
  std::string config_file;
  sve::TrainConfig config;
};

// precedence: CLI flags > config file > built-in defaults
void add_config_options(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON config file (unknown keys rejected)");
  cmd->add_option("--bundle", flags.bundle, "task bundle directory");
  cmd->add_option("--out", flags.out, "output directory");
  auto& c = flags.config;
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--lr", c.learning_rate, "learning rate");
  cmd->add_option("--weight-decay", c.weight_decay, "decoupled weight decay");
  cmd->add_option("--batch-size", c.batch_size, "examples per step");
  cmd->add_option("--max-steps", c.max_steps, "optimizer update budget");
  cmd->add_option("--eval-every", c.eval_every, "steps between validation evaluations");
  cmd->add_option("--patience", c.patience, "evaluations without improvement before stopping");
  cmd->add_option("--dropout", c.dropout, "dropout rate inside f/g1/g2");
  cmd->add_option("--embedding-dim", c.embedding_dim, "embedding dimension C");
  cmd->add_option("--shared-count", c.shared_count, "shared embedding count D");
  cmd->add_option("--latent-dim", c.latent_dim, "latent width H");
  cmd->add_option("--layers", c.layers, "layers per network");
  cmd->add_option("--init-std", c.init.std_dev, "embedding init standard deviation");
  cmd->add_option("--validation-fraction", c.validation_fraction,
                  "fraction of train carved for early stopping");
  cmd->add_option("--alpha", c.kernel.alpha.value, "entmax alpha (initial value)");
  cmd->add_flag("--learn-alpha", c.kernel.alpha.learnable, "treat alpha as a model parameter");
  cmd->add_option("--weight", c.regularizer.weight, "regularizer weight");
  cmd->add_option("--kernel", [&c](const std::vector<std::string>& v) {
        if (v[0] == "softmax") c.kernel.kind = sve::AttentionKernel::Kind::softmax;
        else if (v[0] == "entmax") c.kernel.kind = sve::AttentionKernel::Kind::entmax;
        else return false;
        return true;
      }, "attention kernel: softmax|entmax");
  cmd->add_option("--regularizer", [&c](const std::vector<std::string>& v) {
        c.regularizer.kind = sve::regularizer_from_name(v[0]);
        return true;
      }, "none|orthogonality|stable-rank|von-neumann");
  cmd->add_option("--init", [&c](const std::vector<std::string>& v) {
        if (v[0] == "gaussian") c.init.kind = sve::InitScheme::Kind::gaussian;
        else if (v[0] == "orthogonal") c.init.kind = sve::InitScheme::Kind::orthogonal_det_plus_one;
        else return false;
        return true;
      }, "embedding init scheme: gaussian|orthogonal");
}

// re-applies file values beneath any flags the user actually passed
void merge_config_file(CLI::App* cmd, TrainFlags& flags) {
  if (flags.config_file.empty()) return;
  std::ifstream in(flags.config_file);
  if (!in) throw std::runtime_error("cannot open config file " + flags.config_file);
  json file_json = json::parse(in);
  if (file_json.contains("bundle")) {
    if (cmd->count("--bundle") == 0) flags.bundle = file_json["bundle"].get<std::string>();
    file_json.erase("bundle");
  }
  if (file_json.contains("out")) {
    if (cmd->count("--out") == 0) flags.out = file_json["out"].get<std::string>();
    file_json.erase("out");
  }
  const sve::TrainConfig from_file = sve::config_from_json(file_json);  // strict keys
  json merged = sve::config_to_json(from_file);
  const json cli_values = sve::config_to_json(flags.config);
  static const std::map<std::string, std::string> flag_of_key = {
      {"lr", "--lr"}, {"weight_decay", "--weight-decay"}, {"batch_size", "--batch-size"},
      {"max_steps", "--max-steps"}, {"eval_every", "--eval-every"}, {"patience", "--patience"},
      {"seed", "--seed"}, {"init", "--init"}, {"init_std", "--init-std"},
      {"kernel", "--kernel"}, {"alpha", "--alpha"}, {"learn_alpha", "--learn-alpha"},
      {"regularizer", "--regularizer"}, {"weight", "--weight"}, {"dropout", "--dropout"},
      {"embedding_dim", "--embedding-dim"}, {"shared_count", "--shared-count"},
      {"latent_dim", "--latent-dim"}, {"layers", "--layers"},
      {"validation_fraction", "--validation-fraction"}};
  for (const auto& [key, flag] : flag_of_key)
    if (cmd->count(flag) > 0) merged[key] = cli_values.at(key);
  flags.config = sve::config_from_json(merged);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_generate(std::size_t tasks, std::size_t families, std::uint64_t seed,
                 std::size_t train_per_task, std::size_t test_per_task, const std::string& out,
                 bool force) {
  sve::Rng rng(seed);
  sve::SyntheticOptions options;
  options.train_per_task = train_per_task;
  options.test_per_task = test_per_task;
  const sve::TaskBundle bundle = sve::generate_synthetic(tasks, families, rng, options);
  sve::save_bundle(bundle, out, force);
  std::cout << "wrote bundle with " << bundle.tasks.size() << " tasks, " << bundle.total_inputs
            << " variables to " << out << "\n";
  return 0;
}

int cmd_train(CLI::App* cmd, TrainFlags& flags) {
  merge_config_file(cmd, flags);
  if (flags.bundle.empty()) throw std::runtime_error("train: --bundle is required");
  if (flags.out.empty()) throw std::runtime_error("train: --out is required");
  flags.config.validate();  // before any compute

  const sve::TaskBundle bundle =
      sve::load_bundle(flags.bundle, flags.config.seed, flags.config.validation_fraction);
  fs::create_directories(flags.out);

  std::ofstream steps(fs::path(flags.out) / "steps.jsonl");
  if (!steps) throw std::runtime_error("cannot write step log");
  auto logger = [&steps](const sve::StepInfo& info) {
    const json line = {{"step", info.step}, {"task_id", info.task_id}, {"loss", info.loss},
                       {"reg_value", info.reg_value}, {"alpha", info.alpha}};
    steps << line.dump() << "\n";
  };

  sve::FitResult result = sve::fit(bundle, flags.config, logger);

  sve::Checkpoint ckpt;
  ckpt.config = flags.config;
  ckpt.model = result.best_model;
  ckpt.step = result.best_step;
  ckpt.rng = result.state.rng;
  ckpt.tasks = sve::task_signatures(bundle);
  sve::save_checkpoint(fs::path(flags.out) / "best.ckpt", ckpt);

  json report = sve::to_json(result.test_report);
  report["best_step"] = result.best_step;
  report["best_validation_accuracy"] = result.state.best_validation_accuracy;
  report["steps_run"] = result.state.step;
  write_text(fs::path(flags.out) / "report.json", report.dump(2) + "\n");

  std::cout << "best step " << result.best_step << ", test accuracy (unweighted mean) "
            << result.test_report.mean_accuracy_unweighted << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& bundle_path,
             const std::string& out) {
  const sve::Checkpoint ckpt = sve::load_checkpoint(checkpoint_path);
  const sve::TaskBundle bundle =
      sve::load_bundle(bundle_path, ckpt.config.seed, ckpt.config.validation_fraction);
  sve::check_compatible(ckpt, bundle);
  const sve::EvalReport report = sve::evaluate(bundle, ckpt.model, sve::Split::test);

  fs::create_directories(out);
  write_text(fs::path(out) / "eval_report.json", sve::to_json(report).dump(2) + "\n");
  std::ofstream csv(fs::path(out) / "per_task.csv");
  csv << "task_id,name,test_examples,accuracy\n";
  for (const auto& [task, acc] : report.per_task_accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", acc);
    csv << task << "," << bundle.tasks[task].spec.name << ","
        << bundle.tasks[task].test.size() << "," << buf << "\n";
  }
  std::cout << "test accuracy: unweighted mean " << report.mean_accuracy_unweighted
            << ", example-weighted " << report.mean_accuracy_example_weighted << "\n";
  return 0;
}

int cmd_analyze(const std::string& checkpoint_path, const std::string& bundle_path,
                const std::string& out, std::size_t trials, std::size_t top_k,
                double sharing_threshold, std::uint64_t seed) {
  const sve::Checkpoint ckpt = sve::load_checkpoint(checkpoint_path);
  const sve::TaskBundle bundle =
      sve::load_bundle(bundle_path, ckpt.config.seed, ckpt.config.validation_fraction);
  sve::check_compatible(ckpt, bundle);
  if (trials > ckpt.model.store.shared_count())
    throw std::runtime_error("analyze: --trials exceeds the shared embedding count");

  sve::Rng trial_rng(sve::derive_seed(seed, 10));
  sve::Rng baseline_rng(sve::derive_seed(seed, 11));
  const auto trial_reports = sve::run_trials(ckpt.model.store, bundle, ckpt.model.kernel, trials,
                                             top_k, trial_rng);
  const auto baseline_reports = sve::random_baseline(bundle, trials, top_k, baseline_rng);
  const auto sharing = sve::sharing_report(ckpt.model.store, bundle, ckpt.model.kernel,
                                           sharing_threshold, 5);
  const double stable_rank = sve::stable_rank_report(ckpt.model.store);

  fs::create_directories(out);
  json analysis;
  analysis["stable_rank"] = stable_rank;
  analysis["trials"] = sve::to_json(trial_reports);
  analysis["trial_aggregates"] = sve::to_json(sve::aggregate_trials(trial_reports));
  analysis["random_baseline"] = sve::to_json(baseline_reports);
  analysis["baseline_aggregates"] = sve::to_json(sve::aggregate_trials(baseline_reports));
  analysis["sharing"] = sve::to_json(sharing);
  write_text(fs::path(out) / "analysis.json", analysis.dump(2) + "\n");
  write_text(fs::path(out) / "trials.txt", sve::render_trials_table(trial_reports));
  write_text(fs::path(out) / "baseline.txt", sve::render_trials_table(baseline_reports));
  write_text(fs::path(out) / "sharing.txt", sve::render_sharing_table(sharing, bundle));
  std::cout << "stable rank of S: " << stable_rank << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shared variable embeddings: multi-task tabular prediction"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a synthetic task bundle");
  std::size_t gen_tasks = 6, gen_families = 2, train_per_task = 500, test_per_task = 150;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  bool force = false;
  generate->add_option("--tasks", gen_tasks, "number of tasks");
  generate->add_option("--families", gen_families, "number of concept families");
  generate->add_option("--seed", gen_seed, "generator seed");
  generate->add_option("--train-per-task", train_per_task, "train examples per task");
  generate->add_option("--test-per-task", test_per_task, "test examples per task");
  generate->add_flag("--force", force, "overwrite a non-empty output directory");
  generate->add_option("out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model on a bundle");
  TrainFlags train_flags;
  add_config_options(train, train_flags);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a bundle's test split");
  std::string eval_ckpt, eval_bundle, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--bundle", eval_bundle, "task bundle directory")->required();
  eval->add_option("--out", eval_out, "output directory")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "interpretability reports for a checkpoint");
  std::string ana_ckpt, ana_bundle, ana_out;
  std::size_t trials = 5, top_k = 5;
  double sharing_threshold = 0.1;
  std::uint64_t ana_seed = 0;
  analyze->add_option("--checkpoint", ana_ckpt, "checkpoint file")->required();
  analyze->add_option("--bundle", ana_bundle, "task bundle directory")->required();
  analyze->add_option("--out", ana_out, "output directory")->required();
  analyze->add_option("--trials", trials, "number of sampled shared embeddings");
  analyze->add_option("--k", top_k, "variables per trial");
  analyze->add_option("--sharing-threshold", sharing_threshold, "attention probability cutoff");
  analyze->add_option("--seed", ana_seed, "analysis seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return cmd_generate(gen_tasks, gen_families, gen_seed, train_per_task, test_per_task,
                          gen_out, force);
    if (train->parsed()) return cmd_train(train, train_flags);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_bundle, eval_out);
    if (analyze->parsed())
      return cmd_analyze(ana_ckpt, ana_bundle, ana_out, trials, top_k, sharing_threshold,
                         ana_seed);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 1;
}
