#pragma once

#include <functional>
#include <limits>
#include <map>

#include "sve/predictor.hpp"
#include "sve/regularizers.hpp"
#include "sve/shared_embeddings.hpp"
#include "sve/task_data.hpp"

namespace sve {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_steps = 5000;
  std::size_t eval_every = 100;
  std::size_t patience = 20;  // evaluations without improvement
  std::uint64_t seed = 0;
  InitScheme init;
  AttentionKernel kernel;
  RegularizerConfig regularizer;
  double dropout = 0.0;
  std::size_t embedding_dim = 128;  // C
  std::size_t shared_count = 128;   // D
  std::size_t latent_dim = 128;     // H
  std::size_t layers = 10;          // per network
  double validation_fraction = 0.15;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
    if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout in [0, 1)");
  }
};

// Everything that learns: the embedding store, the networks, and (when
// learnable) the entmax alpha inside the kernel.
struct Model {
  EmbeddingStore store;
  PredictorParams params;
  AttentionKernel kernel;
};

struct TrainState {
  std::size_t step = 0;
  double best_validation_accuracy = -std::numeric_limits<double>::infinity();
  std::size_t evals_since_improvement = 0;
  Rng rng;
  std::array<double, 256> loss_history{};  // ring of recent step losses
  std::size_t loss_count = 0;

  void record_loss(double loss) { loss_history[loss_count++ % loss_history.size()] = loss; }
};

struct EvalReport {
  std::map<std::size_t, double> per_task_accuracy;
  double mean_accuracy_unweighted = 0.0;
  double mean_accuracy_example_weighted = 0.0;
  std::size_t step = 0;
};

struct StepInfo {
  std::size_t step = 0;
  std::size_t task_id = 0;
  double loss = 0.0;       // batch mean data loss + regularizer term
  double reg_value = 0.0;  // regularizer term alone
  double alpha = 0.0;      // kernel alpha after the update
};

struct HingeResult {
  double value = 0.0;
  std::vector<double> grad_scores;
};

// L(y_hat, t) = sum_j max(0, 1 - t_j y_hat_j)^2 over a +1/-1 encoding.
inline HingeResult hinge_loss(const std::vector<double>& scores,
                              const std::vector<double>& encoding) {
  if (scores.size() != encoding.size())
    throw std::invalid_argument("hinge_loss: length mismatch");
  HingeResult r;
  r.grad_scores.assign(scores.size(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double slack = std::max(0.0, 1.0 - encoding[j] * scores[j]);
    r.value += slack * slack;
    r.grad_scores[j] = -2.0 * encoding[j] * slack;
  }
  return r;
}

namespace detail {

inline void accumulate(PredictorParams& into, const PredictorParams& g) {
  auto add = [](auto& a, const auto& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  for (std::size_t l = 0; l < into.encoder_f.size(); ++l) {
    add(into.encoder_f[l].weight.data, g.encoder_f[l].weight.data);
    add(into.encoder_f[l].bias, g.encoder_f[l].bias);
    add(into.encoder_f[l].gamma_map.data, g.encoder_f[l].gamma_map.data);
    add(into.encoder_f[l].beta_map.data, g.encoder_f[l].beta_map.data);
  }
  for (std::size_t l = 0; l < into.decoder_g1.size(); ++l) {
    add(into.decoder_g1[l].weight.data, g.decoder_g1[l].weight.data);
    add(into.decoder_g1[l].bias, g.decoder_g1[l].bias);
  }
  for (std::size_t l = 0; l < into.decoder_g2.size(); ++l) {
    add(into.decoder_g2[l].weight.data, g.decoder_g2[l].weight.data);
    add(into.decoder_g2[l].bias, g.decoder_g2[l].bias);
    add(into.decoder_g2[l].gamma_map.data, g.decoder_g2[l].gamma_map.data);
    add(into.decoder_g2[l].beta_map.data, g.decoder_g2[l].beta_map.data);
  }
  add(into.head.weight.data, g.head.weight.data);
  add(into.head.bias, g.head.bias);
}

// p <- p - lr (g + wd p); pass wd = 0 for bias-like groups.
inline void sgd_update(std::vector<double>& p, const std::vector<double>& g, double lr,
                       double wd) {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (g[i] + wd * p[i]);
}

inline void sgd_decay_only(std::vector<double>& p, double lr, double wd) {
  if (wd == 0.0) return;
  const double factor = 1.0 - lr * wd;
  for (double& v : p) v *= factor;
}

}  // namespace detail

inline std::vector<std::size_t> task_input_rows(const TaskBundle& bundle, std::size_t task) {
  std::vector<std::size_t> rows(bundle.tasks[task].spec.n_inputs);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = bundle.global_input_index(task, i);
  return rows;
}

inline std::vector<std::size_t> task_target_rows(const TaskBundle& bundle, std::size_t task) {
  std::vector<std::size_t> rows(bundle.tasks[task].spec.n_classes);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = bundle.global_target_index(task, i);
  return rows;
}

// One optimizer update: sample a task and a batch, forward through attention
// and the predictor, batch-mean squared hinge plus the regularizer term
// (added once; it depends only on S), then a single decoupled-decay SGD step.
// Weight decay applies to network weights, Z, Z_out and S; not to biases or
// alpha.
inline StepInfo train_step(TrainState& state, const TaskBundle& bundle, Model& model,
                           const TrainConfig& config) {
  const TaskBatch batch = sample_step(bundle, state.rng, config.batch_size);
  const std::size_t task = batch.task_id;
  const std::vector<std::size_t> rows = task_input_rows(bundle, task);
  const std::vector<std::size_t> targets = task_target_rows(bundle, task);
  const std::size_t m = targets.size();

  const ProcessedEmbeddings fwd = attend(model.store, rows, model.kernel);

  PredictorParams param_grads = zeros_like(model.params);
  Matrix d_f(rows.size(), model.store.embedding_dim());
  Matrix d_targets(m, model.store.embedding_dim());
  const double inv_batch = 1.0 / static_cast<double>(batch.samples.size());

  double data_loss = 0.0;
  DropoutMode mode{true, &state.rng};
  ForwardTrace trace;
  for (const Sample& sample : batch.samples) {
    const std::vector<double> scores =
        predict(model.params, fwd.F, model.store.Z_out, targets, sample.values, mode, &trace);
    const std::vector<double> encoding = encode_target(sample.label, m);
    HingeResult hinge = hinge_loss(scores, encoding);
    data_loss += hinge.value;
    for (double& g : hinge.grad_scores) g *= inv_batch;
    const PredictGrads grads = predict_backward(model.params, trace, hinge.grad_scores);
    detail::accumulate(param_grads, grads.params);
    for (std::size_t i = 0; i < d_f.data.size(); ++i)
      d_f.data[i] += grads.grad_embeddings.data[i];
    for (std::size_t i = 0; i < d_targets.data.size(); ++i)
      d_targets.data[i] += grads.grad_targets.data[i];
  }
  data_loss *= inv_batch;

  const AttendGrads attn = attend_backward(model.store, model.kernel, fwd, d_f);
  const PenaltyResult reg = regularizer_term(config.regularizer, model.store.S);
  const double total_loss = data_loss + reg.value;
  if (!std::isfinite(total_loss))
    throw std::runtime_error("train_step: non-finite loss at step " +
                             std::to_string(state.step + 1) + " (task " + std::to_string(task) +
                             ", data " + std::to_string(data_loss) + ", reg " +
                             std::to_string(reg.value) + ")");

  const double lr = config.learning_rate;
  const double wd = config.weight_decay;

  for (std::size_t l = 0; l < model.params.encoder_f.size(); ++l) {
    auto& p = model.params.encoder_f[l];
    const auto& g = param_grads.encoder_f[l];
    detail::sgd_update(p.weight.data, g.weight.data, lr, wd);
    detail::sgd_update(p.bias, g.bias, lr, 0.0);
    detail::sgd_update(p.gamma_map.data, g.gamma_map.data, lr, wd);
    detail::sgd_update(p.beta_map.data, g.beta_map.data, lr, wd);
  }
  for (std::size_t l = 0; l < model.params.decoder_g1.size(); ++l) {
    detail::sgd_update(model.params.decoder_g1[l].weight.data,
                       param_grads.decoder_g1[l].weight.data, lr, wd);
    detail::sgd_update(model.params.decoder_g1[l].bias, param_grads.decoder_g1[l].bias, lr, 0.0);
  }
  for (std::size_t l = 0; l < model.params.decoder_g2.size(); ++l) {
    auto& p = model.params.decoder_g2[l];
    const auto& g = param_grads.decoder_g2[l];
    detail::sgd_update(p.weight.data, g.weight.data, lr, wd);
    detail::sgd_update(p.bias, g.bias, lr, 0.0);
    detail::sgd_update(p.gamma_map.data, g.gamma_map.data, lr, wd);
    detail::sgd_update(p.beta_map.data, g.beta_map.data, lr, wd);
  }
  detail::sgd_update(model.params.head.weight.data, param_grads.head.weight.data, lr, wd);
  detail::sgd_update(model.params.head.bias, param_grads.head.bias, lr, 0.0);

  // embeddings: touched rows take their gradient, every row decays
  std::vector<bool> touched(model.store.Z.rows, false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    touched[rows[i]] = true;
    auto z = model.store.Z.row(rows[i]);
    const auto g = attn.grad_z_rows.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= lr * (g[j] + wd * z[j]);
  }
  for (std::size_t r = 0; r < model.store.Z.rows; ++r) {
    if (touched[r]) continue;
    auto z = model.store.Z.row(r);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= lr * wd * z[j];
  }
  std::vector<bool> touched_out(model.store.Z_out.rows, false);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    touched_out[targets[i]] = true;
    auto z = model.store.Z_out.row(targets[i]);
    const auto g = d_targets.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= lr * (g[j] + wd * z[j]);
  }
  for (std::size_t r = 0; r < model.store.Z_out.rows; ++r) {
    if (touched_out[r]) continue;
    auto z = model.store.Z_out.row(r);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= lr * wd * z[j];
  }
  for (std::size_t i = 0; i < model.store.S.data.size(); ++i)
    model.store.S.data[i] -=
        lr * (attn.grad_s.data[i] + reg.grad.data[i] + wd * model.store.S.data[i]);

  if (model.kernel.kind == AttentionKernel::Kind::entmax && model.kernel.alpha.learnable) {
    double a = model.kernel.alpha.value - lr * attn.grad_alpha;
    model.kernel.alpha.value = std::clamp(a, kAlphaMin, kAlphaMax);
  }

  ++state.step;
  state.record_loss(total_loss);
  return {state.step, task, total_loss, reg.value, model.kernel.alpha.value};
}

enum class Split { validation, test };

// Per-task accuracy on the chosen split, dropout disabled. Tasks whose split
// is empty are skipped; an entirely empty split is an error.
inline EvalReport evaluate(const TaskBundle& bundle, const Model& model, Split split) {
  EvalReport report;
  DropoutMode mode{};  // eval
  std::size_t total_correct = 0, total_count = 0;
  for (std::size_t t = 0; t < bundle.tasks.size(); ++t) {
    const auto& samples =
        split == Split::validation ? bundle.tasks[t].validation : bundle.tasks[t].test;
    if (samples.empty()) continue;
    const std::vector<std::size_t> rows = task_input_rows(bundle, t);
    const std::vector<std::size_t> targets = task_target_rows(bundle, t);
    const ProcessedEmbeddings fwd = attend(model.store, rows, model.kernel);
    std::size_t correct = 0;
    for (const Sample& s : samples) {
      const std::vector<double> scores =
          predict(model.params, fwd.F, model.store.Z_out, targets, s.values, mode);
      std::size_t arg = 0;
      for (std::size_t j = 1; j < scores.size(); ++j)
        if (scores[j] > scores[arg]) arg = j;
      if (arg == s.label) ++correct;
    }
    report.per_task_accuracy[t] =
        static_cast<double>(correct) / static_cast<double>(samples.size());
    total_correct += correct;
    total_count += samples.size();
  }
  if (report.per_task_accuracy.empty()) throw std::domain_error("evaluate: empty split");
  double sum = 0.0;
  for (const auto& [task, acc] : report.per_task_accuracy) sum += acc;
  report.mean_accuracy_unweighted = sum / static_cast<double>(report.per_task_accuracy.size());
  report.mean_accuracy_example_weighted =
      static_cast<double>(total_correct) / static_cast<double>(total_count);
  return report;
}

struct FitResult {
  Model best_model;
  EvalReport test_report;  // of the best checkpoint
  TrainState state;
  std::size_t best_step = 0;
  std::vector<EvalReport> validation_history;
};

using StepLogger = std::function<void(const StepInfo&)>;

// Full optimization: periodic validation, best-checkpoint tracking, stop on
// patience evaluations without improvement or at max_steps. Early stopping
// watches the unweighted validation mean.
inline FitResult fit(const TaskBundle& bundle, const TrainConfig& config,
                     const StepLogger& logger = {}) {
  config.validate();
  Rng init_rng(derive_seed(config.seed, 1));

  Model model;
  model.store = init_store(bundle, config.embedding_dim, config.shared_count, config.init,
                           init_rng);
  model.params = init_predictor(config.embedding_dim, config.latent_dim, config.layers,
                                config.dropout, init_rng);
  model.kernel = config.kernel;

  FitResult result;
  result.state.rng = Rng(derive_seed(config.seed, 2));
  result.best_model = model;

  bool has_validation = false;
  for (const auto& t : bundle.tasks)
    if (!t.validation.empty()) has_validation = true;

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    const StepInfo info = train_step(result.state, bundle, model, config);
    if (logger) logger(info);
    if (has_validation && step % config.eval_every == 0) {
      EvalReport rep = evaluate(bundle, model, Split::validation);
      rep.step = step;
      result.validation_history.push_back(rep);
      if (rep.mean_accuracy_unweighted > result.state.best_validation_accuracy) {
        result.state.best_validation_accuracy = rep.mean_accuracy_unweighted;
        result.state.evals_since_improvement = 0;
        result.best_model = model;
        result.best_step = step;
      } else {
        ++result.state.evals_since_improvement;
        if (result.state.evals_since_improvement >= config.patience) break;
      }
    }
  }
  result.test_report = evaluate(bundle, result.best_model, Split::test);
  result.test_report.step = result.best_step;
  return result;
}

}  // namespace sve
