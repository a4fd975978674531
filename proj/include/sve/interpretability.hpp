#pragma once

#include <map>
#include <optional>
#include <set>

#include "sve/shared_embeddings.hpp"
#include "sve/regularizers.hpp"
#include "sve/task_data.hpp"

namespace sve {

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero vector");
  return dot(a, b) / (na * nb);
}

struct SimilarityRecord {
  std::size_t task_id = 0;
  std::size_t input_position = 0;
  std::size_t global_row = 0;
  std::string dataset;
  std::string subject_area;
  std::string description;            // variable meaning, when the bundle has one
  std::optional<double> cosine;       // absent for the random baseline
};

struct TrialReport {
  std::size_t shared_index = 0;
  std::vector<SimilarityRecord> records;  // descending cosine
  std::string dominant_sa;
  std::size_t dominant_count = 0;
  std::size_t n_subject_areas = 0;
  std::size_t n_distinct_datasets = 0;
};

namespace detail {

inline void fill_sa_stats(TrialReport& trial) {
  std::map<std::string, std::size_t> by_sa;
  std::set<std::string> datasets;
  for (const auto& r : trial.records) {
    ++by_sa[r.subject_area];
    datasets.insert(r.dataset);
  }
  trial.n_subject_areas = by_sa.size();
  trial.n_distinct_datasets = datasets.size();
  trial.dominant_count = 0;
  for (const auto& [sa, count] : by_sa) {
    if (count > trial.dominant_count) {  // ties keep the lexicographically first
      trial.dominant_count = count;
      trial.dominant_sa = sa;
    }
  }
}

inline SimilarityRecord make_record(const TaskBundle& bundle, std::size_t global_row) {
  const auto [task, position] = bundle.variable_of_input_row(global_row);
  SimilarityRecord rec;
  rec.task_id = task;
  rec.input_position = position;
  rec.global_row = global_row;
  rec.dataset = bundle.tasks[task].spec.name;
  rec.subject_area = bundle.tasks[task].spec.subject_area;
  const auto& descriptions = bundle.tasks[task].spec.variable_descriptions;
  if (position < descriptions.size()) rec.description = descriptions[position];
  return rec;
}

}  // namespace detail

// Processed embeddings for all N observed variables (one full attention
// pass); rarely needed more than once per analysis, so callers can reuse it.
inline ProcessedEmbeddings attend_all(const EmbeddingStore& store, const TaskBundle& bundle,
                                      const AttentionKernel& kernel) {
  std::vector<std::size_t> rows(bundle.total_inputs);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return attend(store, rows, kernel);
}

// Top-K variables whose processed embeddings are most similar (cosine) to
// shared embedding k, with Subject-Area statistics. Rank ties break on the
// global variable index.
inline TrialReport top_k_similar(const EmbeddingStore& store, const TaskBundle& bundle,
                                 const AttentionKernel& kernel, std::size_t shared_index,
                                 std::size_t top_k, const ProcessedEmbeddings* all = nullptr) {
  if (shared_index >= store.shared_count())
    throw std::domain_error("top_k_similar: shared index out of range");
  if (top_k < 1) throw std::domain_error("top_k_similar: K must be >= 1");
  ProcessedEmbeddings local;
  if (!all) {
    local = attend_all(store, bundle, kernel);
    all = &local;
  }
  const auto s = store.S.row(shared_index);
  std::vector<std::pair<double, std::size_t>> ranked;  // (cosine, global row)
  ranked.reserve(bundle.total_inputs);
  for (std::size_t i = 0; i < bundle.total_inputs; ++i)
    ranked.emplace_back(cosine(s, all->F.row(i)), i);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  TrialReport trial;
  trial.shared_index = shared_index;
  const std::size_t k = std::min(top_k, ranked.size());
  for (std::size_t i = 0; i < k; ++i) {
    SimilarityRecord rec = detail::make_record(bundle, ranked[i].second);
    rec.cosine = ranked[i].first;
    trial.records.push_back(std::move(rec));
  }
  detail::fill_sa_stats(trial);
  return trial;
}

// Shared indices sampled without replacement, one report each.
inline std::vector<TrialReport> run_trials(const EmbeddingStore& store, const TaskBundle& bundle,
                                           const AttentionKernel& kernel, std::size_t n_trials,
                                           std::size_t top_k, Rng& rng) {
  const std::size_t d = store.shared_count();
  if (n_trials > d) throw std::domain_error("run_trials: n_trials exceeds shared count");
  std::vector<std::size_t> indices(d);
  for (std::size_t i = 0; i < d; ++i) indices[i] = i;
  for (std::size_t i = 0; i < n_trials; ++i)
    std::swap(indices[i], indices[i + rng.uniform_index(d - i)]);
  const ProcessedEmbeddings all = attend_all(store, bundle, kernel);
  std::vector<TrialReport> trials;
  trials.reserve(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i)
    trials.push_back(top_k_similar(store, bundle, kernel, indices[i], top_k, &all));
  return trials;
}

// Same Subject-Area bookkeeping over uniformly sampled variables (without
// replacement within a trial); no similarity values.
inline std::vector<TrialReport> random_baseline(const TaskBundle& bundle, std::size_t n_trials,
                                                std::size_t top_k, Rng& rng) {
  if (top_k > bundle.total_inputs)
    throw std::domain_error("random_baseline: K exceeds variable count");
  std::vector<TrialReport> trials;
  trials.reserve(n_trials);
  std::vector<std::size_t> pool(bundle.total_inputs);
  for (std::size_t trial_idx = 0; trial_idx < n_trials; ++trial_idx) {
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    TrialReport trial;
    trial.shared_index = trial_idx;
    for (std::size_t i = 0; i < top_k; ++i) {
      std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
      trial.records.push_back(detail::make_record(bundle, pool[i]));
    }
    detail::fill_sa_stats(trial);
    trials.push_back(std::move(trial));
  }
  return trials;
}

struct TrialAggregates {
  double majority_rate = 0.0;      // trials whose dominant SA holds > K/2 records
  double mean_sa_count = 0.0;
  double mean_dominant_purity = 0.0;  // dominant count / K
};

inline TrialAggregates aggregate_trials(const std::vector<TrialReport>& trials) {
  TrialAggregates agg;
  if (trials.empty()) return agg;
  for (const auto& t : trials) {
    const std::size_t k = t.records.size();
    if (2 * t.dominant_count > k) agg.majority_rate += 1.0;
    agg.mean_sa_count += static_cast<double>(t.n_subject_areas);
    agg.mean_dominant_purity += static_cast<double>(t.dominant_count) / static_cast<double>(k);
  }
  const double n = static_cast<double>(trials.size());
  agg.majority_rate /= n;
  agg.mean_sa_count /= n;
  agg.mean_dominant_purity /= n;
  return agg;
}

struct SharingEntry {
  std::size_t shared_index = 0;
  std::size_t task_count = 0;
  std::vector<std::pair<std::size_t, double>> top_tasks;  // (task, max attention prob)
};

struct SharingReport {
  double threshold = 0.1;
  std::vector<std::size_t> task_counts;  // per shared embedding
  std::vector<SharingEntry> top;
};

// Per (task, shared embedding) pair take the max attention probability over
// the task's variables; a shared embedding is "shared with" a task when that
// max exceeds the threshold. Reports the top_n most-shared embeddings, each
// with its top_n tasks by score.
inline SharingReport sharing_report(const EmbeddingStore& store, const TaskBundle& bundle,
                                    const AttentionKernel& kernel, double threshold,
                                    std::size_t top_n) {
  if (!(threshold > 0.0))
    throw std::domain_error("sharing_report: threshold must be positive");
  // threshold >= 1 is allowed and yields all-zero counts (probabilities <= 1,
  // comparison is strict)
  const ProcessedEmbeddings all = attend_all(store, bundle, kernel);
  const std::size_t d = store.shared_count();
  const std::size_t n_tasks = bundle.tasks.size();

  Matrix task_max(n_tasks, d);  // max attention prob per (task, shared)
  for (std::size_t row = 0; row < bundle.total_inputs; ++row) {
    const std::size_t task = bundle.variable_of_input_row(row).first;
    for (std::size_t k = 0; k < d; ++k)
      task_max(task, k) = std::max(task_max(task, k), all.attention_probs(row, k));
  }

  SharingReport report;
  report.threshold = threshold;
  report.task_counts.assign(d, 0);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t t = 0; t < n_tasks; ++t)
      if (task_max(t, k) > threshold) ++report.task_counts[k];

  std::vector<std::size_t> order(d);
  for (std::size_t k = 0; k < d; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.task_counts[a] != report.task_counts[b])
      return report.task_counts[a] > report.task_counts[b];
    return a < b;
  });
  for (std::size_t i = 0; i < std::min(top_n, d); ++i) {
    const std::size_t k = order[i];
    SharingEntry entry;
    entry.shared_index = k;
    entry.task_count = report.task_counts[k];
    std::vector<std::size_t> tasks(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) tasks[t] = t;
    std::sort(tasks.begin(), tasks.end(), [&](std::size_t a, std::size_t b) {
      if (task_max(a, k) != task_max(b, k)) return task_max(a, k) > task_max(b, k);
      return a < b;
    });
    for (std::size_t t = 0; t < std::min(top_n, n_tasks); ++t)
      entry.top_tasks.emplace_back(tasks[t], task_max(tasks[t], k));
    report.top.push_back(std::move(entry));
  }
  return report;
}

// sr(S) of the trained shared matrix.
inline double stable_rank_report(const EmbeddingStore& store) {
  const SpectralNormResult top = spectral_norm(store.S);  // rejects zero S
  return frobenius_norm_squared(store.S) / (top.value * top.value);
}

}  // namespace sve
