#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sve/matrix.hpp"

namespace sve {

// The 11 UCI Subject Areas. Synthetic bundles reuse the same names as
// concept-family labels so the field stays inside the closed set.
inline const std::array<std::string, 11>& subject_areas() {
  static const std::array<std::string, 11> areas = {
      "Biology",       "Business",           "Climate and Environment",
      "Computer Science", "Engineering",     "Games",
      "Health and Medicine", "Law",          "Physics and Chemistry",
      "Social Sciences", "Other"};
  return areas;
}

inline bool is_subject_area(const std::string& s) {
  const auto& areas = subject_areas();
  return std::find(areas.begin(), areas.end(), s) != areas.end();
}

struct TaskSpec {
  std::size_t task_id = 0;
  std::string name;
  std::string subject_area;
  std::size_t n_inputs = 0;   // n_t
  std::size_t n_classes = 0;  // m_t
  std::vector<std::string> variable_descriptions;  // optional, per input
};

struct Sample {
  std::vector<double> values;  // length n_inputs
  std::size_t label = 0;       // < n_classes
};

struct TaskData {
  TaskSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

// Disjoint tasks with contiguous global row blocks, assigned in manifest
// order: task t's inputs occupy rows [input_offset[t], input_offset[t]+n_t)
// of Z and its classes the matching block of the target matrix.
struct TaskBundle {
  std::vector<TaskData> tasks;
  std::vector<std::size_t> input_offset;
  std::vector<std::size_t> target_offset;
  std::size_t total_inputs = 0;   // N
  std::size_t total_targets = 0;  // sum of m_t

  std::size_t global_input_index(std::size_t task, std::size_t position) const {
    return input_offset[task] + position;
  }
  std::size_t global_target_index(std::size_t task, std::size_t cls) const {
    return target_offset[task] + cls;
  }
  // inverse of global_input_index
  std::pair<std::size_t, std::size_t> variable_of_input_row(std::size_t row) const {
    const auto it = std::upper_bound(input_offset.begin(), input_offset.end(), row);
    const std::size_t task = static_cast<std::size_t>(it - input_offset.begin()) - 1;
    return {task, row - input_offset[task]};
  }

  void rebuild_offsets() {
    input_offset.clear();
    target_offset.clear();
    total_inputs = 0;
    total_targets = 0;
    for (const auto& t : tasks) {
      input_offset.push_back(total_inputs);
      target_offset.push_back(total_targets);
      total_inputs += t.spec.n_inputs;
      total_targets += t.spec.n_classes;
    }
  }
};

// +1 at the label, -1 elsewhere.
inline std::vector<double> encode_target(std::size_t label, std::size_t m) {
  if (label >= m) throw std::domain_error("encode_target: label out of range");
  std::vector<double> t(m, -1.0);
  t[label] = 1.0;
  return t;
}

struct TaskBatch {
  std::size_t task_id = 0;
  std::vector<Sample> samples;
};

// One training draw: a task uniform over tasks, then examples uniform with
// replacement from that task's train split.
inline TaskBatch sample_step(const TaskBundle& bundle, Rng& rng, std::size_t batch_size) {
  if (bundle.tasks.empty()) throw std::domain_error("sample_step: empty bundle");
  if (batch_size < 1) throw std::domain_error("sample_step: batch_size must be >= 1");
  TaskBatch batch;
  batch.task_id = rng.uniform_index(bundle.tasks.size());
  const auto& train = bundle.tasks[batch.task_id].train;
  if (train.empty()) throw std::domain_error("sample_step: task has empty train split");
  batch.samples.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    batch.samples.push_back(train[rng.uniform_index(train.size())]);
  return batch;
}

namespace detail {

inline std::runtime_error load_error(const std::string& task, std::size_t row,
                                     const std::string& what) {
  return std::runtime_error("bundle load: task '" + task + "' row " +
                            std::to_string(row) + ": " + what);
}

inline double parse_cell(const std::string& cell, const std::string& task, std::size_t row) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  while (ptr != last && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw load_error(task, row, "non-numeric cell '" + cell + "'");
  return value;
}

inline std::vector<Sample> read_csv(const std::filesystem::path& file, const TaskSpec& spec,
                                    bool has_header) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("bundle load: task '" + spec.name + "': missing file " +
                                    file.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t row = 0;
  bool skipped_header = !has_header;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != spec.n_inputs + 1)
      throw load_error(spec.name, row,
                       "arity mismatch: expected " + std::to_string(spec.n_inputs) +
                           " features + label, got " + std::to_string(cells.size()) + " cells");
    Sample s;
    s.values.reserve(spec.n_inputs);
    for (std::size_t i = 0; i < spec.n_inputs; ++i)
      s.values.push_back(parse_cell(cells[i], spec.name, row));
    const double label_value = parse_cell(cells.back(), spec.name, row);
    if (label_value != std::floor(label_value) || label_value < 0.0 ||
        label_value >= static_cast<double>(spec.n_classes))
      throw load_error(spec.name, row, "label out of range: " + cells.back());
    s.label = static_cast<std::size_t>(label_value);
    samples.push_back(std::move(s));
  }
  return samples;
}

// Stratified carve of `fraction` of the samples, per label, seeded.
inline void split_validation(std::vector<Sample>& train, std::vector<Sample>& validation,
                             std::size_t n_classes, double fraction, Rng& rng) {
  if (fraction <= 0.0) return;
  std::vector<std::vector<std::size_t>> by_label(n_classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_label[train[i].label].push_back(i);
  std::vector<bool> to_validation(train.size(), false);
  for (auto& group : by_label) {
    for (std::size_t i = group.size(); i > 1; --i)
      std::swap(group[i - 1], group[rng.uniform_index(i)]);
    const std::size_t take =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < take; ++i) to_validation[group[i]] = true;
  }
  std::vector<Sample> kept;
  kept.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (to_validation[i])
      validation.push_back(std::move(train[i]));
    else
      kept.push_back(std::move(train[i]));
  }
  train = std::move(kept);
}

// z-score per variable from train statistics; constant variables keep
// std 1 so they pass through centered.
inline void standardize_task(TaskData& task) {
  const std::size_t n = task.spec.n_inputs;
  std::vector<double> mean(n, 0.0), stdev(n, 0.0);
  if (task.train.empty()) return;
  for (const auto& s : task.train)
    for (std::size_t i = 0; i < n; ++i) mean[i] += s.values[i];
  for (double& m : mean) m /= static_cast<double>(task.train.size());
  for (const auto& s : task.train)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = s.values[i] - mean[i];
      stdev[i] += d * d;
    }
  for (double& v : stdev) {
    v = std::sqrt(v / static_cast<double>(task.train.size()));
    if (v < 1e-12) v = 1.0;
  }
  auto apply = [&](std::vector<Sample>& split) {
    for (auto& s : split)
      for (std::size_t i = 0; i < n; ++i) s.values[i] = (s.values[i] - mean[i]) / stdev[i];
  };
  apply(task.train);
  apply(task.validation);
  apply(task.test);
}

}  // namespace detail

struct LoadOptions {
  bool standardize = true;
};

// Directory layout: manifest.json plus one train/test CSV pair per task,
// last column integer label. Validation is carved from train here (the
// bundle on disk has no validation files).
inline TaskBundle load_bundle(const std::filesystem::path& dir, std::uint64_t seed,
                              double validation_fraction, LoadOptions options = {}) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("bundle load: missing manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bundle load: bad manifest: " + std::string(e.what()));
  }
  const bool has_header = manifest.value("has_header", false);
  if (!manifest.contains("tasks") || !manifest["tasks"].is_array() || manifest["tasks"].empty())
    throw std::runtime_error("bundle load: manifest has no tasks");

  TaskBundle bundle;
  Rng rng(derive_seed(seed, 0x5b17));
  std::size_t task_id = 0;
  for (const auto& entry : manifest["tasks"]) {
    TaskData task;
    task.spec.task_id = task_id;
    task.spec.name = entry.at("name").get<std::string>();
    task.spec.subject_area = entry.at("subject_area").get<std::string>();
    task.spec.n_inputs = entry.at("n_inputs").get<std::size_t>();
    task.spec.n_classes = entry.at("n_classes").get<std::size_t>();
    if (entry.contains("variable_descriptions"))
      task.spec.variable_descriptions =
          entry["variable_descriptions"].get<std::vector<std::string>>();
    if (task.spec.n_inputs < 1)
      throw std::runtime_error("bundle load: task '" + task.spec.name + "': n_inputs must be >= 1");
    if (task.spec.n_classes < 2)
      throw std::runtime_error("bundle load: task '" + task.spec.name + "': n_classes must be >= 2");
    if (!is_subject_area(task.spec.subject_area))
      throw std::runtime_error("bundle load: task '" + task.spec.name +
                               "': unknown subject area '" + task.spec.subject_area + "'");
    task.train = detail::read_csv(dir / entry.at("train").get<std::string>(), task.spec, has_header);
    task.test = detail::read_csv(dir / entry.at("test").get<std::string>(), task.spec, has_header);
    if (task.train.empty())
      throw std::runtime_error("bundle load: task '" + task.spec.name + "': empty train split");
    if (task.test.empty())
      throw std::runtime_error("bundle load: task '" + task.spec.name + "': empty test split");
    detail::split_validation(task.train, task.validation, task.spec.n_classes,
                             validation_fraction, rng);
    if (options.standardize) detail::standardize_task(task);
    bundle.tasks.push_back(std::move(task));
    ++task_id;
  }
  bundle.rebuild_offsets();
  return bundle;
}

// Writes manifest + CSVs. Train and validation rows are written back into one
// train file (validation is a load-time carve). Doubles use %.17g so a
// write-then-read round trip is exact.
inline void save_bundle(const TaskBundle& bundle, const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::runtime_error("save_bundle: output directory " + dir.string() +
                             " is not empty (use force to overwrite)");
  fs::create_directories(dir);

  auto write_csv = [](const fs::path& file, const std::vector<const std::vector<Sample>*>& splits) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("save_bundle: cannot write " + file.string());
    char buf[64];
    for (const auto* split : splits)
      for (const auto& s : *split) {
        for (double v : s.values) {
          std::snprintf(buf, sizeof(buf), "%.17g", v);
          out << buf << ',';
        }
        out << s.label << '\n';
      }
  };

  nlohmann::json manifest;
  manifest["format"] = "sve-bundle";
  manifest["version"] = 1;
  manifest["has_header"] = false;
  manifest["tasks"] = nlohmann::json::array();
  for (const auto& task : bundle.tasks) {
    const std::string train_file = task.spec.name + ".train.csv";
    const std::string test_file = task.spec.name + ".test.csv";
    nlohmann::json entry;
    entry["name"] = task.spec.name;
    entry["subject_area"] = task.spec.subject_area;
    entry["n_inputs"] = task.spec.n_inputs;
    entry["n_classes"] = task.spec.n_classes;
    if (!task.spec.variable_descriptions.empty())
      entry["variable_descriptions"] = task.spec.variable_descriptions;
    entry["train"] = train_file;
    entry["test"] = test_file;
    manifest["tasks"].push_back(entry);
    write_csv(dir / train_file, {&task.train, &task.validation});
    write_csv(dir / test_file, {&task.test});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

struct SyntheticOptions {
  std::size_t train_per_task = 500;
  std::size_t test_per_task = 150;
  std::size_t min_inputs = 4;
  std::size_t max_inputs = 8;
  std::size_t min_classes = 2;
  std::size_t max_classes = 4;
  std::size_t latents_per_family = 3;
  double noise_std = 0.1;
  double margin = 0.3;  // required gap between top two class scores
};

// Desk-scale bundle of disjoint classification tasks. Each concept family
// owns a latent space and a pool of unit-norm class score directions; a
// task's variables are noisy probes of its family's latent coordinates, and
// its label is the argmax over the first m_t directions of the family pool,
// resampled until the top-two margin is comfortable. Every task is linearly
// separable from its inputs, and tasks of one family share their labeling
// structure, which is what makes the family recoverable from embeddings.
inline TaskBundle generate_synthetic(std::size_t n_tasks, std::size_t concept_families, Rng& rng,
                                     SyntheticOptions options = {}) {
  if (concept_families < 1 || n_tasks < concept_families)
    throw std::domain_error("generate_synthetic: need n_tasks >= concept_families >= 1");
  if (concept_families > subject_areas().size())
    throw std::domain_error("generate_synthetic: at most 11 concept families");
  if (options.min_inputs < options.latents_per_family)
    throw std::domain_error("generate_synthetic: min_inputs must cover the family latents");

  TaskBundle bundle;
  const std::size_t latents = options.latents_per_family;
  std::vector<Matrix> family_pool(concept_families);
  for (std::size_t g = 0; g < concept_families; ++g) {
    family_pool[g] = Matrix(options.max_classes, latents);
    for (std::size_t c = 0; c < options.max_classes; ++c) {
      for (std::size_t j = 0; j < latents; ++j) family_pool[g](c, j) = rng.normal();
      const double n = norm(family_pool[g].row(c));
      for (std::size_t j = 0; j < latents; ++j) family_pool[g](c, j) /= n;
    }
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const std::size_t family = t % concept_families;
    TaskData task;
    task.spec.task_id = t;
    task.spec.name = "task-" + std::to_string(t);
    task.spec.subject_area = subject_areas()[family];
    task.spec.n_inputs =
        options.min_inputs + rng.uniform_index(options.max_inputs - options.min_inputs + 1);
    task.spec.n_classes =
        options.min_classes + rng.uniform_index(options.max_classes - options.min_classes + 1);
    for (std::size_t v = 0; v < task.spec.n_inputs; ++v)
      task.spec.variable_descriptions.push_back("latent factor " + std::to_string(v % latents) +
                                                " probe");
    const Matrix& prototypes = family_pool[family];

    auto draw = [&]() {
      Sample s;
      std::vector<double> u(latents);
      for (int attempt = 0; attempt < 100; ++attempt) {
        for (double& x : u) x = rng.normal();
        double best = -1e300, second = -1e300;
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < task.spec.n_classes; ++c) {
          const double score = dot(prototypes.row(c), u);
          if (score > best) {
            second = best;
            best = score;
            best_c = c;
          } else if (score > second) {
            second = score;
          }
        }
        if (best - second >= options.margin) {
          s.label = best_c;
          break;
        }
        s.label = best_c;
      }
      s.values.resize(task.spec.n_inputs);
      for (std::size_t v = 0; v < task.spec.n_inputs; ++v)
        s.values[v] = u[v % latents] + options.noise_std * rng.normal();
      return s;
    };
    for (std::size_t i = 0; i < options.train_per_task; ++i) task.train.push_back(draw());
    for (std::size_t i = 0; i < options.test_per_task; ++i) task.test.push_back(draw());
    bundle.tasks.push_back(std::move(task));
  }
  bundle.rebuild_offsets();
  return bundle;
}

}  // namespace sve
