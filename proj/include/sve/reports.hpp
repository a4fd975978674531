#pragma once

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sve/interpretability.hpp"
#include "sve/trainer.hpp"

namespace sve {

inline nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["step"] = report.step;
  j["mean_accuracy_unweighted"] = report.mean_accuracy_unweighted;
  j["mean_accuracy_example_weighted"] = report.mean_accuracy_example_weighted;
  j["per_task"] = nlohmann::json::array();
  for (const auto& [task, acc] : report.per_task_accuracy)
    j["per_task"].push_back({{"task_id", task}, {"accuracy", acc}});
  return j;
}

inline nlohmann::json to_json(const TrialReport& trial) {
  nlohmann::json j;
  j["shared_index"] = trial.shared_index;
  j["dominant_sa"] = trial.dominant_sa;
  j["dominant_count"] = trial.dominant_count;
  j["n_subject_areas"] = trial.n_subject_areas;
  j["n_distinct_datasets"] = trial.n_distinct_datasets;
  j["records"] = nlohmann::json::array();
  for (const auto& r : trial.records) {
    nlohmann::json rec = {{"task_id", r.task_id},
                          {"input_position", r.input_position},
                          {"dataset", r.dataset},
                          {"subject_area", r.subject_area}};
    if (!r.description.empty()) rec["variable_meaning"] = r.description;
    if (r.cosine) rec["cosine"] = *r.cosine;
    j["records"].push_back(rec);
  }
  return j;
}

inline nlohmann::json to_json(const std::vector<TrialReport>& trials) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : trials) arr.push_back(to_json(t));
  return arr;
}

inline nlohmann::json to_json(const TrialAggregates& agg) {
  return {{"majority_rate", agg.majority_rate},
          {"mean_sa_count", agg.mean_sa_count},
          {"mean_dominant_purity", agg.mean_dominant_purity}};
}

inline nlohmann::json to_json(const SharingReport& report) {
  nlohmann::json j;
  j["threshold"] = report.threshold;
  j["task_counts"] = report.task_counts;
  j["top"] = nlohmann::json::array();
  for (const auto& e : report.top) {
    nlohmann::json entry = {{"shared_index", e.shared_index}, {"task_count", e.task_count}};
    entry["top_tasks"] = nlohmann::json::array();
    for (const auto& [task, score] : e.top_tasks)
      entry["top_tasks"].push_back({{"task_id", task}, {"max_attention", score}});
    j["top"].push_back(entry);
  }
  return j;
}

namespace detail {

inline void print_row(std::ostream& out, const std::vector<std::string>& cells,
                      const std::vector<std::size_t>& widths) {
  for (std::size_t i = 0; i < cells.size(); ++i)
    out << std::left << std::setw(static_cast<int>(widths[i]) + 2) << cells[i];
  out << '\n';
}

}  // namespace detail

// Aligned-column rendering of similarity trials: dataset, variable meaning,
// Subject Area, plus a remarks column with the dominant SA, SA count and
// distinct-dataset count.
inline std::string render_trials_table(const std::vector<TrialReport>& trials) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"No.", "Dataset", "Variable meaning", "Subject Area", "Remarks"});
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& trial = trials[t];
    for (std::size_t i = 0; i < trial.records.size(); ++i) {
      const auto& r = trial.records[i];
      std::string remark;
      if (i == 0)
        remark = "Dom.: " + trial.dominant_sa + " " + std::to_string(trial.dominant_count) + "/" +
                 std::to_string(trial.records.size());
      else if (i == 1)
        remark = "SAs: " + std::to_string(trial.n_subject_areas);
      else if (i == 2)
        remark = "D-sets: " + std::to_string(trial.n_distinct_datasets);
      std::string label = i == 0 ? "(" + std::to_string(t + 1) + ")" : "";
      rows.push_back({label, r.dataset, r.description.empty() ? "-" : r.description,
                      r.subject_area, remark});
    }
  }
  std::vector<std::size_t> widths(5, 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  std::ostringstream out;
  detail::print_row(out, rows[0], widths);
  std::size_t line = 0;
  for (const auto& w : widths) line += w + 2;
  out << std::string(line, '-') << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) detail::print_row(out, rows[i], widths);
  return out.str();
}

inline std::string render_sharing_table(const SharingReport& report, const TaskBundle& bundle) {
  std::ostringstream out;
  out << "most commonly shared embeddings (attention prob > " << report.threshold << ")\n";
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"shared", "tasks over threshold", "top tasks (max attention)"});
  for (const auto& e : report.top) {
    std::ostringstream tasks;
    for (std::size_t i = 0; i < e.top_tasks.size(); ++i) {
      if (i) tasks << ", ";
      tasks << bundle.tasks[e.top_tasks[i].first].spec.name << " ("
            << std::setprecision(3) << e.top_tasks[i].second << ")";
    }
    rows.push_back({std::to_string(e.shared_index), std::to_string(e.task_count), tasks.str()});
  }
  std::vector<std::size_t> widths(3, 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  for (const auto& row : rows) detail::print_row(out, row, widths);
  return out.str();
}

}  // namespace sve
