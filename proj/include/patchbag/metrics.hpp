#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchbag/schema.hpp"

namespace patchbag {

struct TaskMetrics {
  std::string task;
  std::vector<std::string> classes;
  // counts[truth][predicted]
  std::vector<std::vector<std::size_t>> counts;
  // counts with each row divided by its sum; rows of absent classes stay zero.
  std::vector<std::vector<double>> confusion;
  std::vector<double> class_f1;
  // Classes whose F1 denominator (2TP + FP + FN) was zero; their F1 is 0.
  std::vector<std::size_t> undefined_f1;
  // Classes that never occur in the ground truth (all-zero confusion rows).
  std::vector<std::size_t> absent_rows;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
};

// Single-label multi-class metrics for one task. Macro F1 is the unweighted
// mean of per-class F1; micro F1 uses pooled TP/FP/FN, which equals accuracy
// here. Throws ContractError on empty or mismatched inputs or out-of-range
// labels.
TaskMetrics task_metrics(const TagTask& task, std::span<const std::size_t> truth,
                         std::span<const std::size_t> predicted);

struct MetricsReport {
  std::vector<TaskMetrics> tasks;
  double average_macro_f1 = 0.0;
  double average_micro_f1 = 0.0;
  std::size_t bags = 0;

  std::string to_json() const;
};

// truth[n][k] and predicted[n][k] for N bags and K tasks.
MetricsReport metrics_report(const TagSchema& schema, const std::vector<std::vector<std::size_t>>& truth,
                             const std::vector<std::vector<std::size_t>>& predicted);

// Row-normalized confusion matrix heat map as a standalone SVG document.
std::string confusion_svg(const TaskMetrics& metrics);

}  // namespace patchbag
