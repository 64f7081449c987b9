#include "patchbag/metrics.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "patchbag/error.hpp"

namespace patchbag {

TaskMetrics task_metrics(const TagTask& task, std::span<const std::size_t> truth,
                         std::span<const std::size_t> predicted) {
  if (truth.empty()) throw ContractError("metrics need at least one prediction");
  if (truth.size() != predicted.size())
    throw ContractError("metrics: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  const std::size_t C = task.classes.size();
  TaskMetrics m;
  m.task = task.name;
  m.classes = task.classes;
  m.counts.assign(C, std::vector<std::size_t>(C, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= C || predicted[i] >= C)
      throw ContractError("metrics: label out of range for task '" + task.name + "'");
    ++m.counts[truth[i]][predicted[i]];
  }

  std::size_t pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  double f1_total = 0.0;
  m.confusion.assign(C, std::vector<double>(C, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < C; ++j) {
      row += m.counts[c][j];
      col += m.counts[j][c];
    }
    const std::size_t tp = m.counts[c][c];
    const std::size_t fn = row - tp;
    const std::size_t fp = col - tp;
    pooled_tp += tp;
    pooled_fp += fp;
    pooled_fn += fn;
    const std::size_t denom = 2 * tp + fp + fn;
    double f1 = 0.0;
    if (denom == 0)
      m.undefined_f1.push_back(c);
    else
      f1 = static_cast<double>(2 * tp) / static_cast<double>(denom);
    m.class_f1.push_back(f1);
    f1_total += f1;
    if (row == 0)
      m.absent_rows.push_back(c);
    else
      for (std::size_t j = 0; j < C; ++j)
        m.confusion[c][j] = static_cast<double>(m.counts[c][j]) / static_cast<double>(row);
  }
  m.macro_f1 = f1_total / static_cast<double>(C);
  m.micro_f1 = static_cast<double>(2 * pooled_tp) / static_cast<double>(2 * pooled_tp + pooled_fp + pooled_fn);
  m.accuracy = static_cast<double>(pooled_tp) / static_cast<double>(truth.size());
  return m;
}

MetricsReport metrics_report(const TagSchema& schema, const std::vector<std::vector<std::size_t>>& truth,
                             const std::vector<std::vector<std::size_t>>& predicted) {
  if (truth.size() != predicted.size()) throw ContractError("metrics: truth and prediction counts differ");
  MetricsReport report;
  report.bags = truth.size();
  const std::size_t K = schema.task_count();
  std::vector<std::size_t> t(truth.size()), p(truth.size());
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < truth.size(); ++n) {
      if (truth[n].size() != K || predicted[n].size() != K)
        throw ContractError("metrics: every bag needs one label per task");
      t[n] = truth[n][k];
      p[n] = predicted[n][k];
    }
    report.tasks.push_back(task_metrics(schema.tasks[k], t, p));
    report.average_macro_f1 += report.tasks.back().macro_f1;
    report.average_micro_f1 += report.tasks.back().micro_f1;
  }
  report.average_macro_f1 /= static_cast<double>(K);
  report.average_micro_f1 /= static_cast<double>(K);
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["bags"] = bags;
  doc["average"] = {{"macro_f1", average_macro_f1}, {"micro_f1", average_micro_f1}};
  auto& list = doc["tasks"] = nlohmann::ordered_json::array();
  for (const auto& t : tasks) {
    nlohmann::ordered_json item;
    item["task"] = t.task;
    item["classes"] = t.classes;
    item["macro_f1"] = t.macro_f1;
    item["micro_f1"] = t.micro_f1;
    item["accuracy"] = t.accuracy;
    item["class_f1"] = t.class_f1;
    item["undefined_f1_classes"] = t.undefined_f1;
    item["absent_classes"] = t.absent_rows;
    item["counts"] = t.counts;
    item["confusion"] = t.confusion;
    list.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

namespace {

std::string escape_xml(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string confusion_svg(const TaskMetrics& m) {
  const std::size_t C = m.classes.size();
  const int cell = 36, margin = 120, top = 40;
  const int size = margin + static_cast<int>(C) * cell + 20;
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + top
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << escape_xml(m.task)
      << " (rows: truth, columns: prediction)</text>\n";
  for (std::size_t i = 0; i < C; ++i) {
    const int y = top + margin + static_cast<int>(i) * cell;
    svg << "<text x=\"" << margin - 4 << "\" y=\"" << y + cell / 2 + 3 << "\" text-anchor=\"end\">"
        << escape_xml(m.classes[i]) << "</text>\n";
    const int x = margin + static_cast<int>(i) * cell + cell / 2;
    svg << "<text x=\"" << x << "\" y=\"" << top + margin - 4 << "\" text-anchor=\"start\" transform=\"rotate(-60 "
        << x << ' ' << top + margin - 4 << ")\">" << escape_xml(m.classes[i]) << "</text>\n";
    for (std::size_t j = 0; j < C; ++j) {
      const double v = m.confusion[i][j];
      const int shade = 255 - static_cast<int>(v * 200.0);
      svg << "<rect x=\"" << margin + static_cast<int>(j) * cell << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#888\"/>\n";
      svg << "<text x=\"" << margin + static_cast<int>(j) * cell + cell / 2 << "\" y=\"" << y + cell / 2 + 3
          << "\" text-anchor=\"middle\">" << v << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace patchbag
