#include "patchbag/attention_export.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "parallel.hpp"
#include "patchbag/train.hpp"

namespace patchbag {

std::vector<RankedPatch> rank_patches(std::span<const double> weights) {
  std::vector<RankedPatch> out;
  for (std::size_t i = 0; i < weights.size(); ++i) out.push_back({i, weights[i]});
  std::stable_sort(out.begin(), out.end(), [](const RankedPatch& a, const RankedPatch& b) { return a.weight > b.weight; });
  return out;
}

std::vector<AttentionRecord> attention_records(const ModelParams& params, const Dataset& dataset,
                                               std::size_t threads) {
  check_compatible(params, dataset);
  std::vector<AttentionRecord> out(dataset.size());
  detail::parallel_for(dataset.size(), threads, [&](std::size_t i) {
    Graph g(false);
    out[i] = forward(g, dataset.bags[i], params).attention;
  });
  return out;
}

namespace {

std::string bag_svg(const AttentionRecord& record, const TagSchema& schema) {
  const int bar = 14, gap = 2, row_height = 90, left = 90;
  const std::size_t M = record.tag_weights.empty() ? 0 : record.tag_weights.front().size();
  const int width = left + static_cast<int>(M) * (bar + gap) + 20;
  const int height = 30 + static_cast<int>(record.tag_weights.size()) * row_height;
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"9\">\n";
  svg << "<text x=\"4\" y=\"16\" font-size=\"12\">bag " << record.bag_id << ": patches sorted by tag attention</text>\n";
  for (std::size_t k = 0; k < record.tag_weights.size(); ++k) {
    const auto ranked = rank_patches(record.tag_weights[k]);
    const double peak = ranked.empty() ? 1.0 : std::max(ranked.front().weight, 1e-12);
    const int base = 30 + static_cast<int>(k + 1) * row_height - 16;
    svg << "<text x=\"4\" y=\"" << base - 30 << "\">" << schema.tasks[k].name << "</text>\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const double h = 60.0 * ranked[r].weight / peak;
      const int x = left + static_cast<int>(r) * (bar + gap);
      svg << "<rect x=\"" << x << "\" y=\"" << base - h << "\" width=\"" << bar << "\" height=\"" << h
          << "\" fill=\"#4a7ab5\"><title>patch " << ranked[r].patch << ": " << format_double(ranked[r].weight)
          << "</title></rect>\n";
      svg << "<text x=\"" << x + bar / 2 << "\" y=\"" << base + 10 << "\" text-anchor=\"middle\">" << ranked[r].patch
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

void export_attention(const ModelParams& params, const Dataset& dataset, const std::filesystem::path& out_dir,
                      bool svg, std::size_t threads) {
  const auto records = attention_records(params, dataset, threads);
  detail::ensure_directory(out_dir);
  std::ostringstream csv;
  csv << "bag_id,task,rank,patch,weight\n";
  for (const auto& record : records) {
    for (std::size_t k = 0; k < record.tag_weights.size(); ++k) {
      const auto ranked = rank_patches(record.tag_weights[k]);
      for (std::size_t r = 0; r < ranked.size(); ++r)
        csv << record.bag_id << ',' << dataset.schema.tasks[k].name << ',' << r << ',' << ranked[r].patch << ','
            << format_double(ranked[r].weight) << '\n';
    }
    if (svg) detail::write_text(out_dir / (record.bag_id + ".svg"), bag_svg(record, dataset.schema));
  }
  detail::write_text(out_dir / "attention.csv", csv.str());
}

}  // namespace patchbag
