// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "patchbag/bag_io.hpp"
#include "patchbag/checkpoint.hpp"
#include "patchbag/error.hpp"
#include "patchbag/metrics.hpp"
#include "patchbag/model.hpp"
#include "patchbag/preprocess.hpp"
#include "patchbag/synthetic.hpp"
#include "patchbag/train.hpp"
#include "support/counting_oracle.hpp"
#include "support/gradcheck.hpp"
#include "support/oracle.hpp"
#include "support/otsu_oracle.hpp"
#include "support/random.hpp"
#include "support/tempdir.hpp"

using namespace patchbag;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

TagSchema two_task_schema() { return TagSchema{{{"a", {"a0", "a1", "a2"}}, {"b", {"b0", "b1"}}}}; }

// The default synthetic dataset and split shared by criteria 6 and 7.
struct DefaultData {
  SynthConfig config;
  Dataset all;
  DatasetSplits splits;
};

const DefaultData& default_data() {
  static const DefaultData d = [] {
    DefaultData out;
    out.config.seed = 7;
    out.all = generate(out.config);
    out.splits = split(out.all, {}, out.config.seed);
    return out;
  }();
  return d;
}

// Desk-scale optimisation settings; see README.
TrainConfig desk_training(std::size_t heads, std::uint64_t seed, std::size_t epochs) {
  TrainConfig t;
  t.dims.heads = heads;
  t.seed = seed;
  t.epochs = epochs;
  t.adam.lr = 1e-3;
  t.batch_size = 1;
  return t;
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  ModelDims dims;
  dims.feature_dim = 6;
  dims.head_hidden = 4;
  dims.tag_hidden = 4;
  dims.heads = 2;
  const TagSchema schema = two_task_schema();
  double worst = 0.0, worst_abs = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto params = ModelParams::initialize(dims, schema, seed);
    // Larger-than-init scores keep the attention away from uniform.
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> n(0.0, 0.8);
    for (auto& p : params.parameters())
      for (auto& v : p.tensor.mutable_data()) v = n(rng);
    const Tensor bag = testing::random_tensor({4, 6}, rng);
    const std::vector<std::size_t> labels{seed % 3, seed % 2};
    std::vector<Tensor> tensors;
    for (auto& p : params.parameters()) tensors.push_back(p.tensor);
    const auto r = testing::gradient_check(tensors, [&](Graph& g) {
      auto out = forward(g, bag, params);
      return multi_task_loss(g, {out.probabilities}, {labels}, std::vector<double>{1.0, 1.0});
    });
    worst = std::max(worst, r.max_rel_error);
    worst_abs = std::max(worst_abs, r.max_abs_error);
    checked += r.checked;
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 30.0, "max rel err " + fmt(worst) + " (max abs err " + fmt(worst_abs) + ") over " + std::to_string(checked) +
                                        " entries, 20 seeds, " + fmt(t, 3) + " s"};
}

Outcome attention_normalization() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> patches(1, 40);
  ModelDims dims;
  dims.feature_dim = 12;
  dims.head_hidden = 8;
  dims.tag_hidden = 8;
  double sum_err = 0.0, prob_err = 0.0, att_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    dims.variant = trial % 2 ? Variant::sdpa : Variant::gated;
    dims.heads = trial % 2 ? 3 : 1 + static_cast<std::size_t>(trial) % 3;
    const auto params = ModelParams::initialize(dims, TagSchema::histology(), static_cast<std::uint64_t>(trial));
    const std::size_t M = patches(rng);
    const Tensor bag = testing::random_tensor({M, 12}, rng);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    Graph g(false);
    const auto a = forward(g, bag, params);
    const auto b = forward(g, testing::permute_rows(bag, perm), params);
    auto check_sum = [&](const std::vector<double>& w) {
      sum_err = std::max(sum_err, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
    };
    for (const auto& w : a.attention.head_weights) check_sum(w);
    for (const auto& w : a.attention.tag_weights) check_sum(w);
    if (dims.variant == Variant::sdpa) {
      const auto t = sdpa_transform(g, bag, params);
      for (const auto& h : t.head_weights)
        for (std::size_t r = 0; r < M; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < M; ++c) s += h.at(r, c);
          sum_err = std::max(sum_err, std::abs(s - 1.0));
        }
    }
    for (std::size_t k = 0; k < a.probabilities.size(); ++k)
      for (std::size_t c = 0; c < a.probabilities[k].size(); ++c)
        prob_err = std::max(prob_err, std::abs(a.probabilities[k][c] - b.probabilities[k][c]));
    auto check_perm = [&](const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
      for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t m = 0; m < M; ++m) att_err = std::max(att_err, std::abs(y[i][m] - x[i][perm[m]]));
    };
    check_perm(a.attention.head_weights, b.attention.head_weights);
    check_perm(a.attention.tag_weights, b.attention.tag_weights);
  }
  return {sum_err <= 1e-9 && prob_err <= 1e-10 && att_err <= 1e-10,
          "100 bags: max |sum-1| " + fmt(sum_err) + ", max prob change " + fmt(prob_err) +
              ", max attention mismatch " + fmt(att_err)};
}

Outcome residual_identity() {
  std::mt19937_64 rng(77);
  ModelDims dims;
  dims.feature_dim = 10;
  dims.head_hidden = 6;
  dims.tag_hidden = 6;
  bool exact = true;
  double mean_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    dims.heads = 1 + static_cast<std::size_t>(trial) % 3;
    auto params = ModelParams::initialize(dims, TagSchema::histology(), static_cast<std::uint64_t>(trial));
    for (auto& v : params.projection.mutable_data()) v = 0.0;
    const std::size_t M = 1 + static_cast<std::size_t>(trial);
    const Tensor bag = testing::random_tensor({M, 10}, rng);
    Graph g(false);
    const Tensor transformed = patch_transform(g, bag, params).transformed;
    for (std::size_t i = 0; i < bag.size(); ++i) exact = exact && transformed[i] == std::max(bag[i], 0.0);

    for (auto& tag : params.tags) {
      for (auto& v : tag.hidden.mutable_data()) v = 0.0;
      const auto rep = tag_attention(g, transformed, tag.hidden, tag.score);
      for (std::size_t d = 0; d < 10; ++d) {
        double mean = 0.0;
        for (std::size_t m = 0; m < M; ++m) mean += transformed.at(m, d);
        mean /= static_cast<double>(M);
        mean_err = std::max(mean_err, std::abs(rep.representation[d] - mean));
      }
    }
  }
  return {exact && mean_err <= 1e-12, std::string("W=0 gives ReLU(V) ") + (exact ? "exactly" : "NOT exactly") +
                                          "; U'=0 column-mean error " + fmt(mean_err)};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> classes(2, 16), count(1, 300);
  double worst = 0.0;
  bool micro_is_accuracy = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = classes(rng), n = count(rng);
    std::uniform_int_distribution<std::size_t> label(0, C - 1);
    std::vector<std::size_t> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = label(rng);
      pred[i] = trial % 4 == 0 ? label(rng) : (i % 2 ? truth[i] : label(rng));
    }
    TagTask task{"t", {}};
    for (std::size_t c = 0; c < C; ++c) task.classes.push_back(std::to_string(c));
    const auto m = task_metrics(task, truth, pred);
    const auto o = testing::oracle_metrics(C, truth, pred);
    worst = std::max({worst, std::abs(m.macro_f1 - o.macro), std::abs(m.micro_f1 - o.micro)});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < C; ++j) worst = std::max(worst, std::abs(m.confusion[c][j] - o.confusion[c][j]));
    micro_is_accuracy = micro_is_accuracy && m.micro_f1 == m.accuracy;
  }
  return {worst <= 1e-12 && micro_is_accuracy, "100 sets: max deviation " + fmt(worst) + ", micro F1 == accuracy " +
                                                   (micro_is_accuracy ? "always" : "NOT always")};
}

Outcome otsu_oracle_equivalence() {
  std::mt19937_64 rng(4242);
  std::vector<GrayHistogram> hists;
  for (int i = 0; i < 1000; ++i) hists.push_back(testing::random_histogram(rng));
  const auto start = Clock::now();
  std::size_t agree = 0;
  for (const auto& h : hists) agree += otsu_threshold(h).threshold == testing::otsu_oracle(h);
  const double t = seconds_since(start);
  return {agree == hists.size() && t < 5.0,
          std::to_string(agree) + "/1000 thresholds equal the exhaustive maximizer, " + fmt(t, 3) + " s"};
}

Outcome synthetic_learnability() {
  const auto& d = default_data();
  const double oracle = testing::nearest_prototype_accuracy(d.all, prototypes(d.config));
  if (oracle <= 0.99) return {false, "nearest-prototype oracle accuracy " + fmt(oracle) + " <= 0.99"};

  TrainConfig t = desk_training(3, 7, 50);
  t.stop_at_macro_f1 = 0.90;
  const auto start = Clock::now();
  const auto r = train(d.splits.train, d.splits.val, t);
  const double secs = seconds_since(start);
  double best = 0.0;
  std::size_t reached = 0;
  for (const auto& e : r.history)
    if (e.val_average_macro_f1 > best) {
      best = e.val_average_macro_f1;
      if (best >= 0.90 && !reached) reached = e.epoch;
    }
  return {best >= 0.90 && secs < 900.0, "oracle accuracy " + fmt(oracle) + "; PT-3head-MTA best val macro F1 " +
                                            fmt(best) + (reached ? " (>= 0.90 at epoch " + std::to_string(reached) + ")"
                                                                 : " (never >= 0.90)") +
                                            ", " + fmt(secs, 3) + " s"};
}

Outcome ablation_trend() {
  const auto& d = default_data();
  const std::size_t epochs = 15;
  const std::vector<std::pair<std::string, std::size_t>> arms{{"PT-3head-MTA", 3}, {"PT-1head-MTA", 1}, {"MTA", 0}};
  std::vector<double> means;
  std::string detail;
  for (const auto& [name, heads] : arms) {
    double total = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto r = train(d.splits.train, d.splits.val, desk_training(heads, seed, epochs));
      total += evaluate(r.params, d.splits.test).average_macro_f1;
    }
    means.push_back(total / 3.0);
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt(means.back());
  }
  const bool pass = means[0] - means[1] >= -0.01 && means[1] - means[2] >= -0.01;
  return {pass, "mean test macro F1 over seeds 1-3, " + std::to_string(epochs) + " epochs: " + detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_files(const fs::path& a, const fs::path& b) {
  for (const auto& e : fs::directory_iterator(a))
    if (slurp(e.path()) != slurp(b / e.path().filename())) return false;
  return std::distance(fs::directory_iterator(a), {}) == std::distance(fs::directory_iterator(b), {});
}

Outcome reproducibility() {
  testing::TempDir tmp;
  SynthConfig sc;
  sc.bags = 300;
  sc.seed = 11;
  const auto data = split(generate(sc), {}, 11);
  std::vector<std::string> history, metrics;
  for (int run = 0; run < 2; ++run) {
    TrainConfig t = desk_training(3, 11, 3);
    t.threads = 2;
    const auto r = train(data.train, data.val, t);
    save_checkpoint(r.params, tmp.path() / ("ckpt" + std::to_string(run)));
    history.push_back(history_csv(r.history, data.train.schema));
    metrics.push_back(evaluate(r.params, data.test, 2).to_json());
  }
  const bool ckpt = same_files(tmp.path() / "ckpt0", tmp.path() / "ckpt1");
  const bool pass = ckpt && history[0] == history[1] && metrics[0] == metrics[1];
  return {pass, std::string("checkpoints ") + (ckpt ? "identical" : "DIFFER") + ", history CSV " +
                    (history[0] == history[1] ? "identical" : "DIFFERS") + ", metrics JSON " +
                    (metrics[0] == metrics[1] ? "identical" : "DIFFERS")};
}

void flip_byte(const fs::path& file, std::uintmax_t at) {
  std::fstream f(file, std::ios::binary | std::ios::in | std::ios::out);
  f.seekg(static_cast<std::streamoff>(at));
  char c = 0;
  f.read(&c, 1);
  c = static_cast<char>(c ^ 0x01);
  f.seekp(static_cast<std::streamoff>(at));
  f.write(&c, 1);
}

template <class F>
bool throws_integrity(F&& fn) {
  try {
    fn();
  } catch (const IntegrityError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome round_trips() {
  testing::TempDir tmp;
  SynthConfig sc;
  sc.bags = 50;
  const auto data = generate(sc);
  write_bags(data, tmp.path() / "bags");
  const auto back = read_bags(tmp.path() / "bags");
  bool bags_exact = back == data;
  for (std::size_t b = 0; bags_exact && b < data.size(); ++b)
    bags_exact = std::memcmp(back.bags[b].features.data(), data.bags[b].features.data(),
                             data.bags[b].features.size() * sizeof(double)) == 0;

  ModelDims dims;
  dims.heads = 3;
  const auto params = ModelParams::initialize(dims, sc.schema, 5);
  save_checkpoint(params, tmp.path() / "ckpt");
  const auto loaded = load_checkpoint(tmp.path() / "ckpt");
  bool ckpt_exact = loaded.dims == params.dims && loaded.schema == params.schema;
  const auto a = params.parameters(), b = loaded.parameters();
  ckpt_exact = ckpt_exact && a.size() == b.size();
  for (std::size_t i = 0; ckpt_exact && i < a.size(); ++i)
    ckpt_exact = a[i].name == b[i].name && a[i].tensor.shape() == b[i].tensor.shape() &&
                 std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.size() * 8) == 0;

  const fs::path blob = tmp.path() / "bags" / "features.bin";
  flip_byte(blob, fs::file_size(blob) / 3);
  const bool bag_detected = throws_integrity([&] { read_bags(tmp.path() / "bags"); });
  const fs::path matrix = tmp.path() / "ckpt" / (a.back().name + ".bin");
  flip_byte(matrix, 5);
  const bool ckpt_detected = throws_integrity([&] { load_checkpoint(tmp.path() / "ckpt"); });

  return {bags_exact && ckpt_exact && bag_detected && ckpt_detected,
          std::string("bags ") + (bags_exact ? "bit-exact" : "NOT exact") + ", checkpoint " +
              (ckpt_exact ? "bit-exact" : "NOT exact") + ", corrupted bag blob " +
              (bag_detected ? "detected" : "MISSED") + ", corrupted checkpoint blob " +
              (ckpt_detected ? "detected" : "MISSED")};
}

}  // namespace

// Optional arguments select criteria by number; default runs all of them.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"attention normalization and permutation", attention_normalization},
      {"residual identity", residual_identity},
      {"metric oracle equivalence", metric_oracle},
      {"otsu oracle equivalence", otsu_oracle_equivalence},
      {"synthetic learnability", synthetic_learnability},
      {"ablation trend", ablation_trend},
      {"reproducibility", reproducibility},
      {"round trips", round_trips},
  };
  std::vector<std::size_t> selected;
  for (int a = 1; a < argc; ++a) selected.push_back(std::stoul(argv[a]) - 1);
  if (selected.empty())
    for (std::size_t i = 0; i < criteria.size(); ++i) selected.push_back(i);
  int failures = 0;
  for (std::size_t i : selected) {
    if (i >= criteria.size()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", selected.size() - static_cast<std::size_t>(failures), selected.size());
  return failures == 0 ? 0 : 1;
}
