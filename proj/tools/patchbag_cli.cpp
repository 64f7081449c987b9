#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "patchbag/attention_export.hpp"
#include "patchbag/bag_io.hpp"
#include "patchbag/checkpoint.hpp"
#include "patchbag/error.hpp"
#include "patchbag/featurizer.hpp"
#include "patchbag/preprocess.hpp"
#include "patchbag/synthetic.hpp"
#include "patchbag/train.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace patchbag;
using patchbag::cli::RunConfig;

namespace {

struct Flags {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<fs::path> data;
  std::optional<fs::path> checkpoint;
  std::optional<std::size_t> heads;
  std::optional<std::string> variant;
  std::optional<std::size_t> threads;
};

void add_common_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON config file");
  cmd.add_option("--seed", f.seed, "seed shared by every random stream");
  cmd.add_option("--out", f.out, "output directory");
  cmd.add_option("--data", f.data, "bag directory (or slide list for preprocess)");
  cmd.add_option("--checkpoint", f.checkpoint, "checkpoint directory");
  cmd.add_option("--heads", f.heads, "patch transformer heads, 0 for tag attention only");
  cmd.add_option("--variant", f.variant, "gated|sdpa");
  cmd.add_option("--threads", f.threads, "worker threads for evaluation");
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config ? cli::load_config(*f.config) : RunConfig{};
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = f.out;
  if (f.data) c.data = f.data;
  if (f.checkpoint) c.checkpoint = f.checkpoint;
  if (f.heads) c.train.dims.heads = *f.heads;
  if (f.variant) c.train.dims.variant = parse_variant(*f.variant);
  if (f.threads) c.threads = *f.threads;
  c.finalize();
  return c;
}

const fs::path& require(const std::optional<fs::path>& p, const char* flag) {
  if (!p) throw ConfigError(std::string("missing ") + flag);
  return *p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

bool is_bag_dir(const fs::path& dir) { return fs::exists(dir / "manifest"); }

// A bag directory, or the `sub` split under a directory written by `synth`.
Dataset load_split(const fs::path& data, const char* sub) {
  if (!fs::exists(data)) throw ConfigError("data directory " + data.string() + " does not exist");
  const fs::path dir = is_bag_dir(data) ? data : data / sub;
  spdlog::debug("reading bags from {}", dir.string());
  return read_bags(dir);
}

std::string file_safe(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

void log_epoch(const EpochRecord& e) {
  spdlog::info("epoch {:3d}  train loss {:.4f}  val macro F1 {:.4f}", e.epoch, e.train_loss, e.val_average_macro_f1);
}

TrainConfig train_config_for(const RunConfig& c, const Dataset& data) {
  TrainConfig t = c.train;
  if (t.dims.featurizer_hidden == 0) t.dims.feature_dim = data.dim;
  return t;
}

int cmd_synth(const RunConfig& c) {
  const fs::path& out = require(c.out, "--out");
  const Dataset data = generate(c.synth);
  const auto parts = split(data, c.split, c.seed);
  prepare_out(out);
  write_bags(parts.train, out / "train");
  write_bags(parts.val, out / "val");
  write_bags(parts.test, out / "test");
  write_text(out / "config.json", c.to_json());
  spdlog::info("wrote {} bags (train {}, val {}, test {}) to {}", data.size(), parts.train.size(), parts.val.size(),
               parts.test.size(), out.string());
  return 0;
}

int cmd_train(const RunConfig& c) {
  const fs::path& data_dir = require(c.data, "--data");
  const fs::path& out = require(c.out, "--out");
  if (!fs::exists(data_dir)) throw ConfigError("data directory " + data_dir.string() + " does not exist");
  Dataset train_set, val_set;
  if (is_bag_dir(data_dir)) {
    train_set = read_bags(data_dir);
  } else {
    train_set = read_bags(data_dir / "train");
    if (is_bag_dir(data_dir / "val")) val_set = read_bags(data_dir / "val", &train_set.schema);
  }
  if (val_set.empty()) spdlog::warn("no validation bags; keeping the last epoch");

  const TrainConfig t = train_config_for(c, train_set);
  spdlog::info("training heads={} variant={} on {} bags for {} epochs", t.dims.heads, to_string(t.dims.variant),
               train_set.size(), t.epochs);
  const auto result = train(train_set, val_set, t, log_epoch);
  prepare_out(out);
  const fs::path ckpt = c.checkpoint.value_or(out / "checkpoint");
  save_checkpoint(result.params, ckpt);
  write_text(out / "history.csv", history_csv(result.history, train_set.schema));
  write_text(out / "config.json", c.to_json());
  spdlog::info("best epoch {} saved to {}", result.history[result.best_epoch].epoch, ckpt.string());
  return 0;
}

int cmd_eval(const RunConfig& c) {
  const auto params = load_checkpoint(require(c.checkpoint, "--checkpoint"));
  const Dataset data = load_split(require(c.data, "--data"), "test");
  const fs::path& out = require(c.out, "--out");
  check_compatible(params, data);
  const auto report = evaluate(params, data, c.threads);
  prepare_out(out);
  write_text(out / "metrics.json", report.to_json());
  for (const auto& task : report.tasks)
    write_text(out / ("confusion_" + file_safe(task.task) + ".svg"), confusion_svg(task));
  for (const auto& task : report.tasks)
    spdlog::info("{:<10} macro F1 {:.4f}  micro F1 {:.4f}", task.task, task.macro_f1, task.micro_f1);
  spdlog::info("average    macro F1 {:.4f}  micro F1 {:.4f}", report.average_macro_f1, report.average_micro_f1);
  return 0;
}

int cmd_export(const RunConfig& c) {
  const auto params = load_checkpoint(require(c.checkpoint, "--checkpoint"));
  const Dataset data = load_split(require(c.data, "--data"), "test");
  const fs::path& out = require(c.out, "--out");
  export_attention(params, data, out, c.export_svg, c.threads);
  spdlog::info("attention rankings for {} bags written to {}", data.size(), out.string());
  return 0;
}

struct SlideEntry {
  std::string id;
  fs::path image;
  std::vector<std::size_t> labels;
};

// id <TAB> image path <TAB> one class name per task; '#' starts a comment.
std::vector<SlideEntry> read_slide_list(const fs::path& list, const TagSchema& schema) {
  std::ifstream in(list);
  if (!in) throw IoError("cannot open slide list " + list.string());
  std::vector<SlideEntry> out;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    const std::string where = list.string() + ":" + std::to_string(number);
    if (fields.size() != 2 + schema.task_count())
      throw ParseError(where + ": expected id, image and " + std::to_string(schema.task_count()) + " labels");
    SlideEntry e{fields[0], fields[1], {}};
    if (e.image.is_relative()) e.image = list.parent_path() / e.image;
    for (std::size_t k = 0; k < schema.task_count(); ++k) {
      const auto& classes = schema.tasks[k].classes;
      const auto it = std::find(classes.begin(), classes.end(), fields[2 + k]);
      if (it == classes.end())
        throw SchemaMismatchError(where + ": '" + fields[2 + k] + "' is not a class of task '" +
                                  schema.tasks[k].name + "'\nschema:\n" + describe(schema));
      e.labels.push_back(static_cast<std::size_t>(it - classes.begin()));
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ConfigError("slide list " + list.string() + " has no entries");
  return out;
}

int cmd_preprocess(const RunConfig& c) {
  const fs::path list = c.data ? *c.data : require(c.preprocess.slides, "--data or preprocess.slides");
  const fs::path& out = require(c.out, "--out");
  const auto slides = read_slide_list(list, c.schema);
  std::mt19937_64 seeds(c.seed);

  Dataset data;
  data.schema = c.schema;
  data.dim = kPooledWidth;
  for (const auto& slide : slides) {
    const Image image = read_pnm(slide.image);
    const auto mask = foreground_mask(image);
    std::vector<PatchImage> patches;
    try {
      patches = sample_patches(image, mask, c.preprocess.patches, c.preprocess.window, seeds());
    } catch (const InsufficientForegroundError& e) {
      throw InsufficientForegroundError("slide " + slide.id + ": " + e.what(), e.valid_positions());
    }
    PatchBag bag{slide.id, patches.size(), kPooledWidth, {}, slide.labels};
    for (const auto& p : patches) {
      const std::uint64_t patch_seed = seeds();
      PatchImage final_patch;
      if (c.preprocess.augment) {
        final_patch = augment(p, patch_seed);
      } else {
        const std::size_t off = (c.preprocess.window - kPatchSide) / 2;
        final_patch = apply_augmentation(p, {off, off, false, false, 0});
      }
      const auto stats = pooled_statistics(final_patch.pixels);
      bag.features.insert(bag.features.end(), stats.begin(), stats.end());
    }
    spdlog::debug("slide {}: {} patches", slide.id, bag.patches);
    data.bags.push_back(std::move(bag));
  }
  write_bags(data, out);
  spdlog::info("wrote {} bags of {} patches x {} pooled features to {}", data.size(), c.preprocess.patches,
               kPooledWidth, out.string());
  return 0;
}

int cmd_ablate(const RunConfig& c) {
  const fs::path& data_dir = require(c.data, "--data");
  const fs::path& out = require(c.out, "--out");
  if (!fs::exists(data_dir / "train")) throw ConfigError("ablate needs a directory written by synth: " + data_dir.string());
  const Dataset train_set = read_bags(data_dir / "train");
  const Dataset val_set = is_bag_dir(data_dir / "val") ? read_bags(data_dir / "val", &train_set.schema) : Dataset{};
  const Dataset test_set = read_bags(data_dir / "test", &train_set.schema);
  if (test_set.empty()) throw ConfigError("ablate needs a non-empty test split");

  std::ostringstream csv;
  csv << "arm,seed,best_epoch,test_macro_f1,test_micro_f1\n";
  std::ostringstream summary;
  summary << "arm,mean_test_macro_f1,mean_test_micro_f1\n";
  for (const auto& arm : c.ablation.arms) {
    double macro = 0.0, micro = 0.0;
    for (auto seed : c.ablation.seeds) {
      TrainConfig t = train_config_for(c, train_set);
      t.dims.heads = arm.heads;
      t.dims.variant = arm.variant;
      t.seed = seed;
      spdlog::info("arm {} seed {}", arm.name, seed);
      const auto result = train(train_set, val_set, t, log_epoch);
      const auto report = evaluate(result.params, test_set, c.threads);
      csv << arm.name << ',' << seed << ',' << result.history[result.best_epoch].epoch << ','
          << format_double(report.average_macro_f1) << ',' << format_double(report.average_micro_f1) << '\n';
      macro += report.average_macro_f1;
      micro += report.average_micro_f1;
    }
    const double n = static_cast<double>(c.ablation.seeds.size());
    summary << arm.name << ',' << format_double(macro / n) << ',' << format_double(micro / n) << '\n';
    spdlog::info("arm {} mean test macro F1 {:.4f}", arm.name, macro / n);
  }
  prepare_out(out);
  write_text(out / "ablation_runs.csv", csv.str());
  write_text(out / "ablation_summary.csv", summary.str());
  write_text(out / "config.json", c.to_json());
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("patchbag");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("PATCHBAG_LOG")) {
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else throw ConfigError("PATCHBAG_LOG must be error, warn, info or debug, got '" + level + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tag classification of patch bags with a patch transformer"};
  app.require_subcommand(1);
  Flags flags;
  using Command = int (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"synth", "generate a synthetic dataset and its train/val/test split", cmd_synth},
      {"train", "train a model on a bag directory", cmd_train},
      {"eval", "score a checkpoint and write metrics and confusion matrices", cmd_eval},
      {"export-attention", "write per-bag patch rankings by tag attention", cmd_export},
      {"preprocess", "turn a list of slide images into a bag directory", cmd_preprocess},
      {"ablate", "train and test every ablation arm over several seeds", cmd_ablate},
  };
  std::vector<std::pair<CLI::App*, Command>> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common_flags(*sub, flags);
    handlers.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    configure_logging();
    const RunConfig config = resolve(flags);
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(config);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  }
  return 1;
}
