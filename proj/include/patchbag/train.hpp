#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchbag/bag.hpp"
#include "patchbag/graph.hpp"
#include "patchbag/metrics.hpp"
#include "patchbag/model.hpp"

namespace patchbag {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Adam with bias correction over a fixed list of parameter tensors.
// step() consumes the populated gradients and clears them.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<Tensor> params);

  // Throws ContractError if any parameter lacks a gradient.
  void step();

  std::size_t steps() const noexcept { return steps_; }
  std::span<const double> first_moment(std::size_t i) const { return first_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return second_[i]; }

 private:
  AdamConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

// sum_k lambda_k * mean_n(-log max(p_nk[label_nk], 1e-12)).
// probabilities[n][k] is bag n's distribution for task k.
Tensor multi_task_loss(Graph& g, const std::vector<std::vector<Tensor>>& probabilities,
                       const std::vector<std::vector<std::size_t>>& labels, std::span<const double> lambda);

struct TrainConfig {
  AdamConfig adam;
  std::vector<double> lambda;  // empty means 1 per task
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  ModelDims dims;
  // Stop after the first epoch whose average validation macro F1 reaches this.
  std::optional<double> stop_at_macro_f1;
  std::size_t threads = 1;

  void validate(const TagSchema& schema) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  std::vector<double> val_macro_f1;
  std::vector<double> val_micro_f1;
  double val_average_macro_f1 = 0.0;
};

struct TrainResult {
  ModelParams params;  // best validation checkpoint
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Seeded per-epoch shuffling, mini-batch gradients averaged over bags, Adam
// updates, and model selection by average validation macro F1 (earliest epoch
// wins ties; the last epoch when `val` is empty).
TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// CSV: epoch, train_loss, val_macro_f1_<task>..., val_micro_f1_<task>...
std::string history_csv(const std::vector<EpochRecord>& history, const TagSchema& schema);

struct BagPrediction {
  std::vector<std::vector<double>> probabilities;
  std::vector<std::size_t> labels;  // argmax per task, lowest index on ties
};

std::vector<BagPrediction> predict(const ModelParams& params, const Dataset& dataset, std::size_t threads = 1);

// Mean multi-task loss of `params` over the dataset, without recording.
double dataset_loss(const ModelParams& params, const Dataset& dataset, std::span<const double> lambda,
                    std::size_t threads = 1);

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, std::size_t threads = 1);

// Throws SchemaMismatchError (naming both schemas) or DimensionError when the
// dataset cannot be fed to the model.
void check_compatible(const ModelParams& params, const Dataset& dataset);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace patchbag
