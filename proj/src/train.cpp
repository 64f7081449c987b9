#include "patchbag/train.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "patchbag/error.hpp"

namespace patchbag {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a non-negative finite number");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

Adam::Adam(AdamConfig config, std::vector<Tensor> params) : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& p : params_) {
    first_.emplace_back(p.size(), 0.0);
    second_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_)
    if (!p.has_grad()) throw ContractError("adam_step: parameter " + to_string(p.shape()) + " has no gradient");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto value = params_[i].mutable_data();
    auto grad = params_[i].grad();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * grad[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    params_[i].zero_grad();
  }
}

Tensor multi_task_loss(Graph& g, const std::vector<std::vector<Tensor>>& probabilities,
                       const std::vector<std::vector<std::size_t>>& labels, std::span<const double> lambda) {
  if (probabilities.empty()) throw ContractError("loss over an empty batch");
  if (probabilities.size() != labels.size()) throw ContractError("loss: one label set per bag required");
  const double n = static_cast<double>(probabilities.size());
  Tensor total;
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    if (probabilities[b].size() != lambda.size() || labels[b].size() != lambda.size())
      throw ContractError("loss: need one distribution, label and weight per task");
    for (std::size_t k = 0; k < lambda.size(); ++k) {
      const Tensor& p = probabilities[b][k];
      if (labels[b][k] >= p.size())
        throw ContractError("loss: label " + std::to_string(labels[b][k]) + " out of range for " +
                            std::to_string(p.size()) + " classes");
      Tensor term = scale(g, log(g, pick(g, p, labels[b][k])), -lambda[k] / n);
      total = total.defined() ? add(g, total, term) : term;
    }
  }
  return total;
}

void TrainConfig::validate(const TagSchema& schema) const {
  adam.validate();
  dims.validate();
  if (!lambda.empty()) {
    if (lambda.size() != schema.task_count()) throw ConfigError("lambda needs one weight per task");
    bool positive = false;
    for (double l : lambda) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda weights must be non-negative");
      positive = positive || l > 0.0;
    }
    if (!positive) throw ConfigError("lambda needs at least one positive weight");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

void check_compatible(const ModelParams& params, const Dataset& dataset) {
  if (params.schema != dataset.schema)
    throw SchemaMismatchError("model schema does not match data schema\nmodel:\n" + describe(params.schema) +
                              "data:\n" + describe(dataset.schema));
  if (params.dims.bag_dim() != dataset.dim)
    throw DimensionError("model expects patch rows of width " + std::to_string(params.dims.bag_dim()) +
                         ", data has width " + std::to_string(dataset.dim));
}

namespace {

std::vector<double> task_weights(const TrainConfig& config, const TagSchema& schema) {
  return config.lambda.empty() ? std::vector<double>(schema.task_count(), 1.0) : config.lambda;
}

std::vector<std::size_t> argmax_labels(const std::vector<std::vector<double>>& probs) {
  std::vector<std::size_t> out;
  for (const auto& p : probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[best]) best = c;
    out.push_back(best);
  }
  return out;
}

std::vector<std::vector<std::size_t>> truth_of(const Dataset& d) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& b : d.bags) out.push_back(b.labels);
  return out;
}

}  // namespace

std::vector<BagPrediction> predict(const ModelParams& params, const Dataset& dataset, std::size_t threads) {
  check_compatible(params, dataset);
  std::vector<BagPrediction> out(dataset.size());
  detail::parallel_for(dataset.size(), threads, [&](std::size_t i) {
    Graph g(false);
    auto result = forward(g, dataset.bags[i], params);
    for (const auto& p : result.probabilities) out[i].probabilities.push_back(p.to_vector());
    out[i].labels = argmax_labels(out[i].probabilities);
  });
  return out;
}

double dataset_loss(const ModelParams& params, const Dataset& dataset, std::span<const double> lambda,
                    std::size_t threads) {
  if (dataset.empty()) throw ContractError("loss over an empty dataset");
  const auto predictions = predict(params, dataset, threads);
  double total = 0.0;
  for (std::size_t b = 0; b < predictions.size(); ++b)
    for (std::size_t k = 0; k < lambda.size(); ++k)
      total += -lambda[k] * std::log(std::max(predictions[b].probabilities[k][dataset.bags[b].labels[k]], 1e-12));
  return total / static_cast<double>(dataset.size());
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, std::size_t threads) {
  if (dataset.empty()) throw ContractError("evaluate needs a non-empty dataset");
  const auto predictions = predict(params, dataset, threads);
  std::vector<std::vector<std::size_t>> predicted;
  for (const auto& p : predictions) predicted.push_back(p.labels);
  return metrics_report(dataset.schema, truth_of(dataset), predicted);
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_set.empty()) throw ConfigError("training split is empty");
  config.validate(train_set.schema);
  if (!val_set.empty() && val_set.schema != train_set.schema)
    throw SchemaMismatchError("validation schema differs from training schema\ntrain:\n" +
                              describe(train_set.schema) + "val:\n" + describe(val_set.schema));

  ModelDims dims = config.dims;
  if (dims.featurizer_hidden > 0) dims.input_dim = train_set.dim;
  ModelParams params = ModelParams::initialize(dims, train_set.schema, config.seed);
  check_compatible(params, train_set);
  const auto lambda = task_weights(config, train_set.schema);

  std::vector<Tensor> tensors;
  for (auto& p : params.parameters()) tensors.push_back(p.tensor);
  Adam optimizer(config.adam, tensors);

  TrainResult result;
  auto record_epoch = [&](std::size_t epoch, double loss) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss;
    if (!val_set.empty()) {
      const auto report = evaluate(params, val_set, config.threads);
      for (const auto& t : report.tasks) {
        rec.val_macro_f1.push_back(t.macro_f1);
        rec.val_micro_f1.push_back(t.micro_f1);
      }
      rec.val_average_macro_f1 = report.average_macro_f1;
    }
    const bool better = result.history.empty() ||
                        (!val_set.empty() && rec.val_average_macro_f1 >
                                                 result.history[result.best_epoch].val_average_macro_f1) ||
                        val_set.empty();
    if (better) {
      result.best_epoch = result.history.size();
      result.params = params.clone();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    return rec;
  };

  record_epoch(0, dataset_loss(params, train_set, lambda, config.threads));

  // Independent stream from the one used for initialization.
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Graph g;
      std::vector<std::vector<Tensor>> probs;
      std::vector<std::vector<std::size_t>> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& bag = train_set.bags[order[i]];
        probs.push_back(forward(g, bag, params).probabilities);
        labels.push_back(bag.labels);
      }
      Tensor loss = multi_task_loss(g, probs, labels, lambda);
      loss_sum += loss[0] * static_cast<double>(end - start);
      g.backward(loss);
      optimizer.step();
    }
    const auto rec = record_epoch(epoch, loss_sum / static_cast<double>(order.size()));
    if (config.stop_at_macro_f1 && !val_set.empty() && rec.val_average_macro_f1 >= *config.stop_at_macro_f1) break;
  }
  return result;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string history_csv(const std::vector<EpochRecord>& history, const TagSchema& schema) {
  std::ostringstream out;
  out << "epoch,train_loss";
  for (const auto& t : schema.tasks) out << ",val_macro_f1_" << t.name;
  for (const auto& t : schema.tasks) out << ",val_micro_f1_" << t.name;
  out << '\n';
  for (const auto& rec : history) {
    out << rec.epoch << ',' << format_double(rec.train_loss);
    for (std::size_t k = 0; k < schema.task_count(); ++k)
      out << ',' << (k < rec.val_macro_f1.size() ? format_double(rec.val_macro_f1[k]) : "");
    for (std::size_t k = 0; k < schema.task_count(); ++k)
      out << ',' << (k < rec.val_micro_f1.size() ? format_double(rec.val_micro_f1[k]) : "");
    out << '\n';
  }
  return out.str();
}

}  // namespace patchbag
