#include "patchbag/model.hpp"

#include <cmath>
#include <random>

#include "patchbag/error.hpp"

namespace patchbag {

std::string_view to_string(Variant variant) {
  return variant == Variant::gated ? "gated" : "sdpa";
}

Variant parse_variant(std::string_view text) {
  if (text == "gated") return Variant::gated;
  if (text == "sdpa") return Variant::sdpa;
  throw ConfigError("variant must be 'gated' or 'sdpa', got '" + std::string(text) + "'");
}

void ModelDims::validate() const {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (tag_hidden == 0) throw ConfigError("tag_hidden must be positive");
  if (heads > 0 && variant == Variant::gated && head_hidden == 0)
    throw ConfigError("head_hidden must be positive");
  if (heads > 0 && variant == Variant::sdpa && feature_dim % heads != 0)
    throw ConfigError("sdpa needs feature_dim (" + std::to_string(feature_dim) + ") divisible by heads (" +
                      std::to_string(heads) + ")");
  if (featurizer_hidden > 0 && input_dim == 0) throw ConfigError("input_dim must be positive");
}

ModelParams ModelParams::initialize(const ModelDims& dims, const TagSchema& schema, std::uint64_t seed) {
  dims.validate();
  schema.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.dims = dims;
  p.schema = schema;
  p.seed = seed;
  const std::size_t D = dims.feature_dim;
  if (dims.featurizer_hidden > 0)
    p.featurizer = FeaturizerParams::initialize(dims.input_dim, dims.featurizer_hidden, D, rng);
  if (dims.heads > 0) {
    if (dims.variant == Variant::gated) {
      for (std::size_t h = 0; h < dims.heads; ++h)
        p.gated_heads.push_back({uniform_fan_in({D, dims.head_hidden}, rng),
                                 uniform_fan_in({dims.head_hidden, 1}, rng)});
      p.projection = uniform_fan_in({dims.heads * D, D}, rng);
    } else {
      const std::size_t width = D / dims.heads;
      for (std::size_t h = 0; h < dims.heads; ++h) {
        SdpaHead head;
        head.query = uniform_fan_in({D, width}, rng);
        head.key = uniform_fan_in({D, width}, rng);
        head.value = uniform_fan_in({D, width}, rng);
        p.sdpa_heads.push_back(std::move(head));
      }
      p.projection = uniform_fan_in({D, D}, rng);
    }
  }
  for (const auto& task : schema.tasks)
    p.tags.push_back({uniform_fan_in({D, dims.tag_hidden}, rng), uniform_fan_in({dims.tag_hidden, 1}, rng),
                      uniform_fan_in({D, task.classes.size()}, rng)});
  return p;
}

std::vector<NamedTensor> ModelParams::parameters() const {
  std::vector<NamedTensor> out;
  if (featurizer) {
    out.push_back({"featurizer.hidden_weight", featurizer->hidden_weight});
    out.push_back({"featurizer.hidden_bias", featurizer->hidden_bias});
    out.push_back({"featurizer.output_weight", featurizer->output_weight});
    out.push_back({"featurizer.output_bias", featurizer->output_bias});
  }
  for (std::size_t h = 0; h < gated_heads.size(); ++h) {
    const std::string prefix = "head" + std::to_string(h) + ".";
    out.push_back({prefix + "hidden", gated_heads[h].hidden});
    out.push_back({prefix + "score", gated_heads[h].score});
  }
  for (std::size_t h = 0; h < sdpa_heads.size(); ++h) {
    const std::string prefix = "head" + std::to_string(h) + ".";
    out.push_back({prefix + "query", sdpa_heads[h].query});
    out.push_back({prefix + "key", sdpa_heads[h].key});
    out.push_back({prefix + "value", sdpa_heads[h].value});
  }
  if (projection.defined()) out.push_back({"projection", projection});
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const std::string prefix = "tag" + std::to_string(k) + ".";
    out.push_back({prefix + "hidden", tags[k].hidden});
    out.push_back({prefix + "score", tags[k].score});
    out.push_back({prefix + "classifier", tags[k].classifier});
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

namespace {

void expect_shape(const Tensor& t, const Shape& shape, const std::string& name) {
  if (!t.defined()) throw DimensionError("parameter " + name + " is missing");
  if (t.shape() != shape)
    throw DimensionError("parameter " + name + " has shape " + to_string(t.shape()) + ", expected " +
                         to_string(shape));
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError("parameter " + name + " holds a non-finite value");
}

}  // namespace

void ModelParams::validate() const {
  dims.validate();
  schema.validate();
  const std::size_t D = dims.feature_dim;
  if (dims.featurizer_hidden > 0) {
    if (!featurizer) throw DimensionError("featurizer parameters are missing");
    expect_shape(featurizer->hidden_weight, {dims.input_dim, dims.featurizer_hidden}, "featurizer.hidden_weight");
    expect_shape(featurizer->hidden_bias, {dims.featurizer_hidden}, "featurizer.hidden_bias");
    expect_shape(featurizer->output_weight, {dims.featurizer_hidden, D}, "featurizer.output_weight");
    expect_shape(featurizer->output_bias, {D}, "featurizer.output_bias");
  } else if (featurizer) {
    throw DimensionError("featurizer parameters present but featurizer_hidden is 0");
  }
  const bool gated = dims.variant == Variant::gated;
  if (gated_heads.size() != (gated ? dims.heads : 0) || sdpa_heads.size() != (gated ? 0 : dims.heads))
    throw DimensionError("head count does not match dims.heads = " + std::to_string(dims.heads));
  for (std::size_t h = 0; h < gated_heads.size(); ++h) {
    expect_shape(gated_heads[h].hidden, {D, dims.head_hidden}, "head" + std::to_string(h) + ".hidden");
    expect_shape(gated_heads[h].score, {dims.head_hidden, 1}, "head" + std::to_string(h) + ".score");
  }
  for (std::size_t h = 0; h < sdpa_heads.size(); ++h) {
    const Shape s{D, D / dims.heads};
    expect_shape(sdpa_heads[h].query, s, "head" + std::to_string(h) + ".query");
    expect_shape(sdpa_heads[h].key, s, "head" + std::to_string(h) + ".key");
    expect_shape(sdpa_heads[h].value, s, "head" + std::to_string(h) + ".value");
  }
  if (dims.heads > 0)
    expect_shape(projection, {gated ? dims.heads * D : D, D}, "projection");
  else if (projection.defined())
    throw DimensionError("projection present with 0 heads");
  if (tags.size() != schema.task_count())
    throw DimensionError("model has " + std::to_string(tags.size()) + " tag heads, schema has " +
                         std::to_string(schema.task_count()) + " tasks");
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const std::string prefix = "tag" + std::to_string(k) + ".";
    expect_shape(tags[k].hidden, {D, dims.tag_hidden}, prefix + "hidden");
    expect_shape(tags[k].score, {dims.tag_hidden, 1}, prefix + "score");
    expect_shape(tags[k].classifier, {D, schema.class_count(k)}, prefix + "classifier");
  }
}

ModelParams ModelParams::clone() const {
  ModelParams p = *this;
  if (p.featurizer) {
    auto& f = *p.featurizer;
    f.hidden_weight = f.hidden_weight.clone();
    f.hidden_bias = f.hidden_bias.clone();
    f.output_weight = f.output_weight.clone();
    f.output_bias = f.output_bias.clone();
  }
  for (auto& h : p.gated_heads) {
    h.hidden = h.hidden.clone();
    h.score = h.score.clone();
  }
  for (auto& h : p.sdpa_heads) {
    h.query = h.query.clone();
    h.key = h.key.clone();
    h.value = h.value.clone();
  }
  if (p.projection.defined()) p.projection = p.projection.clone();
  for (auto& t : p.tags) {
    t.hidden = t.hidden.clone();
    t.score = t.score.clone();
    t.classifier = t.classifier.clone();
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

void require_matrix(const Tensor& patches) {
  if (patches.rank() != 2) throw DimensionError("patch matrix must be rank 2, got " + to_string(patches.shape()));
}

// Softmax over patches of tanh(V·U)·w, returned as [M].
Tensor patch_scores(Graph& g, const Tensor& patches, const Tensor& hidden, const Tensor& score) {
  require_matrix(patches);
  Tensor logits = matmul(g, tanh(g, matmul(g, patches, hidden)), score);
  return reshape(g, softmax(g, logits, 0), {patches.rows()});
}

}  // namespace

Tensor head_attention(Graph& g, const Tensor& patches, const Tensor& hidden, const Tensor& score) {
  return patch_scores(g, patches, hidden, score);
}

Tensor head_feature(Graph& g, const Tensor& patches, const Tensor& weights) {
  return scale_rows(g, patches, weights);
}

TransformResult patch_transform(Graph& g, const Tensor& patches, const ModelParams& params) {
  require_matrix(patches);
  TransformResult result;
  if (params.gated_heads.empty()) {
    result.transformed = patches;
    return result;
  }
  std::vector<Tensor> features;
  for (const auto& head : params.gated_heads) {
    Tensor a = head_attention(g, patches, head.hidden, head.score);
    features.push_back(head_feature(g, patches, a));
    result.head_weights.push_back(a);
  }
  Tensor mixed = matmul(g, concat_cols(g, features), params.projection);
  result.transformed = relu(g, add(g, patches, mixed));
  return result;
}

TransformResult sdpa_transform(Graph& g, const Tensor& patches, const ModelParams& params) {
  require_matrix(patches);
  TransformResult result;
  if (params.sdpa_heads.empty()) {
    result.transformed = patches;
    return result;
  }
  const std::size_t D = patches.cols();
  if (D % params.sdpa_heads.size() != 0)
    throw ConfigError("sdpa needs feature width divisible by the head count");
  const double inv_sqrt_width = 1.0 / std::sqrt(static_cast<double>(D / params.sdpa_heads.size()));
  std::vector<Tensor> outputs;
  for (const auto& head : params.sdpa_heads) {
    Tensor q = matmul(g, patches, head.query);
    Tensor k = matmul(g, patches, head.key);
    Tensor v = matmul(g, patches, head.value);
    Tensor attn = softmax(g, scale(g, matmul(g, q, transpose(g, k)), inv_sqrt_width), 1);
    outputs.push_back(matmul(g, attn, v));
    result.head_weights.push_back(attn);
  }
  Tensor mixed = matmul(g, concat_cols(g, outputs), params.projection);
  result.transformed = relu(g, add(g, patches, mixed));
  return result;
}

TagRepresentation tag_attention(Graph& g, const Tensor& transformed, const Tensor& hidden, const Tensor& score) {
  Tensor alpha = patch_scores(g, transformed, hidden, score);
  Tensor pooled = matmul(g, reshape(g, alpha, {1, transformed.rows()}), transformed);
  return {reshape(g, pooled, {transformed.cols()}), alpha};
}

Tensor predict_tag(Graph& g, const Tensor& representation, const Tensor& classifier) {
  if (classifier.rank() != 2 || representation.size() != classifier.rows())
    throw DimensionError("predict_tag: representation " + to_string(representation.shape()) +
                         " does not match classifier " + to_string(classifier.shape()));
  Tensor logits = matmul(g, reshape(g, representation, {1, representation.size()}), classifier);
  return softmax(g, reshape(g, logits, {classifier.cols()}));
}

ForwardResult forward(Graph& g, const Tensor& patches, const ModelParams& params, std::string bag_id) {
  if (patches.rank() != 2 || patches.cols() != params.dims.bag_dim())
    throw DimensionError("bag " + (bag_id.empty() ? std::string("<anonymous>") : bag_id) + " has shape " +
                         to_string(patches.shape()) + ", model expects rows of width " +
                         std::to_string(params.dims.bag_dim()));
  Tensor features = params.featurizer ? featurize(g, patches, *params.featurizer) : patches;
  TransformResult transform = params.dims.variant == Variant::gated ? patch_transform(g, features, params)
                                                                     : sdpa_transform(g, features, params);
  ForwardResult result;
  result.attention.bag_id = std::move(bag_id);
  if (params.dims.variant == Variant::gated)
    for (const auto& a : transform.head_weights) result.attention.head_weights.push_back(a.to_vector());
  for (const auto& tag : params.tags) {
    TagRepresentation rep = tag_attention(g, transform.transformed, tag.hidden, tag.score);
    result.probabilities.push_back(predict_tag(g, rep.representation, tag.classifier));
    result.attention.tag_weights.push_back(rep.weights.to_vector());
  }
  return result;
}

Tensor bag_tensor(const PatchBag& bag) {
  if (bag.patches == 0) throw EmptyBagError("bag " + bag.id + " has no patches");
  return Tensor::from({bag.patches, bag.dim}, bag.features);
}

ForwardResult forward(Graph& g, const PatchBag& bag, const ModelParams& params) {
  return forward(g, bag_tensor(bag), params, bag.id);
}

}  // namespace patchbag
