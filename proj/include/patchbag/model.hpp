#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/bag.hpp"
#include "patchbag/featurizer.hpp"
#include "patchbag/graph.hpp"
#include "patchbag/schema.hpp"
#include "patchbag/tensor.hpp"

namespace patchbag {

// Patch transformation flavour. `gated` rescales each patch by a learned
// per-patch attention scalar; `sdpa` swaps in scaled dot-product
// self-attention as an ablation.
enum class Variant { gated, sdpa };

std::string_view to_string(Variant variant);
// Throws ConfigError for anything but "gated" or "sdpa".
Variant parse_variant(std::string_view text);

struct ModelDims {
  std::size_t feature_dim = 64;   // D, width of patch features and of V'
  std::size_t head_hidden = 32;   // hidden width of each patch attention head
  std::size_t tag_hidden = 32;    // hidden width of each tag attention unit
  std::size_t heads = 3;          // 0 disables patch transformation (V' = V)
  Variant variant = Variant::gated;
  // When > 0 a trainable featurizer maps input_dim-wide rows to feature_dim.
  std::size_t featurizer_hidden = 0;
  std::size_t input_dim = 64;

  // Width of the rows a bag must carry.
  std::size_t bag_dim() const noexcept { return featurizer_hidden ? input_dim : feature_dim; }
  void validate() const;

  bool operator==(const ModelDims&) const = default;
};

struct GatedHead {
  Tensor hidden;  // D x head_hidden
  Tensor score;   // head_hidden x 1
};

struct SdpaHead {
  Tensor query;  // D x D/heads
  Tensor key;
  Tensor value;
};

struct TagHead {
  Tensor hidden;      // D x tag_hidden
  Tensor score;       // tag_hidden x 1
  Tensor classifier;  // D x D_k
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// All learnable matrices of the network. Tensors are created with
// requires_grad; a trained ModelParams is read-only during inference and can
// be shared across threads.
struct ModelParams {
  ModelDims dims;
  TagSchema schema;
  std::uint64_t seed = 0;

  std::optional<FeaturizerParams> featurizer;
  std::vector<GatedHead> gated_heads;
  std::vector<SdpaHead> sdpa_heads;
  Tensor projection;  // (heads*D) x D for gated, D x D for sdpa; undefined with 0 heads
  std::vector<TagHead> tags;

  // Each matrix drawn from U(-sqrt(1/fan_in), +sqrt(1/fan_in)), fan_in being
  // its row count; biases start at zero.
  static ModelParams initialize(const ModelDims& dims, const TagSchema& schema, std::uint64_t seed);

  // Stable order: featurizer, heads in declaration order, projection, tags.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  // Checks every matrix shape against dims/schema and that all values are finite.
  void validate() const;
  // Deep copy with fresh storage.
  ModelParams clone() const;
};

// Per-bag attention weights: one length-M vector per gated head (empty for the
// sdpa variant, whose weights are M x M) and one per tag.
struct AttentionRecord {
  std::string bag_id;
  std::vector<std::vector<double>> head_weights;
  std::vector<std::vector<double>> tag_weights;
};

// a_h = softmax over patches of tanh(V·U_h)·w_h. Returns shape [M].
Tensor head_attention(Graph& g, const Tensor& patches, const Tensor& hidden, const Tensor& score);

// Row m of the result is a_h[m] * v_m.
Tensor head_feature(Graph& g, const Tensor& patches, const Tensor& weights);

struct TransformResult {
  Tensor transformed;                // M x D
  std::vector<Tensor> head_weights;  // [M] per head (gated) or M x M (sdpa)
};

// V' = ReLU(V + [f_1 .. f_h]·W).
TransformResult patch_transform(Graph& g, const Tensor& patches, const ModelParams& params);

// V' = ReLU(V + [head_1 .. head_h]·W) with head_i = softmax(Q Kᵀ/sqrt(d))·Val.
TransformResult sdpa_transform(Graph& g, const Tensor& patches, const ModelParams& params);

struct TagRepresentation {
  Tensor representation;  // [D]
  Tensor weights;         // [M]
};

TagRepresentation tag_attention(Graph& g, const Tensor& transformed, const Tensor& hidden, const Tensor& score);

// softmax(W_kᵀ t_k), shape [D_k].
Tensor predict_tag(Graph& g, const Tensor& representation, const Tensor& classifier);

struct ForwardResult {
  std::vector<Tensor> probabilities;  // one [D_k] per task
  AttentionRecord attention;
};

// Full pipeline for a bag laid out as an M x bag_dim tensor.
ForwardResult forward(Graph& g, const Tensor& patches, const ModelParams& params, std::string bag_id = {});
ForwardResult forward(Graph& g, const PatchBag& bag, const ModelParams& params);

// Bag features as a constant (non-tracked) M x dim tensor.
Tensor bag_tensor(const PatchBag& bag);

}  // namespace patchbag
