#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memesent/features.hpp"
#include "memesent/spatial.hpp"

namespace memesent {

enum class ModelVariant {
  Baseline,
  ObjNoSpatial,
  ObjSpatial,
  ImgObjSpatial,
  FaceNoSpatial,
  FaceSpatial,
  ImgFaceSpatial,
};

inline constexpr std::array<ModelVariant, 7> kAllVariants{
    ModelVariant::Baseline,      ModelVariant::ObjNoSpatial, ModelVariant::ObjSpatial,
    ModelVariant::ImgObjSpatial, ModelVariant::FaceNoSpatial, ModelVariant::FaceSpatial,
    ModelVariant::ImgFaceSpatial};

enum class VisualSource { None, Objects, Faces };

struct VariantTraits {
  VisualSource visual = VisualSource::None;
  bool use_spatial = false;
  bool include_image = false;
};

VariantTraits traits(ModelVariant variant);

/// Kebab-case name, e.g. "img-obj-spatial".
std::string_view variant_name(ModelVariant variant);

/// Throws UsageError listing every valid name.
ModelVariant parse_variant(std::string_view name);

struct ModelConfig {
  EncoderDims dims;
  /// Co-attention hidden size k.
  int hidden_size = 256;
  /// Exclude pad slots from the co-attention softmax. Off by default: pads
  /// take part with their pad vectors.
  bool mask_pads = false;
};

inline constexpr std::array<int, 4> kFusionLayerSizes{256, 64, 8, 1};

struct DenseLayer {
  Matrix weight; // out x in
  Vector bias;
};

struct CoAttentionParams {
  Matrix W_b; // d1 x d2
  Matrix W_t; // k x d1
  Matrix W_v; // k x d2
  Vector w_ht;
  Vector w_hv;
};

/// input -> 256 -> 64 -> 8 -> 1, GeLU between layers, raw final scalar.
struct FusionStack {
  std::array<DenseLayer, 4> layers;
};

struct FusionParams {
  std::vector<FusionStack> stacks;
};

struct HeadParams {
  DenseLayer dense; // concat width -> 3
};

struct ModelParams {
  ModelVariant variant = ModelVariant::Baseline;
  ModelConfig config;
  std::uint64_t seed = 0;
  std::optional<CoAttentionParams> co_attention;
  FusionParams fusion;
  HeadParams head;

  /// Visits every tensor in a fixed order as (name, data, rows, cols).
  /// Vectors are visited as rows x 1.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_impl(*this, f);
  }

  /// Same shapes, every entry zero.
  ModelParams zeros_like() const;
  std::size_t parameter_count() const;

private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    auto mat = [&](const std::string& name, auto& m) { f(name, m.data(), m.rows(), m.cols()); };
    if (self.co_attention) {
      auto& ca = *self.co_attention;
      mat("coattn.W_b", ca.W_b);
      mat("coattn.W_t", ca.W_t);
      mat("coattn.W_v", ca.W_v);
      mat("coattn.w_ht", ca.w_ht);
      mat("coattn.w_hv", ca.w_hv);
    }
    for (std::size_t m = 0; m < self.fusion.stacks.size(); ++m) {
      for (std::size_t l = 0; l < 4; ++l) {
        const std::string prefix = "fusion." + std::to_string(m) + "." + std::to_string(l);
        mat(prefix + ".weight", self.fusion.stacks[m].layers[l].weight);
        mat(prefix + ".bias", self.fusion.stacks[m].layers[l].bias);
      }
    }
    mat("head.weight", self.head.dense.weight);
    mat("head.bias", self.head.dense.bias);
  }
};

inline bool is_bias_tensor(std::string_view name) {
  return name.size() >= 4 && name.substr(name.size() - 4) == "bias";
}

/// Width of each text / visual item fed to co-attention (base dim, +4 with
/// spatial encodings).
int text_item_width(ModelVariant variant, const ModelConfig& config);
int visual_item_width(ModelVariant variant, const ModelConfig& config);
/// Widths of the fused modality vectors, in concatenation order.
std::vector<int> modality_widths(ModelVariant variant, const ModelConfig& config);

/// Weights ~ N(0, 0.02^2) in for_each_tensor order; biases zero.
ModelParams init_params(ModelVariant variant, const ModelConfig& config, std::uint64_t seed);

// ------------------------------------------------------------------ blocks

double gelu(double x);
double gelu_derivative(double x);

struct CoAttentionOutput {
  Vector t_hat;
  Vector v_hat;
  Vector a_t;
  Vector a_v;
  // Intermediates kept for the backward pass.
  Matrix C;   // i x j affinity
  Matrix A_t; // k x i
  Matrix A_v; // k x j
  Matrix H_t; // k x i
  Matrix H_v; // k x j
};

/// Parallel co-attention between text items (rows of T) and visual items
/// (rows of V). Optional validity masks drop items from the softmax; an
/// all-invalid mask falls back to attending over every item.
CoAttentionOutput co_attention_pool(const Matrix& T, const Matrix& V, const CoAttentionParams& params,
                                    std::span<const std::uint8_t> text_valid = {},
                                    std::span<const std::uint8_t> visual_valid = {});

/// Accumulates parameter gradients given dL/dt_hat and dL/dv_hat.
void co_attention_backward(const CoAttentionOutput& out, const Matrix& T, const Matrix& V,
                           const CoAttentionParams& params, const Vector& d_t_hat,
                           const Vector& d_v_hat, CoAttentionParams& grad);

/// Softmax over each modality's dense-stack score.
Vector modality_attention(std::span<const Vector> vectors, const FusionParams& params);

/// Concatenates score-weighted vectors, applies the GeLU-activated dense
/// head and returns log-probabilities over the three classes.
Vector fuse_and_classify(std::span<const Vector> vectors, const Vector& scores, const HeadParams& head);

int predict_class(const Vector& log_probs);

// ------------------------------------------------------------------ full model

/// Per-record model input, prepared once per (variant, record).
struct ModelInput {
  Vector image;
  Vector text;
  Matrix text_items;   // 18 x d1
  Matrix visual_items; // 10 x d2 (objects) or 5 x d2 (faces)
  std::vector<std::uint8_t> text_valid;
  std::vector<std::uint8_t> visual_valid;
};

ModelInput prepare_input(ModelVariant variant, const FeatureRecord& record, const ModelConfig& config);
std::vector<ModelInput> prepare_inputs(ModelVariant variant, std::span<const FeatureRecord> records,
                                       const ModelConfig& config);

/// Intermediate values of one forward pass; exposed for tests.
struct ForwardTrace {
  std::optional<CoAttentionOutput> co_attention;
  std::vector<Vector> modalities;
  Vector raw_scores;
  Vector scores;
  Vector log_probs;
};

ForwardTrace forward_trace(const ModelParams& params, const ModelInput& input);
Vector forward_one(const ModelParams& params, const ModelInput& input);

/// batch x 3 log-probabilities.
Matrix forward(ModelVariant variant, std::span<const FeatureRecord> batch, const ModelParams& params);
Matrix forward(const ModelParams& params, std::span<const ModelInput> inputs);

/// Class-weighted mean NLL over the batch; adds its gradient into `grad`
/// (which must have the shape of params).
double loss_and_gradient(const ModelParams& params, std::span<const ModelInput> inputs,
                         std::span<const int> labels, const std::array<double, 3>& class_weights,
                         ModelParams& grad);

/// Same, over a gathered mini-batch: inputs[b] has label labels[b].
double loss_and_gradient(const ModelParams& params, std::span<const ModelInput* const> inputs,
                         std::span<const int> labels, const std::array<double, 3>& class_weights,
                         ModelParams& grad);

/// Throws DataError when the parameters do not fit the variant and dims.
void check_params(const ModelParams& params);

} // namespace memesent
