#include "memesent/model.hpp"

#include <cmath>
#include <numbers>

#include "memesent/error.hpp"
#include "memesent/rng.hpp"

namespace memesent {

// ------------------------------------------------------------------ variants

VariantTraits traits(ModelVariant variant) {
  switch (variant) {
  case ModelVariant::Baseline: return {VisualSource::None, false, true};
  case ModelVariant::ObjNoSpatial: return {VisualSource::Objects, false, false};
  case ModelVariant::ObjSpatial: return {VisualSource::Objects, true, false};
  case ModelVariant::ImgObjSpatial: return {VisualSource::Objects, true, true};
  case ModelVariant::FaceNoSpatial: return {VisualSource::Faces, false, false};
  case ModelVariant::FaceSpatial: return {VisualSource::Faces, true, false};
  case ModelVariant::ImgFaceSpatial: return {VisualSource::Faces, true, true};
  }
  throw UsageError("unknown model variant");
}

std::string_view variant_name(ModelVariant variant) {
  switch (variant) {
  case ModelVariant::Baseline: return "baseline";
  case ModelVariant::ObjNoSpatial: return "obj-nospatial";
  case ModelVariant::ObjSpatial: return "obj-spatial";
  case ModelVariant::ImgObjSpatial: return "img-obj-spatial";
  case ModelVariant::FaceNoSpatial: return "face-nospatial";
  case ModelVariant::FaceSpatial: return "face-spatial";
  case ModelVariant::ImgFaceSpatial: return "img-face-spatial";
  }
  return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
  std::string valid;
  for (ModelVariant v : kAllVariants) {
    if (variant_name(v) == name) return v;
    if (!valid.empty()) valid += ", ";
    valid += variant_name(v);
  }
  throw UsageError("unknown variant \"" + std::string(name) + "\"; valid variants: " + valid);
}

int text_item_width(ModelVariant variant, const ModelConfig& config) {
  return config.dims.text + (traits(variant).use_spatial ? SpatialEncoding::kSize : 0);
}

int visual_item_width(ModelVariant variant, const ModelConfig& config) {
  const VariantTraits t = traits(variant);
  const int base = t.visual == VisualSource::Faces ? config.dims.face : config.dims.visual;
  return base + (t.use_spatial ? SpatialEncoding::kSize : 0);
}

std::vector<int> modality_widths(ModelVariant variant, const ModelConfig& config) {
  const VariantTraits t = traits(variant);
  if (t.visual == VisualSource::None) return {config.dims.visual, config.dims.text};
  std::vector<int> widths;
  if (t.include_image) widths.push_back(config.dims.visual);
  widths.push_back(visual_item_width(variant, config));
  widths.push_back(text_item_width(variant, config));
  return widths;
}

// ------------------------------------------------------------------ params

namespace {

DenseLayer zero_dense(int in, int out) { return DenseLayer{Matrix::Zero(out, in), Vector::Zero(out)}; }

ModelParams make_shape(ModelVariant variant, const ModelConfig& config, std::uint64_t seed) {
  if (config.hidden_size < 1) throw UsageError("co-attention hidden size must be positive");
  ModelParams p;
  p.variant = variant;
  p.config = config;
  p.seed = seed;
  const VariantTraits t = traits(variant);
  if (t.visual != VisualSource::None) {
    const int d1 = text_item_width(variant, config);
    const int d2 = visual_item_width(variant, config);
    const int k = config.hidden_size;
    p.co_attention = CoAttentionParams{Matrix::Zero(d1, d2), Matrix::Zero(k, d1),
                                       Matrix::Zero(k, d2), Vector::Zero(k), Vector::Zero(k)};
  }
  int concat_width = 0;
  for (int width : modality_widths(variant, config)) {
    FusionStack stack;
    int in = width;
    for (std::size_t l = 0; l < kFusionLayerSizes.size(); ++l) {
      stack.layers[l] = zero_dense(in, kFusionLayerSizes[l]);
      in = kFusionLayerSizes[l];
    }
    p.fusion.stacks.push_back(std::move(stack));
    concat_width += width;
  }
  p.head.dense = zero_dense(concat_width, kNumClasses);
  return p;
}

} // namespace

ModelParams ModelParams::zeros_like() const { return make_shape(variant, config, seed); }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) {
    n += static_cast<std::size_t>(r * c);
  });
  return n;
}

ModelParams init_params(ModelVariant variant, const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = make_shape(variant, config, seed);
  Rng rng(seed);
  p.for_each_tensor([&](const std::string& name, double* data, Eigen::Index r, Eigen::Index c) {
    if (is_bias_tensor(name)) return;
    for (Eigen::Index i = 0; i < r * c; ++i) data[i] = rng.normal(0.0, 0.02);
  });
  return p;
}

void check_params(const ModelParams& params) {
  const ModelParams expected = make_shape(params.variant, params.config, params.seed);
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> want, got;
  expected.for_each_tensor([&](const std::string& n, const double*, Eigen::Index r, Eigen::Index c) {
    want.push_back({n, {r, c}});
  });
  params.for_each_tensor([&](const std::string& n, const double*, Eigen::Index r, Eigen::Index c) {
    got.push_back({n, {r, c}});
  });
  if (want != got) {
    throw DataError("parameters do not match the wiring of variant " +
                    std::string(variant_name(params.variant)));
  }
}

// ------------------------------------------------------------------ blocks

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

namespace {

Vector gelu(const Vector& x) { return x.unaryExpr([](double v) { return memesent::gelu(v); }); }

Vector gelu_derivative(const Vector& x) {
  return x.unaryExpr([](double v) { return memesent::gelu_derivative(v); });
}

Vector softmax(const Vector& r, std::span<const std::uint8_t> valid = {}) {
  bool any_valid = false;
  if (!valid.empty()) {
    for (auto v : valid) any_valid = any_valid || v != 0;
  }
  const bool masked = any_valid;
  double max_r = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!masked || valid[i] != 0) max_r = std::max(max_r, r[i]);
  }
  Vector e(r.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    e[i] = (!masked || valid[i] != 0) ? std::exp(r[i] - max_r) : 0.0;
    sum += e[i];
  }
  return e / sum;
}

Vector log_softmax(const Vector& g) {
  const double m = g.maxCoeff();
  const double lse = m + std::log((g.array() - m).exp().sum());
  return g.array() - lse;
}

// Softmax Jacobian-vector product: a .* (d - a.d).
Vector softmax_backward(const Vector& a, const Vector& d) { return a.array() * (d.array() - a.dot(d)); }

struct StackTrace {
  std::array<Vector, 4> pre;
  std::array<Vector, 4> out;
};

double stack_forward(const FusionStack& stack, const Vector& x, StackTrace* trace) {
  Vector h = x;
  for (std::size_t l = 0; l < 4; ++l) {
    Vector pre = stack.layers[l].weight * h + stack.layers[l].bias;
    h = l + 1 < 4 ? gelu(pre) : pre;
    if (trace) {
      trace->pre[l] = std::move(pre);
      trace->out[l] = h;
    }
  }
  return h[0];
}

// Returns dL/dx.
Vector stack_backward(const FusionStack& stack, const Vector& x, const StackTrace& trace, double d_raw,
                      FusionStack& grad) {
  Vector d_pre = Vector::Constant(1, d_raw);
  for (int l = 3; l >= 0; --l) {
    const Vector& input = l == 0 ? x : trace.out[l - 1];
    grad.layers[l].weight.noalias() += d_pre * input.transpose();
    grad.layers[l].bias += d_pre;
    Vector d_in = stack.layers[l].weight.transpose() * d_pre;
    if (l > 0) {
      d_pre = d_in.array() * gelu_derivative(trace.pre[l - 1]).array();
    } else {
      return d_in;
    }
  }
  return {};
}

void check_modalities(std::span<const Vector> vectors, const FusionParams& params) {
  if (vectors.size() != params.stacks.size()) {
    throw DataError("modality count " + std::to_string(vectors.size()) + " does not match " +
                    std::to_string(params.stacks.size()) + " fusion stacks");
  }
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    if (vectors[m].size() != params.stacks[m].layers[0].weight.cols()) {
      throw DataError("modality " + std::to_string(m) + " width does not match its fusion stack");
    }
  }
}

} // namespace

CoAttentionOutput co_attention_pool(const Matrix& T, const Matrix& V, const CoAttentionParams& p,
                                    std::span<const std::uint8_t> text_valid,
                                    std::span<const std::uint8_t> visual_valid) {
  if (T.rows() < 1 || V.rows() < 1) throw DataError("co-attention needs at least one item per side");
  if (T.cols() != p.W_b.rows() || V.cols() != p.W_b.cols() || p.W_t.cols() != T.cols() ||
      p.W_v.cols() != V.cols() || p.w_ht.size() != p.W_t.rows() || p.w_hv.size() != p.W_v.rows()) {
    throw DataError("co-attention dimension mismatch");
  }
  if ((!text_valid.empty() && text_valid.size() != static_cast<std::size_t>(T.rows())) ||
      (!visual_valid.empty() && visual_valid.size() != static_cast<std::size_t>(V.rows()))) {
    throw DataError("co-attention mask length mismatch");
  }
  CoAttentionOutput o;
  const Matrix TW = T * p.W_b;
  o.C = (TW * V.transpose()).array().tanh();
  o.A_t = p.W_t * T.transpose();
  o.A_v = p.W_v * V.transpose();
  o.H_v = (o.A_v + o.A_t * o.C).array().tanh();
  o.H_t = (o.A_t + o.A_v * o.C.transpose()).array().tanh();
  o.a_v = softmax(o.H_v.transpose() * p.w_hv, visual_valid);
  o.a_t = softmax(o.H_t.transpose() * p.w_ht, text_valid);
  o.v_hat = V.transpose() * o.a_v;
  o.t_hat = T.transpose() * o.a_t;
  return o;
}

void co_attention_backward(const CoAttentionOutput& o, const Matrix& T, const Matrix& V,
                           const CoAttentionParams& p, const Vector& d_t_hat, const Vector& d_v_hat,
                           CoAttentionParams& grad) {
  const Vector dr_t = softmax_backward(o.a_t, T * d_t_hat);
  const Vector dr_v = softmax_backward(o.a_v, V * d_v_hat);
  grad.w_ht.noalias() += o.H_t * dr_t;
  grad.w_hv.noalias() += o.H_v * dr_v;
  const Matrix dP_t = (p.w_ht * dr_t.transpose()).array() * (1.0 - o.H_t.array().square());
  const Matrix dP_v = (p.w_hv * dr_v.transpose()).array() * (1.0 - o.H_v.array().square());
  const Matrix dA_t = dP_t + dP_v * o.C.transpose();
  const Matrix dA_v = dP_v + dP_t * o.C;
  const Matrix dC = o.A_t.transpose() * dP_v + dP_t.transpose() * o.A_v;
  const Matrix dQ = dC.array() * (1.0 - o.C.array().square());
  grad.W_b.noalias() += T.transpose() * (dQ * V);
  grad.W_t.noalias() += dA_t * T;
  grad.W_v.noalias() += dA_v * V;
}

Vector modality_attention(std::span<const Vector> vectors, const FusionParams& params) {
  check_modalities(vectors, params);
  Vector raw(static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    raw[m] = stack_forward(params.stacks[m], vectors[m], nullptr);
  }
  return softmax(raw);
}

namespace {

Vector weighted_concat(std::span<const Vector> vectors, const Vector& scores) {
  Eigen::Index width = 0;
  for (const auto& v : vectors) width += v.size();
  Vector z(width);
  Eigen::Index offset = 0;
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    z.segment(offset, vectors[m].size()) = scores[m] * vectors[m];
    offset += vectors[m].size();
  }
  return z;
}

} // namespace

Vector fuse_and_classify(std::span<const Vector> vectors, const Vector& scores, const HeadParams& head) {
  if (static_cast<Eigen::Index>(vectors.size()) != scores.size()) {
    throw DataError("score count does not match modality count");
  }
  const Vector z = weighted_concat(vectors, scores);
  if (z.size() != head.dense.weight.cols()) throw DataError("head input width mismatch");
  return log_softmax(gelu(Vector(head.dense.weight * z + head.dense.bias)));
}

int predict_class(const Vector& log_probs) {
  int best = 0;
  for (int c = 1; c < log_probs.size(); ++c) {
    if (log_probs[c] > log_probs[best]) best = c;
  }
  return best;
}

// ------------------------------------------------------------------ full model

ModelInput prepare_input(ModelVariant variant, const FeatureRecord& record, const ModelConfig& config) {
  const VariantTraits t = traits(variant);
  ModelInput in;
  in.image = record.image_embedding;
  in.text = record.text_embedding;
  if (in.image.size() != config.dims.visual || in.text.size() != config.dims.text) {
    throw DataError("record " + record.meme_id + " does not match the model dimensions");
  }
  if (t.visual == VisualSource::None) return in;

  auto fill = [&](auto const& slots, int base_dim, Matrix& items, std::vector<std::uint8_t>& valid) {
    const int width = base_dim + (t.use_spatial ? SpatialEncoding::kSize : 0);
    items.resize(static_cast<Eigen::Index>(slots.size()), width);
    valid.assign(slots.size(), 0);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (slots[s].embedding.size() != base_dim) {
        throw DataError("record " + record.meme_id + " slot dimension does not match the model");
      }
      items.row(static_cast<Eigen::Index>(s)).head(base_dim) = slots[s].embedding.transpose();
      if (t.use_spatial) {
        for (int c = 0; c < SpatialEncoding::kSize; ++c) {
          items(static_cast<Eigen::Index>(s), base_dim + c) = slots[s].spatial.coords[c];
        }
      }
      valid[s] = slots[s].is_pad ? 0 : 1;
    }
  };
  fill(record.text_slots, config.dims.text, in.text_items, in.text_valid);
  if (t.visual == VisualSource::Objects) {
    fill(record.object_slots, config.dims.visual, in.visual_items, in.visual_valid);
  } else {
    fill(record.face_slots, config.dims.face, in.visual_items, in.visual_valid);
  }
  return in;
}

std::vector<ModelInput> prepare_inputs(ModelVariant variant, std::span<const FeatureRecord> records,
                                       const ModelConfig& config) {
  std::vector<ModelInput> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_input(variant, r, config));
  return out;
}

namespace {

struct FullTrace {
  std::optional<CoAttentionOutput> co;
  std::vector<Vector> modalities;
  std::vector<StackTrace> stacks;
  Vector raw;
  Vector scores;
  Vector z;
  Vector u;
  Vector log_probs;
};

FullTrace run_forward(const ModelParams& p, const ModelInput& in) {
  FullTrace tr;
  const VariantTraits t = traits(p.variant);
  if (t.visual == VisualSource::None) {
    tr.modalities = {in.image, in.text};
  } else {
    const std::span<const std::uint8_t> tv =
        p.config.mask_pads ? std::span<const std::uint8_t>(in.text_valid) : std::span<const std::uint8_t>{};
    const std::span<const std::uint8_t> vv = p.config.mask_pads
                                                 ? std::span<const std::uint8_t>(in.visual_valid)
                                                 : std::span<const std::uint8_t>{};
    tr.co = co_attention_pool(in.text_items, in.visual_items, *p.co_attention, tv, vv);
    if (t.include_image) tr.modalities.push_back(in.image);
    tr.modalities.push_back(tr.co->v_hat);
    tr.modalities.push_back(tr.co->t_hat);
  }
  check_modalities(tr.modalities, p.fusion);
  const std::size_t m_count = tr.modalities.size();
  tr.stacks.resize(m_count);
  tr.raw.resize(static_cast<Eigen::Index>(m_count));
  for (std::size_t m = 0; m < m_count; ++m) {
    tr.raw[m] = stack_forward(p.fusion.stacks[m], tr.modalities[m], &tr.stacks[m]);
  }
  tr.scores = softmax(tr.raw);
  tr.z = weighted_concat(tr.modalities, tr.scores);
  if (tr.z.size() != p.head.dense.weight.cols()) throw DataError("head input width mismatch");
  tr.u = p.head.dense.weight * tr.z + p.head.dense.bias;
  tr.log_probs = log_softmax(gelu(tr.u));
  return tr;
}

void run_backward(const ModelParams& p, const ModelInput& in, const FullTrace& tr, const Vector& d_lp,
                  ModelParams& grad) {
  const Vector probs = tr.log_probs.array().exp();
  const Vector d_g = d_lp.array() - probs.array() * d_lp.sum();
  const Vector d_u = d_g.array() * gelu_derivative(tr.u).array();
  grad.head.dense.weight.noalias() += d_u * tr.z.transpose();
  grad.head.dense.bias += d_u;
  const Vector d_z = p.head.dense.weight.transpose() * d_u;

  const std::size_t m_count = tr.modalities.size();
  std::vector<Vector> d_x(m_count);
  Vector d_score(static_cast<Eigen::Index>(m_count));
  Eigen::Index offset = 0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const Eigen::Index w = tr.modalities[m].size();
    const Vector d_zm = d_z.segment(offset, w);
    d_x[m] = tr.scores[m] * d_zm;
    d_score[m] = tr.modalities[m].dot(d_zm);
    offset += w;
  }
  const Vector d_raw = softmax_backward(tr.scores, d_score);
  for (std::size_t m = 0; m < m_count; ++m) {
    d_x[m] += stack_backward(p.fusion.stacks[m], tr.modalities[m], tr.stacks[m], d_raw[m],
                             grad.fusion.stacks[m]);
  }
  if (tr.co) {
    // Pooled vectors are the last two modalities: visual, then text.
    co_attention_backward(*tr.co, in.text_items, in.visual_items, *p.co_attention, d_x[m_count - 1],
                          d_x[m_count - 2], *grad.co_attention);
  }
}

} // namespace

ForwardTrace forward_trace(const ModelParams& params, const ModelInput& input) {
  FullTrace tr = run_forward(params, input);
  return ForwardTrace{std::move(tr.co), std::move(tr.modalities), std::move(tr.raw),
                      std::move(tr.scores), std::move(tr.log_probs)};
}

Vector forward_one(const ModelParams& params, const ModelInput& input) {
  return run_forward(params, input).log_probs;
}

Matrix forward(const ModelParams& params, std::span<const ModelInput> inputs) {
  Matrix out(static_cast<Eigen::Index>(inputs.size()), kNumClasses);
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    out.row(static_cast<Eigen::Index>(b)) = forward_one(params, inputs[b]).transpose();
  }
  return out;
}

Matrix forward(ModelVariant variant, std::span<const FeatureRecord> batch, const ModelParams& params) {
  if (variant != params.variant) {
    throw DataError("parameters were built for variant " + std::string(variant_name(params.variant)) +
                    ", not " + std::string(variant_name(variant)));
  }
  const std::vector<ModelInput> inputs = prepare_inputs(variant, batch, params.config);
  return forward(params, inputs);
}

double loss_and_gradient(const ModelParams& params, std::span<const ModelInput* const> inputs,
                         std::span<const int> labels, const std::array<double, 3>& class_weights,
                         ModelParams& grad) {
  if (inputs.size() != labels.size()) throw DataError("inputs and labels differ in length");
  double weight_sum = 0.0;
  for (int y : labels) {
    if (y < 0 || y >= kNumClasses) throw DataError("label out of range");
    weight_sum += class_weights[y];
  }
  if (!(weight_sum > 0.0)) throw DataError("batch has zero total class weight");
  double loss = 0.0;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const FullTrace tr = run_forward(params, *inputs[b]);
    const int y = labels[b];
    loss += class_weights[y] * -tr.log_probs[y];
    Vector d_lp = Vector::Zero(kNumClasses);
    d_lp[y] = -class_weights[y] / weight_sum;
    run_backward(params, *inputs[b], tr, d_lp, grad);
  }
  return loss / weight_sum;
}

double loss_and_gradient(const ModelParams& params, std::span<const ModelInput> inputs,
                         std::span<const int> labels, const std::array<double, 3>& class_weights,
                         ModelParams& grad) {
  std::vector<const ModelInput*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& in : inputs) ptrs.push_back(&in);
  return loss_and_gradient(params, std::span<const ModelInput* const>(ptrs), labels, class_weights, grad);
}

} // namespace memesent
