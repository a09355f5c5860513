#pragma once

// Cross-space alignment from term representations to concept targets:
// multi-level attention over per-layer stacks, an optional rectified
// transform of the static term vector, a linear map (optionally rectified),
// and max-margin triplet training against the hardest in-batch negative.
// Gradients are derived by hand; the optimiser is Adam with decoupled
// weight decay.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medlink/embed_store.hpp"
#include "medlink/error.hpp"
#include "medlink/linalg.hpp"
#include "medlink/random.hpp"
#include "medlink/target_index.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

/// How the per-layer stack feeds the model.
enum class StackMode { None, Layer, Mla };

inline std::string_view to_string(StackMode m) {
  switch (m) {
    case StackMode::None: return "none";
    case StackMode::Layer: return "layer";
    case StackMode::Mla: return "mla";
  }
  return "?";
}

inline std::optional<StackMode> parse_stack_mode(std::string_view s) {
  if (s == "none") return StackMode::None;
  if (s == "layer") return StackMode::Layer;
  if (s == "mla") return StackMode::Mla;
  return std::nullopt;
}

inline constexpr std::size_t kTopLayer = std::numeric_limits<std::size_t>::max();

/// Input pipeline and output size of an AlignModel. The model input is the
/// static term vector (raw, or through the rectified branch transform)
/// followed by the stack representation (one layer, or the MLA fusion).
struct AlignShape {
  std::size_t ft_dim = 0;  // 0: no static term vector
  bool ft_transform = false;
  std::size_t ft_transform_dim = 300;
  StackMode stack_mode = StackMode::None;
  std::size_t stack_layers = 0;
  std::size_t stack_dim = 0;
  std::size_t stack_layer = kTopLayer;  // used by StackMode::Layer
  std::size_t out_dim = 0;
  bool use_relu = true;

  std::size_t ft_part() const { return ft_dim == 0 ? 0 : (ft_transform ? ft_transform_dim : ft_dim); }
  std::size_t stack_part() const { return stack_mode == StackMode::None ? 0 : stack_dim; }
  std::size_t input_dim() const { return ft_part() + stack_part(); }
  std::size_t layer_index() const { return stack_layer == kTopLayer ? stack_layers - 1 : stack_layer; }

  bool operator==(const AlignShape&) const = default;

  void validate() const {
    if (out_dim == 0) throw ConfigError("alignment output dimension must be positive");
    if (input_dim() == 0) throw ConfigError("alignment model has no input branch");
    if (ft_transform && ft_dim == 0) throw ConfigError("branch transform requires a static term vector");
    if (ft_transform && ft_transform_dim == 0) throw ConfigError("branch transform dimension must be positive");
    if (stack_mode != StackMode::None) {
      if (stack_layers == 0 || stack_dim == 0) throw ConfigError("layer stack shape must be positive");
      if (stack_mode == StackMode::Layer && stack_layer != kTopLayer && stack_layer >= stack_layers)
        throw ConfigError("stack layer index out of range");
    }
  }
};

/// Inputs for one mention; views into caller-owned storage.
struct TermInputs {
  std::span<const double> ft;
  const LayerStack* stack = nullptr;
};

inline void check_inputs(const AlignShape& shape, const TermInputs& in) {
  if (shape.ft_dim != 0 && in.ft.size() != shape.ft_dim)
    throw ConfigError("term vector has dimension " + std::to_string(in.ft.size()) + ", model expects " +
                      std::to_string(shape.ft_dim));
  if (shape.stack_mode != StackMode::None) {
    if (!in.stack) throw ConfigError("model expects a layer stack input");
    if (in.stack->layers != shape.stack_layers || in.stack->dim != shape.stack_dim)
      throw ConfigError("layer stack shape does not match the model");
  }
}

struct AlignModel {
  AlignShape shape;
  std::uint64_t seed = 0;
  std::string recipe;  // free-form label carried into checkpoints
  Matrix weight;       // out_dim x input_dim
  Vector bias;
  Matrix branch_weight;  // ft_transform_dim x ft_dim
  Vector branch_bias;
  Vector attention;  // MLA memory, stack_dim

  bool operator==(const AlignModel&) const = default;
};

/// Glorot-uniform weights, zero biases; the attention memory uses the same
/// bound with fan_out = 1.
inline AlignModel init_model(const AlignShape& shape, std::uint64_t seed) {
  shape.validate();
  AlignModel m;
  m.shape = shape;
  m.seed = seed;
  Rng rng(seed);
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out, std::span<double> out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : out) v = rng.uniform(-bound, bound);
  };
  m.weight = Matrix(shape.out_dim, shape.input_dim());
  glorot(shape.input_dim(), shape.out_dim, m.weight.data);
  m.bias.assign(shape.out_dim, 0.0);
  if (shape.ft_transform) {
    m.branch_weight = Matrix(shape.ft_transform_dim, shape.ft_dim);
    glorot(shape.ft_dim, shape.ft_transform_dim, m.branch_weight.data);
    m.branch_bias.assign(shape.ft_transform_dim, 0.0);
  }
  if (shape.stack_mode == StackMode::Mla) {
    m.attention.assign(shape.stack_dim, 0.0);
    glorot(shape.stack_dim, 1, m.attention);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct MlaResult {
  Vector fused;
  Vector weights;  // softmax of the rectified scores, on the simplex
  Vector scores;   // B_i . A before rectification
};

/// a_i = max(0, B_i . A), w = softmax(a), fused = sum_i w_i B_i.
inline MlaResult mla_forward(const LayerStack& stack, std::span<const double> attention) {
  if (attention.size() != stack.dim) throw ConfigError("attention memory dimension does not match the layer stack");
  MlaResult r;
  r.scores.resize(stack.layers);
  r.weights.resize(stack.layers);
  double top = 0.0;
  for (std::size_t i = 0; i < stack.layers; ++i) {
    r.scores[i] = dot(stack.layer(i), attention);
    top = std::max(top, std::max(0.0, r.scores[i]));
  }
  double z = 0.0;
  for (std::size_t i = 0; i < stack.layers; ++i) {
    r.weights[i] = std::exp(std::max(0.0, r.scores[i]) - top);
    z += r.weights[i];
  }
  for (auto& w : r.weights) w /= z;
  r.fused.assign(stack.dim, 0.0);
  for (std::size_t i = 0; i < stack.layers; ++i) {
    const auto layer = stack.layer(i);
    for (std::size_t k = 0; k < stack.dim; ++k) r.fused[k] += r.weights[i] * layer[k];
  }
  return r;
}

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  Vector branch_pre;  // W' ft + b'
  MlaResult mla;
  Vector input;       // assembled model input x
  Vector pre;         // W x + b
  Vector output;      // prediction p
};

inline const Vector& align_forward(const AlignModel& model, const TermInputs& in, ForwardCache& cache) {
  const auto& s = model.shape;
  check_inputs(s, in);
  cache.input.assign(s.input_dim(), 0.0);
  std::size_t offset = 0;
  if (s.ft_dim != 0) {
    if (s.ft_transform) {
      cache.branch_pre.assign(s.ft_transform_dim, 0.0);
      matvec(model.branch_weight, in.ft, model.branch_bias, cache.branch_pre);
      for (std::size_t k = 0; k < s.ft_transform_dim; ++k) cache.input[k] = std::max(0.0, cache.branch_pre[k]);
    } else {
      std::copy(in.ft.begin(), in.ft.end(), cache.input.begin());
    }
    offset = s.ft_part();
  }
  if (s.stack_mode == StackMode::Mla) {
    cache.mla = mla_forward(*in.stack, model.attention);
    std::copy(cache.mla.fused.begin(), cache.mla.fused.end(), cache.input.begin() + static_cast<std::ptrdiff_t>(offset));
  } else if (s.stack_mode == StackMode::Layer) {
    const auto layer = in.stack->layer(s.layer_index());
    std::copy(layer.begin(), layer.end(), cache.input.begin() + static_cast<std::ptrdiff_t>(offset));
  }
  cache.pre.assign(s.out_dim, 0.0);
  matvec(model.weight, cache.input, model.bias, cache.pre);
  cache.output = cache.pre;
  if (s.use_relu)
    for (auto& v : cache.output) v = std::max(0.0, v);
  return cache.output;
}

inline Vector align_forward(const AlignModel& model, const TermInputs& in) {
  ForwardCache cache;
  align_forward(model, in, cache);
  return std::move(cache.output);
}

// ---------------------------------------------------------------------------
// Triplet loss
// ---------------------------------------------------------------------------

struct TripletOutcome {
  double loss = 0.0;
  std::vector<std::optional<std::size_t>> hardest;  // in-batch negative per example
  std::vector<double> hinge;                        // per-example loss term
};

/// Sum over the batch of max(0, alpha - s(p, t) + s(p, t_neg)), s = cosine,
/// t_neg the in-batch target most similar to p among examples whose gold
/// concept differs. Examples with no such negative contribute 0.
inline TripletOutcome triplet_loss(std::span<const Vector> predictions, std::span<const Vector> targets,
                                   std::span<const Sctid> gold, double alpha) {
  const auto n = predictions.size();
  if (n < 2) throw ConfigError("triplet loss needs at least two examples per batch");
  if (targets.size() != n || gold.size() != n) throw ConfigError("batch predictions, targets and gold differ in size");
  TripletOutcome out;
  out.hardest.resize(n);
  out.hinge.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (gold[j] == gold[i]) continue;
      const double s = cosine(predictions[i], targets[j]);
      if (s > best) best = s, out.hardest[i] = j;
    }
    if (!out.hardest[i]) continue;
    out.hinge[i] = std::max(0.0, alpha - cosine(predictions[i], targets[i]) + best);
    out.loss += out.hinge[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Same layout as the trainable parameters of an AlignModel.
struct AlignGrads {
  Matrix weight;
  Vector bias;
  Matrix branch_weight;
  Vector branch_bias;
  Vector attention;

  explicit AlignGrads(const AlignModel& m)
      : weight(m.weight.rows, m.weight.cols),
        bias(m.bias.size(), 0.0),
        branch_weight(m.branch_weight.rows, m.branch_weight.cols),
        branch_bias(m.branch_bias.size(), 0.0),
        attention(m.attention.size(), 0.0) {}

  void zero() {
    std::fill(weight.data.begin(), weight.data.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
    std::fill(branch_weight.data.begin(), branch_weight.data.end(), 0.0);
    std::fill(branch_bias.begin(), branch_bias.end(), 0.0);
    std::fill(attention.begin(), attention.end(), 0.0);
  }
};

/// Trainable parameter blocks in a fixed order (W, b, W', b', A); empty
/// blocks are omitted.
inline std::vector<std::span<double>> parameter_blocks(AlignModel& m) {
  std::vector<std::span<double>> out;
  for (std::span<double> s : {std::span<double>(m.weight.data), std::span<double>(m.bias),
                              std::span<double>(m.branch_weight.data), std::span<double>(m.branch_bias),
                              std::span<double>(m.attention)})
    if (!s.empty()) out.push_back(s);
  return out;
}

inline std::vector<std::span<double>> gradient_blocks(AlignGrads& g) {
  std::vector<std::span<double>> out;
  for (std::span<double> s : {std::span<double>(g.weight.data), std::span<double>(g.bias),
                              std::span<double>(g.branch_weight.data), std::span<double>(g.branch_bias),
                              std::span<double>(g.attention)})
    if (!s.empty()) out.push_back(s);
  return out;
}

namespace detail {

/// out += scale * d cos(p, t) / dp. Zero when p or t is zero.
inline void add_cosine_gradient(std::span<const double> p, std::span<const double> t, double scale,
                                std::span<double> out) {
  const double np = norm(p), nt = norm(t);
  if (np == 0.0 || nt == 0.0) return;
  const double c = dot(p, t) / (np * nt);
  for (std::size_t k = 0; k < p.size(); ++k) out[k] += scale * (t[k] / (np * nt) - c * p[k] / (np * np));
}

/// Accumulates parameter gradients given dL/dp for one example.
inline void backprop_example(const AlignModel& model, const TermInputs& in, const ForwardCache& cache,
                             std::span<const double> grad_output, AlignGrads& grads) {
  const auto& s = model.shape;
  Vector dpre(grad_output.begin(), grad_output.end());
  if (s.use_relu)
    for (std::size_t k = 0; k < dpre.size(); ++k)
      if (!(cache.pre[k] > 0.0)) dpre[k] = 0.0;
  outer_add(grads.weight, dpre, cache.input);
  for (std::size_t k = 0; k < dpre.size(); ++k) grads.bias[k] += dpre[k];

  const bool need_dx = s.ft_transform || s.stack_mode == StackMode::Mla;
  if (!need_dx) return;
  Vector dx(s.input_dim(), 0.0);
  matvec_transposed_add(model.weight, dpre, dx);

  if (s.ft_transform) {
    Vector dbranch(s.ft_transform_dim);
    for (std::size_t k = 0; k < s.ft_transform_dim; ++k) dbranch[k] = cache.branch_pre[k] > 0.0 ? dx[k] : 0.0;
    outer_add(grads.branch_weight, dbranch, in.ft);
    for (std::size_t k = 0; k < dbranch.size(); ++k) grads.branch_bias[k] += dbranch[k];
  }
  if (s.stack_mode == StackMode::Mla) {
    const std::span<const double> dfused(dx.data() + s.ft_part(), s.stack_dim);
    const auto& w = cache.mla.weights;
    Vector dw(in.stack->layers);
    double mean = 0.0;
    for (std::size_t i = 0; i < dw.size(); ++i) {
      dw[i] = dot(in.stack->layer(i), dfused);
      mean += w[i] * dw[i];
    }
    for (std::size_t i = 0; i < dw.size(); ++i) {
      if (!(cache.mla.scores[i] > 0.0)) continue;
      const double dscore = w[i] * (dw[i] - mean);
      const auto layer = in.stack->layer(i);
      for (std::size_t k = 0; k < s.stack_dim; ++k) grads.attention[k] += dscore * layer[k];
    }
  }
}

}  // namespace detail

/// One batch element: inputs plus gold concept.
struct AlignExample {
  TermInputs inputs;
  Sctid gold;
};

/// Forward pass, triplet loss and analytic gradients for one batch. Targets
/// are the gold targets of the batch members. Gradients are accumulated into
/// `grads` (call zero() first for a fresh batch).
inline TripletOutcome loss_and_gradients(const AlignModel& model, std::span<const AlignExample* const> batch,
                                         std::span<const Vector> targets, double alpha, AlignGrads& grads) {
  const auto n = batch.size();
  std::vector<ForwardCache> caches(n);
  std::vector<Vector> predictions(n);
  std::vector<Sctid> gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    predictions[i] = align_forward(model, batch[i]->inputs, caches[i]);
    gold[i] = batch[i]->gold;
  }
  auto outcome = triplet_loss(predictions, targets, gold, alpha);
  Vector dp(model.shape.out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(outcome.hinge[i] > 0.0)) continue;
    std::fill(dp.begin(), dp.end(), 0.0);
    detail::add_cosine_gradient(predictions[i], targets[i], -1.0, dp);
    detail::add_cosine_gradient(predictions[i], targets[*outcome.hardest[i]], 1.0, dp);
    detail::backprop_example(model, batch[i]->inputs, caches[i], dp, grads);
  }
  for (auto block : gradient_blocks(grads))
    if (!all_finite(block)) throw TrainingError("non-finite gradient");
  return outcome;
}

/// Batch loss only (no gradients); used by finite-difference checks.
inline double batch_loss(const AlignModel& model, std::span<const AlignExample* const> batch,
                         std::span<const Vector> targets, double alpha) {
  std::vector<Vector> predictions;
  std::vector<Sctid> gold;
  for (const auto* ex : batch) {
    predictions.push_back(align_forward(model, ex->inputs));
    gold.push_back(ex->gold);
  }
  return triplet_loss(predictions, targets, gold, alpha).loss;
}

// ---------------------------------------------------------------------------
// Optimiser and training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double alpha = 0.2;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("margin alpha must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  }
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, AlignModel& model) : cfg_(cfg) {
    for (auto block : parameter_blocks(model)) {
      m_.emplace_back(block.size(), 0.0);
      v_.emplace_back(block.size(), 0.0);
    }
  }

  void step(AlignModel& model, AlignGrads& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    auto params = parameter_blocks(model);
    auto gs = gradient_blocks(grads);
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& m = m_[b];
      auto& v = v_[b];
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = gs[b][i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        params[b][i] -= lr * (update + cfg_.weight_decay * params[b][i]);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<Vector> m_, v_;
  std::size_t t_ = 0;
};

/// Fraction of examples whose top-ranked concept is their gold concept.
inline double accuracy_at_1(const AlignModel& model, std::span<const AlignExample> examples,
                            const ConceptTargetIndex& index) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += rank(index, align_forward(model, ex.inputs), 1).front().sctid == ex.gold;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

struct TrainResult {
  AlignModel model;                 // parameters of the best dev epoch
  std::vector<double> dev_acc1;     // per epoch
  std::vector<double> train_loss;   // per epoch, summed over batches
  std::size_t best_epoch = 0;       // 1-based; 0 when no epoch ran
};

/// Mini-batch training with a seeded shuffle per epoch. The last batch is
/// kept if it has at least two examples. Returns the parameters with the
/// best dev Acc@1 (first epoch wins ties); without dev data, the last epoch.
inline TrainResult train(AlignModel model, std::span<const AlignExample> train_set,
                         std::span<const AlignExample> dev_set, const ConceptTargetIndex& index,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() < cfg.batch_size)
    throw ConfigError("training set (" + std::to_string(train_set.size()) + ") is smaller than batch size (" +
                      std::to_string(cfg.batch_size) + ")");
  if (index.dim() != model.shape.out_dim) throw ConfigError("target index dimension does not match model output");
  for (const auto& ex : train_set) {
    check_inputs(model.shape, ex.inputs);
    if (!index.position(ex.gold)) throw ConfigError("no target for gold concept " + ex.gold.str());
  }
  for (const auto& ex : dev_set) check_inputs(model.shape, ex.inputs);

  TrainResult result{model, {}, {}, 0};
  double best_acc = -1.0;
  AdamW optimizer(cfg, model);
  AlignGrads grads(model);
  std::vector<std::size_t> order(train_set.size());
  std::vector<const AlignExample*> batch;
  std::vector<Vector> targets;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      batch.clear();
      targets.clear();
      for (auto k = start; k < end; ++k) {
        batch.push_back(&train_set[order[k]]);
        targets.push_back(index.unit_of(train_set[order[k]].gold));
      }
      grads.zero();
      double loss = 0.0;
      try {
        loss = loss_and_gradients(model, batch, targets, cfg.alpha, grads).loss;
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      epoch_loss += loss;
      optimizer.step(model, grads);
    }
    result.train_loss.push_back(epoch_loss);
    const double acc = dev_set.empty() ? 0.0 : accuracy_at_1(model, dev_set, index);
    result.dev_acc1.push_back(acc);
    if (dev_set.empty() || acc > best_acc) {
      best_acc = acc;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "medlink-align 1";

namespace detail {

inline void write_block(std::string& out, std::string_view name, std::size_t rows, std::size_t cols,
                        std::span<const double> data) {
  out += std::string(name) + ' ' + std::to_string(rows) + ' ' + std::to_string(cols) + '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    append_floats(out, data.subspan(r * cols, cols));
    out += '\n';
  }
}

}  // namespace detail

/// Text checkpoint: header lines `key value`, then each parameter block as
/// `name rows cols` followed by rows of shortest round-trip decimals, so a
/// reload reproduces every parameter bit for bit.
inline std::string serialize_checkpoint(const AlignModel& m) {
  const auto& s = m.shape;
  std::string out(kCheckpointMagic);
  out += '\n';
  out += "recipe " + (m.recipe.empty() ? std::string("-") : m.recipe) + '\n';
  out += "seed " + std::to_string(m.seed) + '\n';
  out += "ft_dim " + std::to_string(s.ft_dim) + '\n';
  out += "ft_transform " + std::to_string(s.ft_transform ? 1 : 0) + '\n';
  out += "ft_transform_dim " + std::to_string(s.ft_transform_dim) + '\n';
  out += "stack_mode " + std::string(to_string(s.stack_mode)) + '\n';
  out += "stack_layers " + std::to_string(s.stack_layers) + '\n';
  out += "stack_dim " + std::to_string(s.stack_dim) + '\n';
  out += "stack_layer " + (s.stack_layer == kTopLayer ? std::string("top") : std::to_string(s.stack_layer)) + '\n';
  out += "out_dim " + std::to_string(s.out_dim) + '\n';
  out += "use_relu " + std::to_string(s.use_relu ? 1 : 0) + '\n';
  detail::write_block(out, "weight", m.weight.rows, m.weight.cols, m.weight.data);
  detail::write_block(out, "bias", 1, m.bias.size(), m.bias);
  detail::write_block(out, "branch_weight", m.branch_weight.rows, m.branch_weight.cols, m.branch_weight.data);
  detail::write_block(out, "branch_bias", 1, m.branch_bias.size(), m.branch_bias);
  detail::write_block(out, "attention", 1, m.attention.size(), m.attention);
  out += "end\n";
  return out;
}

inline void save_checkpoint(const AlignModel& m, const std::string& path) { write_file(path, serialize_checkpoint(m)); }

inline AlignModel load_checkpoint(const std::string& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line) || line != kCheckpointMagic) reader.fail("not an alignment checkpoint");

  auto field = [&](std::string_view key) {
    if (!reader.next(line)) reader.fail("truncated header");
    const auto parts = split(line, ' ');
    if (parts.size() != 2 || parts[0] != key) reader.fail("expected header field '" + std::string(key) + "'");
    return std::string(parts[1]);
  };
  auto number = [&](std::string_view key) {
    auto v = parse_int<std::uint64_t>(field(key));
    if (!v) reader.fail("invalid value for " + std::string(key));
    return static_cast<std::size_t>(*v);
  };

  AlignModel m;
  m.recipe = field("recipe");
  if (m.recipe == "-") m.recipe.clear();
  {
    auto seed = parse_int<std::uint64_t>(field("seed"));
    if (!seed) reader.fail("invalid seed");
    m.seed = *seed;
  }
  auto& s = m.shape;
  s.ft_dim = number("ft_dim");
  s.ft_transform = number("ft_transform") != 0;
  s.ft_transform_dim = number("ft_transform_dim");
  auto mode = parse_stack_mode(field("stack_mode"));
  if (!mode) reader.fail("invalid stack_mode");
  s.stack_mode = *mode;
  s.stack_layers = number("stack_layers");
  s.stack_dim = number("stack_dim");
  {
    auto layer = field("stack_layer");
    if (layer == "top") {
      s.stack_layer = kTopLayer;
    } else {
      auto v = parse_int<std::size_t>(layer);
      if (!v) reader.fail("invalid stack_layer");
      s.stack_layer = *v;
    }
  }
  s.out_dim = number("out_dim");
  s.use_relu = number("use_relu") != 0;
  try {
    s.validate();
  } catch (const ConfigError& e) {
    reader.fail(e.what());
  }

  auto block = [&](std::string_view name, std::size_t rows, std::size_t cols, std::span<double> out) {
    if (!reader.next(line)) reader.fail("truncated checkpoint");
    const auto head = split(line, ' ');
    if (head.size() != 3 || head[0] != name) reader.fail("expected block '" + std::string(name) + "'");
    if (parse_int<std::size_t>(head[1]) != rows || parse_int<std::size_t>(head[2]) != cols)
      reader.fail("block '" + std::string(name) + "' has an unexpected shape");
    for (std::size_t r = 0; r < rows; ++r) {
      if (!reader.next(line)) reader.fail("truncated block " + std::string(name));
      const auto fields = split_ws(line);
      if (fields.size() != cols) reader.fail("wrong number of values in block " + std::string(name));
      detail::parse_floats(reader, fields, out.subspan(r * cols, cols));
    }
  };
  const std::size_t in_dim = s.input_dim();
  m.weight = Matrix(s.out_dim, in_dim);
  m.bias.assign(s.out_dim, 0.0);
  block("weight", s.out_dim, in_dim, m.weight.data);
  block("bias", 1, s.out_dim, m.bias);
  if (s.ft_transform) {
    m.branch_weight = Matrix(s.ft_transform_dim, s.ft_dim);
    m.branch_bias.assign(s.ft_transform_dim, 0.0);
  }
  block("branch_weight", m.branch_weight.rows, m.branch_weight.cols, m.branch_weight.data);
  block("branch_bias", 1, m.branch_bias.size(), m.branch_bias);
  if (s.stack_mode == StackMode::Mla) m.attention.assign(s.stack_dim, 0.0);
  block("attention", 1, m.attention.size(), m.attention);
  if (!reader.next(line) || line != "end") reader.fail("missing end marker");
  return m;
}

}  // namespace medlink
