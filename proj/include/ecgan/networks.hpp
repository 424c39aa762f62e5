#pragma once

#include "ecgan/autodiff.hpp"
#include "ecgan/common.hpp"
#include "ecgan/energy_core.hpp"
#include "ecgan/variants.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecgan {

enum class Backbone { mlp, small_conv };
enum class Activation { leaky_relu, tanh };

struct NetConfig {
  Backbone backbone = Backbone::mlp;
  ImageShape data_shape{2, 1, 1};  // vector data: channels = dimension, height = width = 1
  int feature_dim = 128;
  int noise_dim = 16;
  int num_classes = 8;
  int class_embed_dim = 16;      // generator label embedding, concatenated to z
  int contrastive_dim = 32;      // width of l(x) and e(y)
  std::vector<int> g_hidden{128, 128};
  std::vector<int> d_hidden{128};
  Activation activation = Activation::leaky_relu;
  double leaky_slope = 0.2;
  bool spectral_norm = true;
  std::uint64_t init_seed = 0;

  bool is_image() const { return data_shape.height > 1 || data_shape.width > 1; }
  int data_dim() const { return data_shape.flat(); }
  void validate() const;
};

/// Persistent power-iteration vectors for one weight matrix.
struct SpectralNormState {
  Vector u;  // left singular vector estimate (rows)
  Vector v;  // right singular vector estimate (cols)

  static SpectralNormState random(Eigen::Index rows, Eigen::Index cols, Rng& rng);
};

/// Runs `n_iters` power iterations (updating `state`) and returns weight / σ̂.
Matrix spectral_normalize(const Matrix& weight, SpectralNormState& state, int n_iters);

/// One power-iteration refinement; returns the σ estimate uᵀ W v.
double power_iterate(const Matrix& weight, SpectralNormState& state, int n_iters);

/// avg ← decay·avg + (1 − decay)·current, elementwise over matched parameter lists.
void ema_update(std::span<Parameter* const> avg, std::span<const Parameter* const> current, double decay);

/// x W + b with an optional spectrally normalized W (in × out).
struct LinearLayer {
  Parameter weight;
  Parameter bias;
  bool spectral = false;
  SpectralNormState sn;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in, int out, bool spectral_norm, Rng& rng);

  Graph::Var bind_weight(Graph& g, bool track, bool power_iterate);
};

/// 3×3 (configurable) convolution; the kernel is out × (C·k·k).
struct ConvLayer {
  Parameter kernel;
  Parameter bias;
  Conv2dGeometry geom;
  bool spectral = false;
  SpectralNormState sn;

  ConvLayer() = default;
  ConvLayer(const std::string& name, const Conv2dGeometry& geometry, bool spectral_norm, Rng& rng);

  Graph::Var bind_kernel(Graph& g, bool track, bool power_iterate);
};

/// Options for binding a network's parameters into a graph.
struct BindMode {
  bool track = true;          // accumulate gradients into the parameters
  bool power_iterate = true;  // advance spectral-norm vectors before normalizing
};

class Generator {
 public:
  Generator() = default;
  explicit Generator(const NetConfig& cfg);

  /// z is m × noise_dim; returns m × data_dim.
  Graph::Var forward(Graph& g, Graph::Var z, std::span<const int> labels, BindMode mode);

  /// Non-differentiable convenience: generate samples without touching
  /// spectral-norm state.
  Matrix sample(const Matrix& z, std::span<const int> labels) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<SpectralNormState*> spectral_states();

  const NetConfig& config() const { return cfg_; }
  ImageShape seed_shape() const;

 private:
  NetConfig cfg_;
  Parameter embedding_;  // K × class_embed_dim
  std::vector<LinearLayer> linears_;
  std::vector<ConvLayer> convs_;
};

struct DiscriminatorOutputs {
  Graph::Var features;                   // g(x), m × feature_dim
  Graph::Var head;                       // m × head_outputs
  std::optional<Graph::Var> embedding;   // l(x), m × contrastive_dim
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const NetConfig& cfg, const VariantPreset& preset);

  DiscriminatorOutputs forward(Graph& g, Graph::Var x, std::span<const int> labels, BindMode mode);

  /// e(y) rows for the given labels, m × contrastive_dim.
  Graph::Var class_embeddings(Graph& g, std::span<const int> labels, BindMode mode);

  /// Per-design score helpers on a forward result.
  Graph::Var conditional_score(Graph& g, const DiscriminatorOutputs& out, std::span<const int> labels) const;
  Graph::Var unconditional_score(Graph& g, const DiscriminatorOutputs& out) const;
  Graph::Var classifier_logits(Graph& g, const DiscriminatorOutputs& out) const;

  bool has_contrastive() const { return has_contrastive_; }
  HeadDesign design() const { return design_; }
  const NetConfig& config() const { return cfg_; }

  /// Head parameters as the algebraic types (spectral norm is ignored).
  EnergyHeadParams energy_head() const;
  ProjectionParams projection_head() const;
  void set_energy_head(const EnergyHeadParams& head);
  void set_projection_head(const ProjectionParams& head);

  /// Copies the trunk (everything up to g(x)) from another discriminator of the same config.
  void copy_trunk_from(const Discriminator& other);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<SpectralNormState*> spectral_states();

 private:
  Graph::Var trunk(Graph& g, Graph::Var x, BindMode mode);
  Graph::Var activate(Graph& g, Graph::Var v) const;

  NetConfig cfg_;
  HeadDesign design_ = HeadDesign::k_output_energy;
  bool has_contrastive_ = false;
  std::vector<ConvLayer> convs_;
  std::vector<LinearLayer> trunk_;
  LinearLayer head_;
  Parameter class_proj_;  // projection designs: K × feature_dim
  LinearLayer contrastive_proj_;
  Parameter contrastive_embed_;  // K × contrastive_dim
};

Generator build_generator(const NetConfig& cfg);
Discriminator build_discriminator(const NetConfig& cfg, const VariantPreset& preset);

/// Adam with bias correction; updates every parameter from its `grad`.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps = 1e-8);

  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double lr_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

}  // namespace ecgan
