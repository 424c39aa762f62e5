#include "ecgan/networks.hpp"

#include <cmath>

namespace ecgan {

namespace {

Vector normalized(const Vector& x) {
  const double n = x.norm();
  return n > 0.0 ? Vector(x / n) : x;
}

Matrix init_weight(int in, int out, Rng& rng) { return randn(in, out, rng, 1.0 / std::sqrt(static_cast<double>(in))); }

void check_labels(std::span<const int> labels, int k, Eigen::Index rows) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, "one label per sample required");
  for (int y : labels) require(y >= 0 && y < k, "label " + std::to_string(y) + " out of range");
}

}  // namespace

void NetConfig::validate() const {
  require(feature_dim >= 1 && noise_dim >= 1 && class_embed_dim >= 1 && contrastive_dim >= 1,
          "network widths must be positive");
  require(num_classes >= 2, "at least two classes required");
  require(data_shape.channels >= 1 && data_shape.height >= 1 && data_shape.width >= 1, "invalid data shape");
  for (int h : g_hidden) require(h >= 1, "generator hidden sizes must be positive");
  for (int h : d_hidden) require(h >= 1, "discriminator hidden sizes must be positive");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, "leaky slope must be in [0, 1)");
  if (backbone == Backbone::small_conv) {
    require(is_image(), "small_conv backbone needs image-shaped data");
    require(data_shape.height % 4 == 0 && data_shape.width % 4 == 0,
            "small_conv backbone needs height and width divisible by 4");
    require(!g_hidden.empty() && !d_hidden.empty(), "small_conv backbone needs hidden channel counts");
  }
}

constexpr int kSettleIters = 5;

SpectralNormState SpectralNormState::random(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  SpectralNormState s;
  s.u = normalized(randn(rows, 1, rng).col(0));
  s.v = normalized(randn(cols, 1, rng).col(0));
  return s;
}

double power_iterate(const Matrix& weight, SpectralNormState& state, int n_iters) {
  require(n_iters >= 0, "power iteration count must be nonnegative");
  require(state.u.size() == weight.rows() && state.v.size() == weight.cols(),
          "spectral-norm state does not match weight shape");
  for (int i = 0; i < n_iters; ++i) {
    state.v = normalized(weight.transpose() * state.u);
    state.u = normalized(weight * state.v);
  }
  return state.u.dot(weight * state.v);
}

Matrix spectral_normalize(const Matrix& weight, SpectralNormState& state, int n_iters) {
  require(weight.size() > 0 && weight.cwiseAbs().maxCoeff() > 0.0, "spectral_normalize: zero matrix");
  if (state.u.size() != weight.rows() || state.v.size() != weight.cols()) {
    Rng rng(0x5eed);
    state = SpectralNormState::random(weight.rows(), weight.cols(), rng);
  }
  const double sigma = power_iterate(weight, state, std::max(n_iters, 1));
  require(sigma > 0.0, "spectral_normalize: power iteration collapsed; reinitialize the state");
  return weight / sigma;
}

void ema_update(std::span<Parameter* const> avg, std::span<const Parameter* const> current, double decay) {
  require(avg.size() == current.size(), "ema_update: parameter lists differ in length");
  require(decay >= 0.0 && decay <= 1.0, "ema_update: decay must lie in [0, 1]");
  for (std::size_t i = 0; i < avg.size(); ++i) {
    require(avg[i]->value.rows() == current[i]->value.rows() && avg[i]->value.cols() == current[i]->value.cols(),
            "ema_update: shape mismatch for " + avg[i]->name);
  }
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg[i]->value = decay * avg[i]->value + (1.0 - decay) * current[i]->value;
  }
}

LinearLayer::LinearLayer(const std::string& name, int in, int out, bool spectral_norm, Rng& rng)
    : weight(name + "/weight", init_weight(in, out, rng)),
      bias(name + "/bias", Matrix::Zero(1, out)),
      spectral(spectral_norm) {
  if (spectral) {
    sn = SpectralNormState::random(in, out, rng);
    // Settle the estimate so a forward pass without iteration sees σ̂ > 0.
    power_iterate(weight.value, sn, kSettleIters);
  }
}

Graph::Var LinearLayer::bind_weight(Graph& g, bool track, bool power_iterate_now) {
  auto w = track ? g.param(weight) : g.constant(weight.value);
  if (!spectral) return w;
  if (power_iterate_now) power_iterate(weight.value, sn, 1);
  return g.spectral_norm(w, sn.u, sn.v);
}

ConvLayer::ConvLayer(const std::string& name, const Conv2dGeometry& geometry, bool spectral_norm, Rng& rng)
    : geom(geometry), spectral(spectral_norm) {
  const int fan_in = geom.in.channels * geom.kernel * geom.kernel;
  kernel = Parameter(name + "/kernel", randn(geom.out_channels, fan_in, rng, 1.0 / std::sqrt(double(fan_in))));
  bias = Parameter(name + "/bias", Matrix::Zero(1, geom.out_channels));
  if (spectral) {
    sn = SpectralNormState::random(geom.out_channels, fan_in, rng);
    power_iterate(kernel.value, sn, kSettleIters);
  }
}

Graph::Var ConvLayer::bind_kernel(Graph& g, bool track, bool power_iterate_now) {
  auto k = track ? g.param(kernel) : g.constant(kernel.value);
  if (!spectral) return k;
  if (power_iterate_now) power_iterate(kernel.value, sn, 1);
  return g.spectral_norm(k, sn.u, sn.v);
}

// ---- generator ------------------------------------------------------------

Generator::Generator(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg.init_seed, {0x6e6e, 1}));
  embedding_ = Parameter("generator/class_embedding", randn(cfg.num_classes, cfg.class_embed_dim, rng));
  const int in = cfg.noise_dim + cfg.class_embed_dim;
  if (cfg.backbone == Backbone::mlp) {
    int prev = in;
    for (std::size_t i = 0; i < cfg.g_hidden.size(); ++i) {
      linears_.emplace_back("generator/fc" + std::to_string(i), prev, cfg.g_hidden[i], cfg.spectral_norm, rng);
      prev = cfg.g_hidden[i];
    }
    linears_.emplace_back("generator/out", prev, cfg.data_dim(), cfg.spectral_norm, rng);
  } else {
    const ImageShape s0 = seed_shape();
    linears_.emplace_back("generator/fc0", in, s0.flat(), cfg.spectral_norm, rng);
    const int c1 = cfg.g_hidden.size() > 1 ? cfg.g_hidden[1] : cfg.g_hidden[0];
    Conv2dGeometry up1{{s0.channels, 2 * s0.height, 2 * s0.width}, c1, 3, 1, 1};
    Conv2dGeometry up2{{c1, 4 * s0.height, 4 * s0.width}, cfg.data_shape.channels, 3, 1, 1};
    convs_.emplace_back("generator/conv0", up1, cfg.spectral_norm, rng);
    convs_.emplace_back("generator/conv1", up2, cfg.spectral_norm, rng);
  }
}

ImageShape Generator::seed_shape() const {
  return {cfg_.g_hidden.empty() ? 1 : cfg_.g_hidden[0], cfg_.data_shape.height / 4, cfg_.data_shape.width / 4};
}

Graph::Var Generator::forward(Graph& g, Graph::Var z, std::span<const int> labels, BindMode mode) {
  require(g.value(z).cols() == cfg_.noise_dim, "generator: noise width mismatch");
  check_labels(labels, cfg_.num_classes, g.value(z).rows());
  auto emb_table = mode.track ? g.param(embedding_) : g.constant(embedding_.value);
  auto h = g.concat_cols(z, g.gather_rows(emb_table, labels));
  auto act = [&](Graph::Var v) {
    return cfg_.activation == Activation::tanh ? g.tanh(v) : g.leaky_relu(v, cfg_.leaky_slope);
  };
  auto bias = [&](Parameter& p) { return mode.track ? g.param(p) : g.constant(p.value); };

  if (cfg_.backbone == Backbone::mlp) {
    for (std::size_t i = 0; i < linears_.size(); ++i) {
      auto& l = linears_[i];
      h = g.add_row(g.matmul(h, l.bind_weight(g, mode.track, mode.power_iterate)), bias(l.bias));
      if (i + 1 < linears_.size()) h = act(h);
    }
    return cfg_.is_image() ? g.tanh(h) : h;
  }

  auto& fc = linears_.front();
  h = act(g.add_row(g.matmul(h, fc.bind_weight(g, mode.track, mode.power_iterate)), bias(fc.bias)));
  ImageShape shape = seed_shape();
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    auto& c = convs_[i];
    h = g.upsample_nearest2(h, shape);
    h = g.conv2d(h, c.bind_kernel(g, mode.track, mode.power_iterate), bias(c.bias), c.geom);
    shape = c.geom.out();
    h = i + 1 < convs_.size() ? act(h) : g.tanh(h);
  }
  return h;
}

Matrix Generator::sample(const Matrix& z, std::span<const int> labels) const {
  Graph g;
  // With track and power_iterate both off, forward() reads parameters only.
  auto out = const_cast<Generator*>(this)->forward(g, g.constant(z), labels, BindMode{false, false});
  return g.value(out);
}

std::vector<Parameter*> Generator::parameters() {
  std::vector<Parameter*> ps{&embedding_};
  for (auto& l : linears_) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  for (auto& c : convs_) {
    ps.push_back(&c.kernel);
    ps.push_back(&c.bias);
  }
  return ps;
}

std::vector<const Parameter*> Generator::parameters() const {
  auto ps = const_cast<Generator*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<SpectralNormState*> Generator::spectral_states() {
  std::vector<SpectralNormState*> out;
  for (auto& l : linears_)
    if (l.spectral) out.push_back(&l.sn);
  for (auto& c : convs_)
    if (c.spectral) out.push_back(&c.sn);
  return out;
}

// ---- discriminator --------------------------------------------------------

Discriminator::Discriminator(const NetConfig& cfg, const VariantPreset& preset)
    : cfg_(cfg), design_(preset.head_design) {
  cfg_.validate();
  Rng rng(derive_seed(cfg.init_seed, {0xd15c, 1}));
  has_contrastive_ = preset.weights.lambda_c > 0.0 &&
                     (design_ == HeadDesign::k_output_energy || design_ == HeadDesign::single_plus_embedding);

  int prev = cfg.data_dim();
  if (cfg.backbone == Backbone::small_conv) {
    const int c0 = cfg.d_hidden[0];
    const int c1 = cfg.d_hidden.size() > 1 ? cfg.d_hidden[1] : c0;
    Conv2dGeometry g0{cfg.data_shape, c0, 3, 2, 1};
    Conv2dGeometry g1{g0.out(), c1, 3, 2, 1};
    convs_.emplace_back("discriminator/conv0", g0, cfg.spectral_norm, rng);
    convs_.emplace_back("discriminator/conv1", g1, cfg.spectral_norm, rng);
    prev = g1.out().flat();
  } else {
    for (std::size_t i = 0; i < cfg.d_hidden.size(); ++i) {
      trunk_.emplace_back("discriminator/fc" + std::to_string(i), prev, cfg.d_hidden[i], cfg.spectral_norm, rng);
      prev = cfg.d_hidden[i];
    }
  }
  trunk_.emplace_back("discriminator/features", prev, cfg.feature_dim, cfg.spectral_norm, rng);

  head_ = LinearLayer("discriminator/head", cfg.feature_dim, head_outputs(design_, cfg.num_classes),
                      cfg.spectral_norm, rng);
  if (design_ == HeadDesign::projection_single || design_ == HeadDesign::single_plus_embedding) {
    class_proj_ = Parameter("discriminator/class_projection",
                            randn(cfg.num_classes, cfg.feature_dim, rng, 1.0 / std::sqrt(double(cfg.feature_dim))));
  }
  if (has_contrastive_) {
    contrastive_proj_ =
        LinearLayer("discriminator/contrastive_proj", cfg.feature_dim, cfg.contrastive_dim, cfg.spectral_norm, rng);
    contrastive_embed_ = Parameter("discriminator/contrastive_embedding",
                                   randn(cfg.num_classes, cfg.contrastive_dim, rng,
                                         1.0 / std::sqrt(double(cfg.contrastive_dim))));
  }
}

Graph::Var Discriminator::activate(Graph& g, Graph::Var v) const {
  return cfg_.activation == Activation::tanh ? g.tanh(v) : g.leaky_relu(v, cfg_.leaky_slope);
}

Graph::Var Discriminator::trunk(Graph& g, Graph::Var x, BindMode mode) {
  require(g.value(x).cols() == cfg_.data_dim(), "discriminator: input width mismatch");
  auto bias = [&](Parameter& p) { return mode.track ? g.param(p) : g.constant(p.value); };
  Graph::Var h = x;
  for (auto& c : convs_) {
    h = activate(g, g.conv2d(h, c.bind_kernel(g, mode.track, mode.power_iterate), bias(c.bias), c.geom));
  }
  for (auto& l : trunk_) {
    h = activate(g, g.add_row(g.matmul(h, l.bind_weight(g, mode.track, mode.power_iterate)), bias(l.bias)));
  }
  return h;
}

DiscriminatorOutputs Discriminator::forward(Graph& g, Graph::Var x, std::span<const int> labels, BindMode mode) {
  DiscriminatorOutputs out;
  out.features = trunk(g, x, mode);
  auto bias = [&](Parameter& p) { return mode.track ? g.param(p) : g.constant(p.value); };
  out.head = g.add_row(g.matmul(out.features, head_.bind_weight(g, mode.track, mode.power_iterate)), bias(head_.bias));
  if (design_ == HeadDesign::projection_single || design_ == HeadDesign::single_plus_embedding) {
    check_labels(labels, cfg_.num_classes, g.value(x).rows());
    auto table = mode.track ? g.param(class_proj_) : g.constant(class_proj_.value);
    out.head = g.add(out.head, g.row_dot(out.features, g.gather_rows(table, labels)));
  }
  if (has_contrastive_) {
    auto w = contrastive_proj_.bind_weight(g, mode.track, mode.power_iterate);
    out.embedding = g.add_row(g.matmul(out.features, w), bias(contrastive_proj_.bias));
  }
  return out;
}

Graph::Var Discriminator::class_embeddings(Graph& g, std::span<const int> labels, BindMode mode) {
  require(has_contrastive_, "discriminator has no contrastive embedding");
  for (int y : labels) require(y >= 0 && y < cfg_.num_classes, "label out of range");
  auto table = mode.track ? g.param(contrastive_embed_) : g.constant(contrastive_embed_.value);
  return g.gather_rows(table, labels);
}

Graph::Var Discriminator::conditional_score(Graph& g, const DiscriminatorOutputs& out,
                                            std::span<const int> labels) const {
  switch (design_) {
    case HeadDesign::k_output_energy:
      check_labels(labels, cfg_.num_classes, g.value(out.head).rows());
      return g.pick(out.head, labels);
    case HeadDesign::projection_single:
    case HeadDesign::single_plus_embedding: return out.head;
    case HeadDesign::acgan_split: break;
  }
  throw InvalidInput("acgan_split head has no conditional score");
}

Graph::Var Discriminator::unconditional_score(Graph& g, const DiscriminatorOutputs& out) const {
  switch (design_) {
    case HeadDesign::k_output_energy: return g.row_logsumexp(out.head);
    case HeadDesign::acgan_split: {
      const Eigen::Index m = g.value(out.head).rows();
      std::vector<int> zeros(static_cast<std::size_t>(m), 0);
      return g.pick(out.head, zeros);
    }
    default: break;
  }
  throw InvalidInput(std::string(to_string(design_)) + " head has no unconditional score");
}

Graph::Var Discriminator::classifier_logits(Graph& g, const DiscriminatorOutputs& out) const {
  switch (design_) {
    case HeadDesign::k_output_energy: return out.head;
    case HeadDesign::acgan_split: {
      const Eigen::Index k = cfg_.num_classes;
      Matrix select = Matrix::Zero(k + 1, k);
      for (Eigen::Index j = 0; j < k; ++j) select(j + 1, j) = 1.0;
      return g.matmul(out.head, g.constant(select));
    }
    default: break;
  }
  throw InvalidInput(std::string(to_string(design_)) + " head has no classifier");
}

EnergyHeadParams Discriminator::energy_head() const {
  require(design_ == HeadDesign::k_output_energy, "not an energy head");
  return EnergyHeadParams(head_.weight.value, head_.bias.value.row(0).transpose());
}

ProjectionParams Discriminator::projection_head() const {
  require(design_ == HeadDesign::projection_single || design_ == HeadDesign::single_plus_embedding,
          "not a projection head");
  std::vector<Vector> emb;
  for (Eigen::Index y = 0; y < class_proj_.value.rows(); ++y) emb.emplace_back(class_proj_.value.row(y).transpose());
  return ProjectionParams(head_.weight.value.col(0), head_.bias.value(0, 0), std::move(emb));
}

void Discriminator::set_energy_head(const EnergyHeadParams& head) {
  require(design_ == HeadDesign::k_output_energy, "not an energy head");
  require(head.weight.rows() == head_.weight.value.rows() && head.weight.cols() == head_.weight.value.cols(),
          "energy head shape mismatch");
  head_.weight.value = head.weight;
  head_.bias.value = head.bias.transpose();
}

void Discriminator::set_projection_head(const ProjectionParams& head) {
  require(design_ == HeadDesign::projection_single || design_ == HeadDesign::single_plus_embedding,
          "not a projection head");
  require(head.feature_dim() == cfg_.feature_dim && head.num_classes() == cfg_.num_classes,
          "projection head shape mismatch");
  head_.weight.value.col(0) = head.w_u;
  head_.bias.value(0, 0) = head.b_u;
  for (Eigen::Index y = 0; y < head.num_classes(); ++y)
    class_proj_.value.row(y) = head.class_embeddings[static_cast<std::size_t>(y)].transpose();
}

void Discriminator::copy_trunk_from(const Discriminator& other) {
  require(other.convs_.size() == convs_.size() && other.trunk_.size() == trunk_.size(), "trunk layouts differ");
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].kernel.value = other.convs_[i].kernel.value;
    convs_[i].bias.value = other.convs_[i].bias.value;
    convs_[i].sn = other.convs_[i].sn;
  }
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    require(trunk_[i].weight.value.rows() == other.trunk_[i].weight.value.rows() &&
                trunk_[i].weight.value.cols() == other.trunk_[i].weight.value.cols(),
            "trunk layer shapes differ");
    trunk_[i].weight.value = other.trunk_[i].weight.value;
    trunk_[i].bias.value = other.trunk_[i].bias.value;
    trunk_[i].sn = other.trunk_[i].sn;
  }
}

std::vector<Parameter*> Discriminator::parameters() {
  std::vector<Parameter*> ps;
  for (auto& c : convs_) {
    ps.push_back(&c.kernel);
    ps.push_back(&c.bias);
  }
  for (auto& l : trunk_) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  ps.push_back(&head_.weight);
  ps.push_back(&head_.bias);
  if (class_proj_.size() > 0) ps.push_back(&class_proj_);
  if (has_contrastive_) {
    ps.push_back(&contrastive_proj_.weight);
    ps.push_back(&contrastive_proj_.bias);
    ps.push_back(&contrastive_embed_);
  }
  return ps;
}

std::vector<const Parameter*> Discriminator::parameters() const {
  auto ps = const_cast<Discriminator*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<SpectralNormState*> Discriminator::spectral_states() {
  std::vector<SpectralNormState*> out;
  for (auto& c : convs_)
    if (c.spectral) out.push_back(&c.sn);
  for (auto& l : trunk_)
    if (l.spectral) out.push_back(&l.sn);
  if (head_.spectral) out.push_back(&head_.sn);
  if (has_contrastive_ && contrastive_proj_.spectral) out.push_back(&contrastive_proj_.sn);
  return out;
}

Generator build_generator(const NetConfig& cfg) { return Generator(cfg); }

Discriminator build_discriminator(const NetConfig& cfg, const VariantPreset& preset) {
  return Discriminator(cfg, preset);
}

// ---- optimizer ------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  require(lr >= 0.0, "learning rate must be nonnegative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    if (lr_ == 0.0) continue;
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace ecgan
