#include "ecgan/trainer.hpp"

#include "ecgan/losses.hpp"

#include <cmath>
#include <fstream>
#include <utility>

namespace ecgan {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagDiscriminator = 1;
constexpr std::uint64_t kTagGenerator = 2;
constexpr std::uint64_t kTagReal = 3;
constexpr std::uint64_t kTagEval = 4;

struct Split {
  Graph::Var real;
  Graph::Var fake;
};

Split split_rows(Graph& g, Graph::Var v, Eigen::Index m_real, Eigen::Index m_fake) {
  return {g.slice_rows(v, 0, m_real), g.slice_rows(v, m_real, m_fake)};
}

void check_finite(double loss, const char* which, const TrainState& s, std::int64_t step) {
  if (!std::isfinite(loss)) {
    throw TrainingAborted(std::string(which) + " loss is not finite (" + std::to_string(loss) + ") at step " +
                              std::to_string(step) + ", batch seed " + std::to_string(s.last_batch_seed),
                          s.last_batch_seed, step);
  }
}

void refresh_ema(TrainState& s) {
  auto avg = s.generator_ema.parameters();
  auto cur = std::as_const(s.generator).parameters();
  if (s.g_updates >= s.config.ema_start_step) {
    ema_update(avg, cur, s.config.ema_decay);
  } else {
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i]->value = cur[i]->value;
  }
  // The averaged weights are normalized with the live power-iteration vectors.
  auto sn_avg = s.generator_ema.spectral_states();
  auto sn_cur = s.generator.spectral_states();
  for (std::size_t i = 0; i < sn_avg.size(); ++i) *sn_avg[i] = *sn_cur[i];
}

std::string sn_name(const char* net, std::size_t i, const char* which) {
  return std::string(net) + "/sn" + std::to_string(i) + "/" + which;
}

template <typename Params, typename States>
void export_net(TensorMap& out, const std::string& prefix, const char* sn_prefix, Params params, States states) {
  for (const Parameter* p : params) out[prefix + p->name] = p->value;
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[prefix + sn_name(sn_prefix, i, "u")] = states[i]->u.transpose();
    out[prefix + sn_name(sn_prefix, i, "v")] = states[i]->v.transpose();
  }
}

const Matrix& find_tensor(const TensorMap& t, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto it = t.find(name);
  if (it == t.end()) throw InvalidInput("checkpoint is missing tensor '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw InvalidInput("checkpoint tensor '" + name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  }
  return it->second;
}

template <typename Params, typename States>
void import_net(const TensorMap& t, const std::string& prefix, const char* sn_prefix, Params params, States states) {
  for (Parameter* p : params) p->value = find_tensor(t, prefix + p->name, p->value.rows(), p->value.cols());
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& st = *states[i];
    st.u = find_tensor(t, prefix + sn_name(sn_prefix, i, "u"), 1, st.u.size()).row(0).transpose();
    st.v = find_tensor(t, prefix + sn_name(sn_prefix, i, "v"), 1, st.v.size()).row(0).transpose();
  }
}

void export_adam(TensorMap& out, const char* side, Adam& opt, const std::vector<Parameter*>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[std::string("adam/") + side + "/" + params[i]->name + "/m"] = opt.first_moments()[i];
    out[std::string("adam/") + side + "/" + params[i]->name + "/v"] = opt.second_moments()[i];
  }
}

void import_adam(const TensorMap& t, const char* side, Adam& opt, const std::vector<Parameter*>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string base = std::string("adam/") + side + "/" + params[i]->name;
    opt.first_moments()[i] = find_tensor(t, base + "/m", params[i]->value.rows(), params[i]->value.cols());
    opt.second_moments()[i] = find_tensor(t, base + "/v", params[i]->value.rows(), params[i]->value.cols());
  }
}

}  // namespace

void TrainConfig::validate(bool allow_zero_lr) const {
  require(n_iter >= 0, "n_iter must be non-negative");
  require(n_dis >= 1, "n_dis must be at least 1");
  require(batch_size >= 2, "batch_size must be at least 2");
  if (allow_zero_lr) {
    require(lr_g >= 0.0 && lr_d >= 0.0, "learning rates must be non-negative");
  } else {
    require(lr_g > 0.0 && lr_d > 0.0, "learning rates must be positive");
  }
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must lie in [0, 1)");
  require(ema_decay >= 0.0 && ema_decay <= 1.0, "ema_decay must lie in [0, 1]");
  require(ema_start_step >= 0, "ema_start_step must be non-negative");
  require(eval_every >= 0, "eval_every must be non-negative");
}

TrainState::TrainState(const NetConfig& net_cfg, const VariantPreset& preset_in, const TrainConfig& cfg,
                       std::vector<double> marginal)
    : net(net_cfg),
      preset(preset_in),
      config(cfg),
      label_marginal(std::move(marginal)),
      generator(net_cfg),
      generator_ema(generator),
      discriminator(net_cfg, preset_in),
      opt_g(generator.parameters(), cfg.lr_g, cfg.beta1, cfg.beta2),
      opt_d(discriminator.parameters(), cfg.lr_d, cfg.beta1, cfg.beta2) {
  config.validate(true);
  preset.weights.validate();
  require(static_cast<int>(label_marginal.size()) == net.num_classes, "label marginal must have one entry per class");
  double total = 0.0;
  for (double p : label_marginal) {
    require(p >= 0.0 && std::isfinite(p), "label marginal entries must be non-negative");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, "label marginal must sum to 1");
}

std::vector<int> sample_labels(std::span<const double> marginal, int m, Rng& rng) {
  std::discrete_distribution<int> dist(marginal.begin(), marginal.end());
  std::vector<int> out(static_cast<std::size_t>(m));
  for (auto& y : out) y = dist(rng);
  return out;
}

Graph::Var discriminator_loss(Graph& g, Discriminator& d, const VariantPreset& preset, const Matrix& real_x,
                              std::span<const int> real_y, const Matrix& fake_x, std::span<const int> fake_y,
                              BindMode mode) {
  const LossWeights& w = preset.weights;
  const ActiveTerms terms = active_terms(preset);
  const Eigen::Index mr = real_x.rows();
  const Eigen::Index mf = fake_x.rows();
  require(static_cast<Eigen::Index>(real_y.size()) == mr && static_cast<Eigen::Index>(fake_y.size()) == mf,
          "discriminator_loss: label count mismatch");

  // One forward pass over both halves so spectral norm advances once per step.
  Matrix x(mr + mf, real_x.cols());
  x << real_x, fake_x;
  std::vector<int> labels(real_y.begin(), real_y.end());
  labels.insert(labels.end(), fake_y.begin(), fake_y.end());
  const DiscriminatorOutputs out = d.forward(g, g.constant(std::move(x)), labels, mode);

  const std::span<const int> all(labels);
  Graph::Var loss{};
  switch (preset.head_design) {
    case HeadDesign::k_output_energy: {
      const Split f = split_rows(g, d.conditional_score(g, out, all), mr, mf);
      Split h = f;
      if (w.alpha != 0.0) h = split_rows(g, d.unconditional_score(g, out), mr, mf);
      loss = tape::discriminator_adversarial(g, f.real, h.real, f.fake, h.fake, w);
      break;
    }
    case HeadDesign::projection_single:
    case HeadDesign::single_plus_embedding:
    case HeadDesign::acgan_split: {
      // Single-score heads have no separate unconditional term.
      const Graph::Var score = preset.head_design == HeadDesign::acgan_split ? d.unconditional_score(g, out)
                                                                              : d.conditional_score(g, out, all);
      const Split s = split_rows(g, score, mr, mf);
      LossWeights plain = w;
      plain.alpha = 0.0;
      loss = tape::discriminator_adversarial(g, s.real, s.real, s.fake, s.fake, plain);
      break;
    }
  }

  if (terms.d_classification_real || terms.d_classification_fake) {
    const Split logits = split_rows(g, d.classifier_logits(g, out), mr, mf);
    const double weight = preset.head_design == HeadDesign::acgan_split ? w.lambda_d : w.lambda_clf;
    if (terms.d_classification_real) {
      loss = g.add(loss, g.scale(tape::classification(g, logits.real, real_y), weight));
    }
    if (terms.d_classification_fake) {
      loss = g.add(loss, g.scale(tape::classification(g, logits.fake, fake_y), weight));
    }
  }

  if (terms.d_contrastive) {
    require(out.embedding.has_value(), "preset needs a contrastive embedding");
    const Graph::Var l_real = g.slice_rows(*out.embedding, 0, mr);
    const Graph::Var e_real = d.class_embeddings(g, real_y, mode);
    const Graph::Var lc =
        tape::conditional_contrastive(g, l_real, e_real, real_y, w.temperature, w.contrastive_self_positive);
    loss = g.add(loss, g.scale(lc, w.lambda_c));
  }
  return loss;
}

Graph::Var generator_loss(Graph& g, Generator& gen, Discriminator& d, const VariantPreset& preset, const Matrix& z,
                          std::span<const int> fake_y, BindMode mode) {
  const LossWeights& w = preset.weights;
  const ActiveTerms terms = active_terms(preset);
  const Graph::Var x = gen.forward(g, g.constant(z), fake_y, mode);
  // The discriminator is frozen: its parameters enter as constants and its
  // spectral-norm vectors are left alone.
  const BindMode frozen{false, false};
  const DiscriminatorOutputs out = d.forward(g, x, fake_y, frozen);

  Graph::Var score{};
  switch (preset.head_design) {
    case HeadDesign::k_output_energy: {
      score = d.conditional_score(g, out, fake_y);
      if (w.alpha != 0.0) score = g.add(score, g.scale(d.unconditional_score(g, out), w.alpha));
      break;
    }
    case HeadDesign::projection_single:
    case HeadDesign::single_plus_embedding: score = d.conditional_score(g, out, fake_y); break;
    case HeadDesign::acgan_split: score = d.unconditional_score(g, out); break;
  }
  Graph::Var loss = g.neg(g.mean(score));

  if (terms.g_classification) {
    loss = g.add(loss, g.scale(tape::classification(g, d.classifier_logits(g, out), fake_y), w.lambda_g));
  }
  if (terms.g_contrastive) {
    require(out.embedding.has_value(), "preset needs a contrastive embedding");
    const Graph::Var e = d.class_embeddings(g, fake_y, frozen);
    const Graph::Var lc =
        tape::conditional_contrastive(g, *out.embedding, e, fake_y, w.temperature, w.contrastive_self_positive);
    loss = g.add(loss, g.scale(lc, w.lambda_c));
  }
  return loss;
}

double discriminator_step(TrainState& s, const Matrix& real_x, std::span<const int> real_y) {
  require(real_x.rows() >= 2 && static_cast<Eigen::Index>(real_y.size()) == real_x.rows(),
          "discriminator_step: need at least two labeled real samples");
  require(real_x.cols() == s.net.data_dim(), "discriminator_step: real data width mismatch");
  for (int y : real_y) require(y >= 0 && y < s.net.num_classes, "discriminator_step: label out of range");

  const std::int64_t step = s.d_updates + 1;
  s.last_batch_seed = derive_seed(s.config.seed, {kTagDiscriminator, static_cast<std::uint64_t>(step)});
  Rng rng(s.last_batch_seed);
  const int m = static_cast<int>(real_x.rows());
  const Matrix z = randn(m, s.net.noise_dim, rng);
  const std::vector<int> fake_y = sample_labels(s.label_marginal, m, rng);
  const Matrix fake_x = s.generator.sample(z, fake_y);

  s.opt_d.zero_grad();
  Graph g;
  const Graph::Var loss =
      discriminator_loss(g, s.discriminator, s.preset, real_x, real_y, fake_x, fake_y, {true, true});
  const double value = g.scalar(loss);
  check_finite(value, "discriminator", s, step);
  g.backward(loss);
  s.opt_d.step();
  s.d_updates = step;
  return value;
}

double generator_step(TrainState& s) {
  const std::int64_t step = s.g_updates + 1;
  s.last_batch_seed = derive_seed(s.config.seed, {kTagGenerator, static_cast<std::uint64_t>(step)});
  Rng rng(s.last_batch_seed);
  const int m = s.config.batch_size;
  const Matrix z = randn(m, s.net.noise_dim, rng);
  const std::vector<int> fake_y = sample_labels(s.label_marginal, m, rng);

  s.opt_g.zero_grad();
  Graph g;
  const Graph::Var loss = generator_loss(g, s.generator, s.discriminator, s.preset, z, fake_y, {true, true});
  const double value = g.scalar(loss);
  check_finite(value, "generator", s, step);
  g.backward(loss);
  s.opt_g.step();
  s.g_updates = step;
  refresh_ema(s);
  return value;
}

TensorMap state_tensors(const TrainState& s) {
  TensorMap out;
  auto& gen = const_cast<Generator&>(s.generator);
  auto& ema = const_cast<Generator&>(s.generator_ema);
  auto& dis = const_cast<Discriminator&>(s.discriminator);
  export_net(out, "", "generator", s.generator.parameters(), gen.spectral_states());
  export_net(out, "ema/", "generator", s.generator_ema.parameters(), ema.spectral_states());
  export_net(out, "", "discriminator", s.discriminator.parameters(), dis.spectral_states());
  Matrix counters(1, 2);
  counters << static_cast<double>(s.d_updates), static_cast<double>(s.g_updates);
  out["counters"] = counters;
  auto& st = const_cast<TrainState&>(s);
  export_adam(out, "generator", st.opt_g, gen.parameters());
  export_adam(out, "discriminator", st.opt_d, dis.parameters());
  Matrix adam_steps(1, 2);
  adam_steps << static_cast<double>(s.opt_g.steps()), static_cast<double>(s.opt_d.steps());
  out["adam/steps"] = adam_steps;
  Matrix shape(1, 4);
  shape << s.net.data_shape.channels, s.net.data_shape.height, s.net.data_shape.width, s.net.num_classes;
  out["data_shape"] = shape;
  return out;
}

void load_state_tensors(TrainState& s, const TensorMap& t) {
  // A tensor this state would not write means the checkpoint belongs to a different architecture.
  const TensorMap expected = state_tensors(s);
  for (const auto& [name, value] : t) {
    if (!expected.count(name)) throw InvalidInput("checkpoint tensor '" + name + "' does not belong to this network");
  }
  import_net(t, "", "generator", s.generator.parameters(), s.generator.spectral_states());
  import_net(t, "ema/", "generator", s.generator_ema.parameters(), s.generator_ema.spectral_states());
  import_net(t, "", "discriminator", s.discriminator.parameters(), s.discriminator.spectral_states());
  const Matrix& c = find_tensor(t, "counters", 1, 2);
  s.d_updates = static_cast<std::int64_t>(c(0, 0));
  s.g_updates = static_cast<std::int64_t>(c(0, 1));
  import_adam(t, "generator", s.opt_g, s.generator.parameters());
  import_adam(t, "discriminator", s.opt_d, s.discriminator.parameters());
  const Matrix& a = find_tensor(t, "adam/steps", 1, 2);
  s.opt_g.set_steps(static_cast<std::int64_t>(a(0, 0)));
  s.opt_d.set_steps(static_cast<std::int64_t>(a(0, 1)));
}

TrainResult train(TrainState& s, const LabeledDataset& data, const EvalContext& eval,
                  const std::optional<std::filesystem::path>& out_dir, const TrainCallbacks& callbacks) {
  s.config.validate();
  require(data.size() >= 2, "training data needs at least two samples");
  require(data.num_classes == s.net.num_classes, "dataset class count does not match the network");
  require(data.x.cols() == s.net.data_dim(), "dataset sample width does not match the network");

  std::ofstream metrics;
  std::filesystem::path ckpt_dir;
  if (out_dir) {
    ckpt_dir = *out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    metrics.open(*out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (*out_dir / "metrics.jsonl").string());
  }

  const TrainConfig& cfg = s.config;
  const std::int64_t eval_every = cfg.eval_every > 0 ? cfg.eval_every : std::max<std::int64_t>(cfg.n_iter, 1);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, {kTagEval});
  const int m = cfg.batch_size;

  TrainResult result;
  Matrix real_x(m, data.x.cols());
  std::vector<int> real_y(static_cast<std::size_t>(m));
  std::uniform_int_distribution<Eigen::Index> pick(0, data.size() - 1);

  try {
    for (std::int64_t it = 0; it < cfg.n_iter; ++it) {
      double d_loss = 0.0;
      for (int k = 0; k < cfg.n_dis; ++k) {
        Rng rng(derive_seed(cfg.seed, {kTagReal, static_cast<std::uint64_t>(s.d_updates + 1)}));
        for (int i = 0; i < m; ++i) {
          const Eigen::Index r = pick(rng);
          real_x.row(i) = data.x.row(r);
          real_y[static_cast<std::size_t>(i)] = data.y[static_cast<std::size_t>(r)];
        }
        d_loss = discriminator_step(s, real_x, real_y);
      }
      const double g_loss = generator_step(s);
      const StepLosses step{s.g_updates, d_loss, g_loss};
      result.losses.push_back(step);
      if (callbacks.on_step) callbacks.on_step(step);

      if (s.g_updates % eval_every == 0 || it + 1 == cfg.n_iter) {
        EvalOutcome outcome = evaluate_generator(s.generator_ema, eval, eval_seed);
        MetricsRecord& rec = outcome.record;
        rec.step = s.g_updates;
        rec.preset = s.preset.name;
        rec.seed = cfg.seed;
        result.history.push_back(rec);
        const std::size_t idx = result.history.size() - 1;
        // Lowest Fréchet distance wins; ties go to the later step.
        const bool is_best = !result.best || rec.frechet <= result.history[*result.best].frechet;
        if (is_best) result.best = idx;
        if (out_dir) {
          metrics << rec.to_json_line() << '\n' << std::flush;
          if (is_best) save_tensors(ckpt_dir / "best.ckpt", state_tensors(s));
        }
        if (callbacks.on_metrics) callbacks.on_metrics(rec);
      }
    }
  } catch (const TrainingAborted&) {
    if (out_dir) {
      metrics.flush();
      save_tensors(ckpt_dir / "aborted.ckpt", state_tensors(s));
    }
    throw;
  }
  if (out_dir) save_tensors(ckpt_dir / "final.ckpt", state_tensors(s));
  return result;
}

}  // namespace ecgan
