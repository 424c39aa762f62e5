#pragma once

#include "ecgan/checkpoint.hpp"
#include "ecgan/common.hpp"
#include "ecgan/data.hpp"
#include "ecgan/eval.hpp"
#include "ecgan/networks.hpp"
#include "ecgan/variants.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace ecgan {

struct TrainConfig {
  std::int64_t n_iter = 20000;  // generator steps
  int n_dis = 2;                // discriminator steps per generator step
  int batch_size = 64;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double ema_decay = 0.9999;
  std::int64_t ema_start_step = 1000;
  std::int64_t eval_every = 0;  // 0 means a single evaluation after the last step
  std::uint64_t seed = 0;

  /// Learning rates must be positive for a training run; `allow_zero_lr`
  /// admits 0 for fixed-point experiments.
  void validate(bool allow_zero_lr = false) const;
};

/// Everything the loop mutates.
struct TrainState {
  TrainState(const NetConfig& net, const VariantPreset& preset, const TrainConfig& config,
             std::vector<double> label_marginal);
  // The optimizers hold pointers into the networks.
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  NetConfig net;
  VariantPreset preset;
  TrainConfig config;
  std::vector<double> label_marginal;  // fake labels are drawn from this

  Generator generator;
  Generator generator_ema;
  Discriminator discriminator;
  Adam opt_g;
  Adam opt_d;

  std::int64_t d_updates = 0;
  std::int64_t g_updates = 0;

  /// Seed used for the most recent step's noise and labels.
  std::uint64_t last_batch_seed = 0;
};

/// Draws m labels i.i.d. from `marginal`.
std::vector<int> sample_labels(std::span<const double> marginal, int m, Rng& rng);

/// Builds L_D on the tape for one batch. The generator output `fake_x` is
/// passed in as data, so no gradient reaches the generator.
Graph::Var discriminator_loss(Graph& g, Discriminator& d, const VariantPreset& preset, const Matrix& real_x,
                              std::span<const int> real_y, const Matrix& fake_x, std::span<const int> fake_y,
                              BindMode mode);

/// Builds L_G on the tape. Discriminator parameters are bound as constants.
Graph::Var generator_loss(Graph& g, Generator& gen, Discriminator& d, const VariantPreset& preset, const Matrix& z,
                          std::span<const int> fake_y, BindMode mode);

/// One Adam update of the discriminator; returns L_D.
double discriminator_step(TrainState& state, const Matrix& real_x, std::span<const int> real_y);

/// One Adam update of the generator followed by the EMA update; returns L_G.
double generator_step(TrainState& state);

/// Named tensors for every network parameter and spectral-norm vector, plus
/// the update counters and a {C, H, W, K} "data_shape" row.
TensorMap state_tensors(const TrainState& state);
/// Restores parameters, spectral-norm vectors and counters. Shapes must match.
void load_state_tensors(TrainState& state, const TensorMap& tensors);

struct StepLosses {
  std::int64_t step;  // generator step, 1-based
  double d_loss;      // last discriminator loss of the inner loop
  double g_loss;
};

struct TrainCallbacks {
  std::function<void(const StepLosses&)> on_step;
  std::function<void(const MetricsRecord&)> on_metrics;
};

struct TrainResult {
  std::vector<MetricsRecord> history;
  std::vector<StepLosses> losses;
  std::optional<std::size_t> best;  // index into history
};

/// Runs the alternating loop. When `out_dir` is set, metrics.jsonl and the
/// best and final checkpoints are written there; on abort the stream is
/// flushed and an `aborted.ckpt` is written before rethrowing.
TrainResult train(TrainState& state, const LabeledDataset& data, const EvalContext& eval,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const TrainCallbacks& callbacks = {});

}  // namespace ecgan
