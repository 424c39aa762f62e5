#pragma once

#include "ecgan/data.hpp"
#include "ecgan/eval.hpp"
#include "ecgan/networks.hpp"
#include "ecgan/trainer.hpp"
#include "ecgan/variants.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace ecgan {

/// Flat key=value settings. Keys without a dot are top-level (preset, seeds,
/// name, out); the rest carry a section prefix: loss., data., net., train., eval.
using ConfigMap = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment. Errors carry the line number.
ConfigMap parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigMap load_config_file(const std::filesystem::path& path);
std::string format_config(const ConfigMap& config);

struct ExperimentConfig {
  std::string name;  // run directory name; defaults to "<preset>_<dataset>"
  VariantPreset preset;
  std::map<std::string, double> loss_overrides;

  std::string dataset = "ring8";  // "ring8" or a path to an image directory / record file
  int data_samples = 20000;       // ring8 only
  std::uint64_t data_seed = 1234;
  int max_per_class = 0;          // images only

  NetConfig net;
  TrainConfig train;
  int eval_samples_per_class = 250;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_root = "runs";

  /// Builds and validates a config. Unknown keys and malformed values throw InvalidInput.
  static ExperimentConfig from_map(const ConfigMap& config);
  /// Canonical key=value form of every setting, used to detect config changes.
  ConfigMap to_map() const;

  std::filesystem::path run_dir() const { return out_root / name; }
};

/// Output root: ECGAN_LAB_OUT when set, else `fallback`.
std::filesystem::path resolve_out_root(const std::filesystem::path& fallback);

struct SeedSummary {
  std::uint64_t seed = 0;
  MetricsRecord best;
  MetricsRecord final_record;
};

struct MetricSpread {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single seed
};

struct RunSummary {
  std::string preset;
  std::string dataset;
  std::vector<SeedSummary> per_seed;
  std::map<std::string, MetricSpread> aggregate;  // over per-seed best records

  std::string to_json() const;
  static RunSummary from_json(const std::string& text);
};

enum class RunOutcome { trained, up_to_date };

struct RunOptions {
  bool force = false;
  std::function<void(const std::string&)> log;  // progress lines
};

/// Trains one run per seed under run_dir()/seed_<s>/ and writes summary.json.
/// An existing run directory is never modified unless `force` is set; when it
/// already holds a finished run with the same config the call is a no-op.
RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options, RunSummary* summary = nullptr);

/// Loads `run_dir()/summary.json` when present.
bool load_summary(const ExperimentConfig& config, RunSummary& out);

/// Position of a preset in the ablation ordering 0, U, C, E, UC, UCE, then baselines.
int ablation_order(const std::string& preset);

struct CompareOptions {
  bool no_train = false;
  bool force = false;
  std::filesystem::path out_dir;  // where compare.txt and compare.csv go
  std::function<void(const std::string&)> log;
};

/// Runs or loads every config, then writes a plain-text and a CSV table with
/// one row per config ordered by ablation position. Returns the text table.
std::string compare_experiments(const std::vector<ExperimentConfig>& configs, const CompareOptions& options);

/// Renders samples.png: a class-colored scatter over the real data for 2-D
/// vectors, or a class-by-column grid for images.
void write_sample_figure(const std::filesystem::path& path, const Generator& generator, const LabeledDataset& real,
                         std::uint64_t seed);

/// Loads a dataset as configured.
LabeledDataset load_dataset(const ExperimentConfig& config);
/// Evaluation context matching the dataset.
EvalContext make_eval_context(const ExperimentConfig& config, const LabeledDataset& data);

}  // namespace ecgan
