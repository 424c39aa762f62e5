#include "ecgan_lab.h"

#include "ecgan/energy_core.hpp"
#include "ecgan/experiment.hpp"
#include "ecgan/trainer.hpp"
#include "ecgan/verify.hpp"

#include <cstring>
#include <memory>
#include <optional>
#include <sstream>

struct ecgan_experiment {
  ecgan::ConfigMap settings;
  std::optional<ecgan::ExperimentConfig> config;
  std::string run_dir;
};

struct ecgan_report {
  std::string text;
  bool passed = false;
};

struct ecgan_generator {
  std::unique_ptr<ecgan::TrainState> state;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ecgan_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return ECGAN_OK;
  } catch (const ecgan::TrainingAborted& e) {
    g_last_error = e.what();
    return ECGAN_E_TRAINING_ABORTED;
  } catch (const ecgan::InvalidInput& e) {
    g_last_error = e.what();
    return ECGAN_E_INVALID_ARGUMENT;
  } catch (const ecgan::IoError& e) {
    g_last_error = e.what();
    return ECGAN_E_IO;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ECGAN_E_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ECGAN_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ECGAN_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw ecgan::InvalidInput(std::string(what) + " must not be NULL");
}

const ecgan::ExperimentConfig& built(ecgan_experiment* exp) {
  if (!exp->config) {
    exp->config = ecgan::ExperimentConfig::from_map(exp->settings);
    exp->config->out_root = ecgan::resolve_out_root(exp->config->out_root);
    exp->run_dir = exp->config->run_dir().string();
  }
  return *exp->config;
}

std::function<void(const std::string&)> forward_log(ecgan_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* ecgan_version(void) { return "0.1.0"; }

const char* ecgan_last_error(void) { return g_last_error.c_str(); }

const char* ecgan_status_string(ecgan_status status) {
  switch (status) {
    case ECGAN_OK: return "ok";
    case ECGAN_E_INVALID_ARGUMENT: return "invalid argument";
    case ECGAN_E_IO: return "i/o error";
    case ECGAN_E_TRAINING_ABORTED: return "training aborted";
    case ECGAN_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int ecgan_preset_count(void) { return static_cast<int>(ecgan::preset_names().size()); }

const char* ecgan_preset_name(int index) {
  const auto& names = ecgan::preset_names();
  if (index < 0 || index >= static_cast<int>(names.size())) return nullptr;
  return names[static_cast<std::size_t>(index)].c_str();
}

ecgan_status ecgan_energy_scores(const double* weight, const double* bias, int feature_dim, int num_classes,
                                 const double* features, double* out) {
  return guarded([&] {
    need(weight, "weight");
    need(bias, "bias");
    need(features, "features");
    need(out, "out");
    ecgan::require(feature_dim >= 1, "feature_dim must be positive");
    ecgan::require(num_classes >= 2, "num_classes must be at least 2");
    const ecgan::EnergyHeadParams head(Eigen::Map<const ecgan::Matrix>(weight, feature_dim, num_classes),
                                       Eigen::Map<const ecgan::Vector>(bias, num_classes));
    const ecgan::Vector f = Eigen::Map<const ecgan::Vector>(features, feature_dim);
    Eigen::Map<ecgan::Vector>(out, num_classes) = ecgan::energy_scores(head, f);
  });
}

ecgan_status ecgan_aggregate_energy(const double* logits, int num_classes, double* out) {
  return guarded([&] {
    need(logits, "logits");
    need(out, "out");
    ecgan::require(num_classes >= 1, "num_classes must be positive");
    *out = ecgan::aggregate_energy(std::span<const double>(logits, static_cast<std::size_t>(num_classes)));
  });
}

ecgan_status ecgan_class_posterior(const double* logits, int num_classes, double* out) {
  return guarded([&] {
    need(logits, "logits");
    need(out, "out");
    ecgan::require(num_classes >= 1, "num_classes must be positive");
    Eigen::Map<ecgan::Vector>(out, num_classes) =
        ecgan::class_posterior(Eigen::Map<const ecgan::Vector>(logits, num_classes));
  });
}

ecgan_status ecgan_experiment_create(ecgan_experiment** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ecgan_experiment();
  });
}

void ecgan_experiment_destroy(ecgan_experiment* exp) { delete exp; }

ecgan_status ecgan_experiment_load_file(ecgan_experiment* exp, const char* path) {
  return guarded([&] {
    need(exp, "experiment");
    need(path, "path");
    for (auto& [k, v] : ecgan::load_config_file(path)) exp->settings[k] = v;
    exp->config.reset();
  });
}

ecgan_status ecgan_experiment_set(ecgan_experiment* exp, const char* key, const char* value) {
  return guarded([&] {
    need(exp, "experiment");
    need(key, "key");
    need(value, "value");
    ecgan::require(*key != '\0', "config key must not be empty");
    exp->settings[key] = value;
    exp->config.reset();
  });
}

ecgan_status ecgan_experiment_validate(ecgan_experiment* exp) {
  return guarded([&] {
    need(exp, "experiment");
    built(exp);
  });
}

const char* ecgan_experiment_run_dir(ecgan_experiment* exp) {
  if (exp == nullptr || !exp->config) return nullptr;
  return exp->run_dir.c_str();
}

ecgan_status ecgan_experiment_run(ecgan_experiment* exp, int force, ecgan_log_fn log, void* user, int* up_to_date) {
  ecgan::ExperimentConfig cfg;
  if (const ecgan_status s = guarded([&] {
        need(exp, "experiment");
        cfg = built(exp);
      });
      s != ECGAN_OK) {
    return s;
  }
  const ecgan_status s = guarded([&] {
    ecgan::RunOptions opts;
    opts.force = force != 0;
    opts.log = forward_log(log, user);
    const auto outcome = ecgan::run_experiment(cfg, opts);
    if (up_to_date) *up_to_date = outcome == ecgan::RunOutcome::up_to_date;
  });
  // Once the config is valid, anything that goes wrong is a runtime failure.
  return s == ECGAN_E_INVALID_ARGUMENT ? ECGAN_E_IO : s;
}

ecgan_status ecgan_compare(ecgan_experiment* const* exps, size_t count, const char* out_dir, int no_train, int force,
                           ecgan_log_fn log, void* user, ecgan_report** table) {
  std::vector<ecgan::ExperimentConfig> configs;
  if (const ecgan_status s = guarded([&] {
        need(exps, "experiments");
        need(out_dir, "out_dir");
        ecgan::require(count >= 2, "compare needs at least two configs");
        for (size_t i = 0; i < count; ++i) {
          need(exps[i], "experiment");
          configs.push_back(built(exps[i]));
        }
      });
      s != ECGAN_OK) {
    return s;
  }
  const ecgan_status s = guarded([&] {
    ecgan::CompareOptions opts;
    opts.no_train = no_train != 0;
    opts.force = force != 0;
    opts.out_dir = out_dir;
    opts.log = forward_log(log, user);
    const std::string text = ecgan::compare_experiments(configs, opts);
    if (table) {
      *table = new ecgan_report();
      (*table)->text = text;
      (*table)->passed = true;
    }
  });
  return s == ECGAN_E_INVALID_ARGUMENT ? ECGAN_E_IO : s;
}

ecgan_status ecgan_verify(const char* kind, uint64_t seed, ecgan_report** out) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    const std::string k = kind;
    ecgan::SuiteResult r;
    std::ostringstream extra;
    if (k == "duality") {
      r = ecgan::verify_duality(seed);
    } else if (k == "entropy-bound") {
      std::vector<ecgan::EntropyBoundReport> reports;
      r = ecgan::verify_entropy_bound(seed, 6, &reports);
      for (const auto& rep : reports) extra << rep.to_json_line() << "\n";
    } else if (k == "gradients") {
      r = ecgan::verify_gradients(seed);
      extra << "max relative error " << r.max_error << " (tolerance 1e-05)\n";
    } else if (k == "equivalence") {
      r = ecgan::verify_equivalence(seed);
    } else {
      throw ecgan::InvalidInput("unknown verify kind '" + k +
                                "'; valid kinds: duality, entropy-bound, gradients, equivalence");
    }
    auto rep = std::make_unique<ecgan_report>();
    std::ostringstream os;
    os << r.summary() << "\n" << extra.str();
    for (const auto& f : r.failures) os << "  " << f << "\n";
    rep->text = os.str();
    rep->passed = r.ok();
    *out = rep.release();
  });
}

const char* ecgan_report_text(const ecgan_report* report) { return report ? report->text.c_str() : ""; }

int ecgan_report_passed(const ecgan_report* report) { return report && report->passed ? 1 : 0; }

void ecgan_report_destroy(ecgan_report* report) { delete report; }

ecgan_status ecgan_generator_open(const char* run_dir, uint64_t seed, const char* which, ecgan_generator** out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    need(which, "which");
    need(out, "out");
    const std::string w = which;
    ecgan::require(w == "best" || w == "final", "which must be \"best\" or \"final\"");
    const std::filesystem::path dir = run_dir;
    const auto cfg = ecgan::ExperimentConfig::from_map(ecgan::load_config_file(dir / "config.txt"));
    const auto tensors =
        ecgan::load_tensors(dir / ("seed_" + std::to_string(seed)) / "checkpoints" / (w + ".ckpt"));
    const auto it = tensors.find("data_shape");
    if (it == tensors.end() || it->second.size() != 4) throw ecgan::InvalidInput("checkpoint lacks data_shape");
    ecgan::NetConfig net = cfg.net;
    net.data_shape = {static_cast<int>(it->second(0, 0)), static_cast<int>(it->second(0, 1)),
                      static_cast<int>(it->second(0, 2))};
    net.num_classes = static_cast<int>(it->second(0, 3));
    std::vector<double> uniform(static_cast<std::size_t>(net.num_classes), 1.0 / net.num_classes);
    auto gen = std::make_unique<ecgan_generator>();
    gen->state = std::make_unique<ecgan::TrainState>(net, cfg.preset, cfg.train, uniform);
    ecgan::load_state_tensors(*gen->state, tensors);
    *out = gen.release();
  });
}

int ecgan_generator_data_dim(const ecgan_generator* gen) { return gen ? gen->state->net.data_dim() : 0; }

int ecgan_generator_num_classes(const ecgan_generator* gen) { return gen ? gen->state->net.num_classes : 0; }

ecgan_status ecgan_generator_sample(ecgan_generator* gen, const int* labels, size_t count, uint64_t noise_seed,
                                    double* out) {
  return guarded([&] {
    need(gen, "generator");
    need(labels, "labels");
    need(out, "out");
    ecgan::require(count >= 1, "count must be positive");
    const auto& net = gen->state->net;
    std::vector<int> y(labels, labels + count);
    for (int v : y) ecgan::require(v >= 0 && v < net.num_classes, "label out of range");
    ecgan::Rng rng(noise_seed);
    const ecgan::Matrix z = ecgan::randn(static_cast<Eigen::Index>(count), net.noise_dim, rng);
    const ecgan::Matrix x = gen->state->generator_ema.sample(z, y);
    std::memcpy(out, x.data(), sizeof(double) * static_cast<std::size_t>(x.size()));
  });
}

void ecgan_generator_destroy(ecgan_generator* gen) { delete gen; }

}  // extern "C"
