// Command-line front end. Talks to the library only through the C interface.

#include "ecgan_lab.h"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int exit_code(ecgan_status s) {
  if (s == ECGAN_OK) return kExitOk;
  return s == ECGAN_E_INVALID_ARGUMENT ? kExitUsage : kExitFailure;
}

int report_error(ecgan_status s) {
  std::fprintf(stderr, "error: %s\n", ecgan_last_error());
  return exit_code(s);
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

struct RunFlags {
  std::vector<std::string> config_files;
  std::string preset;
  std::string dataset;
  std::string steps;
  std::string seeds;
  std::string out;
  std::string name;
  std::vector<std::string> sets;
  bool force = false;
  bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool positional_configs) {
  if (positional_configs) {
    cmd->add_option("configs", f.config_files, "Config files (key = value lines)")->check(CLI::ExistingFile);
  } else {
    cmd->add_option("-c,--config", f.config_files, "Config file (key = value lines)")->check(CLI::ExistingFile);
  }
  cmd->add_option("--dataset", f.dataset, "ring8, an image directory or a record file");
  cmd->add_option("--steps", f.steps, "Generator steps (train.steps)");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds");
  cmd->add_option("--out", f.out, "Output root (ECGAN_LAB_OUT takes precedence)");
  cmd->add_option("--set", f.sets, "Extra key=value setting; repeatable");
  cmd->add_flag("--force", f.force, "Overwrite an existing run directory");
  cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress lines");
}

// Applies flag overrides on top of whatever the config file set.
ecgan_status apply_flags(ecgan_experiment* exp, const RunFlags& f, const std::string& preset) {
  auto set = [&](const char* key, const std::string& value) {
    return value.empty() ? ECGAN_OK : ecgan_experiment_set(exp, key, value.c_str());
  };
  ecgan_status s = ECGAN_OK;
  if ((s = set("preset", preset)) != ECGAN_OK) return s;
  if ((s = set("dataset", f.dataset)) != ECGAN_OK) return s;
  if ((s = set("train.steps", f.steps)) != ECGAN_OK) return s;
  if ((s = set("seeds", f.seeds)) != ECGAN_OK) return s;
  if ((s = set("out", f.out)) != ECGAN_OK) return s;
  if ((s = set("name", f.name)) != ECGAN_OK) return s;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return ECGAN_E_INVALID_ARGUMENT;
    }
    if ((s = ecgan_experiment_set(exp, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != ECGAN_OK) return s;
  }
  return ecgan_experiment_validate(exp);
}

struct ExperimentDeleter {
  void operator()(ecgan_experiment* p) const { ecgan_experiment_destroy(p); }
};
using ExperimentHandle = std::unique_ptr<ecgan_experiment, ExperimentDeleter>;

ecgan_status create(ExperimentHandle& h) {
  ecgan_experiment* raw = nullptr;
  const ecgan_status s = ecgan_experiment_create(&raw);
  h.reset(raw);
  return s;
}

int do_run(const RunFlags& f) {
  ExperimentHandle exp;
  ecgan_status s = create(exp);
  for (const auto& file : f.config_files) {
    if (s == ECGAN_OK) s = ecgan_experiment_load_file(exp.get(), file.c_str());
  }
  if (s == ECGAN_OK) s = apply_flags(exp.get(), f, f.preset);
  if (s != ECGAN_OK) return report_error(s);

  std::printf("run directory: %s\n", ecgan_experiment_run_dir(exp.get()));
  int up_to_date = 0;
  s = ecgan_experiment_run(exp.get(), f.force ? 1 : 0, f.quiet ? nullptr : print_line, nullptr, &up_to_date);
  if (s != ECGAN_OK) return report_error(s);
  std::printf("%s\n", up_to_date ? "already complete; nothing written" : "done");
  return kExitOk;
}

int do_verify(const std::string& kind, std::uint64_t seed) {
  std::vector<std::string> kinds;
  if (kind == "all") kinds = {"duality", "entropy-bound", "gradients", "equivalence"};
  else kinds = {kind};
  bool all_passed = true;
  for (const auto& k : kinds) {
    ecgan_report* rep = nullptr;
    const ecgan_status s = ecgan_verify(k.c_str(), seed, &rep);
    if (s != ECGAN_OK) return report_error(s);
    std::fputs(ecgan_report_text(rep), stdout);
    all_passed = all_passed && ecgan_report_passed(rep);
    ecgan_report_destroy(rep);
  }
  return all_passed ? kExitOk : kExitFailure;
}

int do_compare(const RunFlags& f, const std::string& presets, const std::string& out_dir, bool no_train) {
  std::vector<ExperimentHandle> handles;
  auto add = [&](const std::string* file, const std::string& preset) -> ecgan_status {
    ExperimentHandle& h = handles.emplace_back();
    ecgan_status s = create(h);
    if (s == ECGAN_OK && file) s = ecgan_experiment_load_file(h.get(), file->c_str());
    if (s == ECGAN_OK) s = apply_flags(h.get(), f, preset);
    return s;
  };
  for (const auto& file : f.config_files) {
    if (const ecgan_status s = add(&file, ""); s != ECGAN_OK) return report_error(s);
  }
  std::string rest = presets;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string p = rest.substr(0, comma);
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    if (p.empty()) continue;
    if (const ecgan_status s = add(nullptr, p); s != ECGAN_OK) return report_error(s);
  }
  if (handles.size() < 2) {
    std::fprintf(stderr, "error: compare needs at least two configs (files or --presets)\n");
    return kExitUsage;
  }

  std::string dir = out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("ECGAN_LAB_OUT");
    const std::string root = env && *env ? env : (f.out.empty() ? "runs" : f.out);
    dir = (std::filesystem::path(root) / "compare").string();
  }
  std::vector<ecgan_experiment*> raw;
  for (auto& h : handles) raw.push_back(h.get());
  ecgan_report* table = nullptr;
  const ecgan_status s = ecgan_compare(raw.data(), raw.size(), dir.c_str(), no_train ? 1 : 0, f.force ? 1 : 0,
                                       f.quiet ? nullptr : print_line, nullptr, &table);
  if (s != ECGAN_OK) return report_error(s);
  std::fputs(ecgan_report_text(table), stdout);
  std::printf("wrote %s/compare.txt and %s/compare.csv\n", dir.c_str(), dir.c_str());
  ecgan_report_destroy(table);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECGAN desk-scale lab: train energy-based conditional GAN variants and run oracle checks"};
  app.set_version_flag("--version", ecgan_version());
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Train one run per seed and write metrics, checkpoints and figures");
  add_run_flags(run, run_flags, false);
  run->add_option("--preset", run_flags.preset, "Variant preset (see `presets`)");
  run->add_option("--name", run_flags.name, "Run directory name");

  std::string kind;
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "Run an oracle suite; exit 0 iff it passes");
  verify->add_option("kind", kind, "duality, entropy-bound, gradients, equivalence or all")->required();
  verify->add_option("--seed", verify_seed, "Seed for the random instances");

  RunFlags cmp_flags;
  std::string presets, out_dir;
  bool no_train = false;
  auto* compare = app.add_subcommand("compare", "Tabulate metrics across configs, training what is missing");
  add_run_flags(compare, cmp_flags, true);
  compare->add_option("--presets", presets, "Comma-separated presets sharing the other flags");
  compare->add_option("--out-dir", out_dir, "Where compare.txt and compare.csv go");
  compare->add_flag("--no-train", no_train, "Only load finished runs; fail if any is missing");

  auto* list = app.add_subcommand("presets", "List preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*run) return do_run(run_flags);
  if (*verify) return do_verify(kind, verify_seed);
  if (*compare) return do_compare(cmp_flags, presets, out_dir, no_train);
  if (*list) {
    for (int i = 0; i < ecgan_preset_count(); ++i) std::printf("%s\n", ecgan_preset_name(i));
    return kExitOk;
  }
  return kExitUsage;
}
