#include "ecgan/experiment.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ecgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecgan_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

ConfigMap quick(const std::string& preset, const fs::path& out) {
  return {{"preset", preset},        {"out", out.string()},          {"train.steps", "20"},
          {"train.batch_size", "16"}, {"net.g_hidden", "16"},         {"net.d_hidden", "16"},
          {"net.feature_dim", "8"},   {"data.samples", "800"},        {"eval.samples_per_class", "10"},
          {"train.eval_every", "10"}, {"net.contrastive_dim", "4"}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config text parsing") {
  const ConfigMap m = parse_config_text("# header\npreset = ECGAN-UC   # trailing\n\n  train.lr_d=0.0004\n");
  CHECK(m.size() == 2);
  CHECK(m.at("preset") == "ECGAN-UC");
  CHECK(m.at("train.lr_d") == "0.0004");
  CHECK(parse_config_text(format_config(m)) == m);
  try {
    parse_config_text("a = 1\nb = 2\nthis line is wrong\n", "cfg.txt");
    FAIL("accepted a line without '='");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("cfg.txt:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(" = 3"), InvalidInput);
  CHECK_THROWS_AS(load_config_file("/nonexistent/ecgan.cfg"), IoError);
}

TEST_CASE("experiment config defaults and validation") {
  const ExperimentConfig d = ExperimentConfig::from_map({});
  CHECK(d.preset.name == "ECGAN-0");
  CHECK(d.dataset == "ring8");
  CHECK(d.name == "ECGAN-0_ring8");
  CHECK(d.train.n_iter == 20000);
  CHECK(d.train.batch_size == 64);
  CHECK(d.train.lr_d == 4e-4);
  CHECK(d.train.lr_g == 1e-4);
  CHECK(d.train.beta1 == 0.5);
  CHECK(d.train.beta2 == 0.999);
  CHECK(d.train.ema_decay == 0.9999);
  CHECK(d.train.eval_every == 1000);
  CHECK(d.seeds == std::vector<std::uint64_t>{0});

  const ExperimentConfig c = ExperimentConfig::from_map(
      {{"preset", "ECGAN-UCE"}, {"seeds", "1,2,3"}, {"train.steps", "200"}, {"loss.lambda_clf", "0.1"},
       {"loss.combined_hinge", "false"}, {"net.g_hidden", "32,32"}, {"net.activation", "tanh"}});
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.train.eval_every == 200);
  CHECK(c.preset.weights.lambda_clf == 0.1);
  CHECK_FALSE(c.preset.weights.combined_hinge);
  CHECK(c.net.g_hidden == std::vector<int>{32, 32});
  CHECK(c.net.activation == Activation::tanh);

  const ExperimentConfig again = ExperimentConfig::from_map(c.to_map());
  CHECK(again.to_map() == c.to_map());

  for (const ConfigMap& bad : std::vector<ConfigMap>{{{"preset", "ECGAN-Q"}},
                                                     {{"train.steps", "ten"}},
                                                     {{"mystery", "1"}},
                                                     {{"seeds", ""}},
                                                     {{"dataset", "/nonexistent/images"}},
                                                     {{"net.backbone", "small_conv"}},
                                                     {{"loss.alpha", "1"}},
                                                     {{"name", "a/b"}}}) {
    CAPTURE(bad.begin()->first);
    CHECK_THROWS_AS(ExperimentConfig::from_map(bad), InvalidInput);
  }
}

TEST_CASE("output root honours the environment") {
  ::unsetenv("ECGAN_LAB_OUT");
  CHECK(resolve_out_root("runs") == fs::path("runs"));
  ::setenv("ECGAN_LAB_OUT", "/tmp/elsewhere", 1);
  CHECK(resolve_out_root("runs") == fs::path("/tmp/elsewhere"));
  ::unsetenv("ECGAN_LAB_OUT");
}

TEST_CASE("run writes artifacts and is idempotent") {
  const fs::path root = scratch("run");
  ConfigMap m = quick("ECGAN-UC", root);
  m["seeds"] = "1,2";
  const ExperimentConfig cfg = ExperimentConfig::from_map(m);
  RunSummary summary;
  CHECK(run_experiment(cfg, {}, &summary) == RunOutcome::trained);

  const fs::path dir = cfg.run_dir();
  for (const char* f : {"config.txt", "metrics.jsonl", "summary.json", "samples.png"}) CHECK(fs::exists(dir / f));
  for (const char* s : {"seed_1", "seed_2"}) {
    CHECK(fs::exists(dir / s / "metrics.jsonl"));
    CHECK(fs::exists(dir / s / "samples.png"));
    CHECK(fs::exists(dir / s / "checkpoints" / "best.ckpt"));
    CHECK(fs::exists(dir / s / "checkpoints" / "final.ckpt"));
  }
  std::istringstream lines(slurp(dir / "metrics.jsonl"));
  std::string line;
  int records = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("preset"));
    CHECK(j.contains("seed"));
    CHECK(j.contains("step"));
    ++records;
  }
  CHECK(records == 4);

  CHECK(summary.per_seed.size() == 2);
  CHECK(summary.aggregate.count("frechet") == 1);
  const RunSummary loaded = RunSummary::from_json(slurp(dir / "summary.json"));
  CHECK(loaded.to_json() == summary.to_json());
  const double a = summary.per_seed[0].best.frechet, b = summary.per_seed[1].best.frechet;
  CHECK(summary.aggregate.at("frechet").mean == doctest::Approx((a + b) / 2));
  CHECK(summary.aggregate.at("frechet").sd == doctest::Approx(std::abs(a - b) / std::sqrt(2.0)));

  const auto stamp = fs::last_write_time(dir / "summary.json");
  CHECK(run_experiment(cfg, {}) == RunOutcome::up_to_date);
  CHECK(fs::last_write_time(dir / "summary.json") == stamp);

  m["train.lr_d"] = "0.0002";
  const ExperimentConfig changed = ExperimentConfig::from_map(m);
  CHECK_THROWS_AS(run_experiment(changed, {}), IoError);
  RunOptions force;
  force.force = true;
  CHECK(run_experiment(changed, force) == RunOutcome::trained);
  CHECK(load_config_file(dir / "config.txt") == changed.to_map());
  fs::remove_all(root);
}

TEST_CASE("comparison tables") {
  const fs::path root = scratch("compare");
  const ExperimentConfig uc = ExperimentConfig::from_map(quick("ECGAN-UC", root));
  const ExperimentConfig zero = ExperimentConfig::from_map(quick("ECGAN-0", root));
  CompareOptions opts;
  opts.out_dir = root / "cmp";
  opts.no_train = true;
  try {
    compare_experiments({uc, zero}, opts);
    FAIL("compare accepted missing runs");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find((uc.run_dir() / "summary.json").string()) != std::string::npos);
    CHECK(std::string(e.what()).find((zero.run_dir() / "summary.json").string()) != std::string::npos);
  }

  opts.no_train = false;
  const std::string table = compare_experiments({uc, zero}, opts);
  CHECK(table.find("order") == 0);
  CHECK(table.find("ECGAN-0") < table.find("ECGAN-UC"));
  const std::string csv = slurp(opts.out_dir / "compare.csv");
  std::istringstream rows(csv);
  std::string header, first, second, extra;
  std::getline(rows, header);
  std::getline(rows, first);
  std::getline(rows, second);
  CHECK_FALSE(std::getline(rows, extra));
  CHECK(header.starts_with("order,preset,run,seeds,frechet_mean,frechet_sd"));
  CHECK(first.starts_with("1,ECGAN-0,"));
  CHECK(second.starts_with("5,ECGAN-UC,"));
  CHECK(fs::exists(opts.out_dir / "compare.txt"));

  opts.no_train = true;
  CHECK(compare_experiments({uc, zero}, opts) == table);
  CHECK_THROWS_AS(compare_experiments({uc}, opts), InvalidInput);
  fs::remove_all(root);
}

TEST_CASE("ablation ordering") {
  CHECK(ablation_order("ECGAN-0") < ablation_order("ECGAN-U"));
  CHECK(ablation_order("ECGAN-U") < ablation_order("ECGAN-C"));
  CHECK(ablation_order("ECGAN-C") < ablation_order("ECGAN-UC"));
  CHECK(ablation_order("ECGAN-UC") < ablation_order("ECGAN-UCE"));
  CHECK(ablation_order("ECGAN-UCE") < ablation_order("ProjGAN"));
  CHECK(ablation_order("something else") > ablation_order("ContraGAN"));
}
