#include "ecgan/experiment.hpp"

#include "ecgan/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ecgan {

namespace fs = std::filesystem;

namespace {

const char* const kMetricNames[] = {"frechet", "intra_frechet", "condition_accuracy", "classifier_entropy_score"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InvalidInput("config key " + key + ": cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw InvalidInput("config key " + key + ": expected a boolean, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

bool is_loss_flag(const std::string& key) {
  return key == "combined_hinge" || key == "linear_adversarial" || key == "contrastive_self_positive";
}

nlohmann::ordered_json record_json(const MetricsRecord& r) { return nlohmann::ordered_json::parse(r.to_json_line()); }

void emit(const std::function<void(const std::string&)>& log, const std::string& line) {
  if (log) log(line);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw InvalidInput(origin + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

ConfigMap load_config_file(const fs::path& path) { return parse_config_text(read_text(path), path.string()); }

std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& config) {
  ExperimentConfig c;
  std::string preset_name = "ECGAN-0";
  std::string backbone = "auto";
  bool eval_every_set = false;

  for (const auto& [key, value] : config) {
    if (key == "preset") preset_name = value;
    else if (key == "name") c.name = value;
    else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(key, value);
    else if (key == "out") c.out_root = value;
    else if (key == "dataset" || key == "data.name") c.dataset = value;
    else if (key == "data.samples") c.data_samples = parse_number<int>(key, value);
    else if (key == "data.seed") c.data_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "data.max_per_class") c.max_per_class = parse_number<int>(key, value);
    else if (key.starts_with("loss.")) {
      const std::string k = key.substr(5);
      c.loss_overrides[k] = is_loss_flag(k) ? (parse_bool(key, value) ? 1.0 : 0.0) : parse_number<double>(key, value);
    }
    else if (key == "net.backbone") backbone = value;
    else if (key == "net.feature_dim") c.net.feature_dim = parse_number<int>(key, value);
    else if (key == "net.noise_dim") c.net.noise_dim = parse_number<int>(key, value);
    else if (key == "net.class_embed_dim") c.net.class_embed_dim = parse_number<int>(key, value);
    else if (key == "net.contrastive_dim") c.net.contrastive_dim = parse_number<int>(key, value);
    else if (key == "net.g_hidden") c.net.g_hidden = parse_list<int>(key, value);
    else if (key == "net.d_hidden") c.net.d_hidden = parse_list<int>(key, value);
    else if (key == "net.activation") {
      if (value == "leaky_relu") c.net.activation = Activation::leaky_relu;
      else if (value == "tanh") c.net.activation = Activation::tanh;
      else throw InvalidInput("net.activation must be leaky_relu or tanh, got '" + value + "'");
    }
    else if (key == "net.leaky_slope") c.net.leaky_slope = parse_number<double>(key, value);
    else if (key == "net.spectral_norm") c.net.spectral_norm = parse_bool(key, value);
    else if (key == "train.steps" || key == "train.n_iter") c.train.n_iter = parse_number<std::int64_t>(key, value);
    else if (key == "train.n_dis") c.train.n_dis = parse_number<int>(key, value);
    else if (key == "train.batch_size") c.train.batch_size = parse_number<int>(key, value);
    else if (key == "train.lr_g") c.train.lr_g = parse_number<double>(key, value);
    else if (key == "train.lr_d") c.train.lr_d = parse_number<double>(key, value);
    else if (key == "train.beta1") c.train.beta1 = parse_number<double>(key, value);
    else if (key == "train.beta2") c.train.beta2 = parse_number<double>(key, value);
    else if (key == "train.ema_decay") c.train.ema_decay = parse_number<double>(key, value);
    else if (key == "train.ema_start") c.train.ema_start_step = parse_number<std::int64_t>(key, value);
    else if (key == "train.eval_every") {
      c.train.eval_every = parse_number<std::int64_t>(key, value);
      eval_every_set = true;
    }
    else if (key == "eval.samples_per_class") c.eval_samples_per_class = parse_number<int>(key, value);
    else throw InvalidInput("unknown config key '" + key + "'");
  }

  c.preset = make_preset(preset_name, c.loss_overrides);
  if (!eval_every_set) c.train.eval_every = std::min<std::int64_t>(1000, std::max<std::int64_t>(c.train.n_iter, 1));
  if (c.name.empty()) {
    const std::string data_tag = c.dataset == "ring8" ? "ring8" : fs::path(c.dataset).filename().string();
    c.name = c.preset.name + "_" + data_tag;
  }

  if (backbone == "mlp") c.net.backbone = Backbone::mlp;
  else if (backbone == "small_conv") c.net.backbone = Backbone::small_conv;
  else if (backbone != "auto") throw InvalidInput("net.backbone must be auto, mlp or small_conv, got '" + backbone + "'");
  if (c.dataset == "ring8") {
    c.net.data_shape = {2, 1, 1};
    c.net.num_classes = 8;
    require(c.net.backbone == Backbone::mlp, "ring8 needs the mlp backbone");
    require(c.data_samples >= 2, "data.samples must be at least 2");
  } else {
    if (backbone == "auto") c.net.backbone = Backbone::small_conv;
    if (!fs::exists(c.dataset)) throw InvalidInput("dataset '" + c.dataset + "' is neither ring8 nor an existing path");
  }

  require(!c.seeds.empty(), "seeds must not be empty");
  require(c.max_per_class >= 0, "data.max_per_class must be non-negative");
  require(c.eval_samples_per_class >= 3, "eval.samples_per_class must be at least 3");
  require(!c.name.empty() && c.name.find('/') == std::string::npos, "run name must be a plain directory name");
  c.train.validate();
  // Image shapes are only known once the data is loaded; TrainState validates those.
  if (c.dataset == "ring8") c.net.validate();
  return c;
}

ConfigMap ExperimentConfig::to_map() const {
  ConfigMap m;
  m["name"] = name;
  m["preset"] = preset.name;
  m["seeds"] = join(seeds);
  m["dataset"] = dataset;
  m["data.samples"] = std::to_string(data_samples);
  m["data.seed"] = std::to_string(data_seed);
  m["data.max_per_class"] = std::to_string(max_per_class);
  for (const auto& [k, v] : loss_overrides) m["loss." + k] = fmt(v);
  m["net.backbone"] = net.backbone == Backbone::mlp ? "mlp" : "small_conv";
  m["net.feature_dim"] = std::to_string(net.feature_dim);
  m["net.noise_dim"] = std::to_string(net.noise_dim);
  m["net.class_embed_dim"] = std::to_string(net.class_embed_dim);
  m["net.contrastive_dim"] = std::to_string(net.contrastive_dim);
  m["net.g_hidden"] = join(net.g_hidden);
  m["net.d_hidden"] = join(net.d_hidden);
  m["net.activation"] = net.activation == Activation::leaky_relu ? "leaky_relu" : "tanh";
  m["net.leaky_slope"] = fmt(net.leaky_slope);
  m["net.spectral_norm"] = net.spectral_norm ? "true" : "false";
  m["train.steps"] = std::to_string(train.n_iter);
  m["train.n_dis"] = std::to_string(train.n_dis);
  m["train.batch_size"] = std::to_string(train.batch_size);
  m["train.lr_g"] = fmt(train.lr_g);
  m["train.lr_d"] = fmt(train.lr_d);
  m["train.beta1"] = fmt(train.beta1);
  m["train.beta2"] = fmt(train.beta2);
  m["train.ema_decay"] = fmt(train.ema_decay);
  m["train.ema_start"] = std::to_string(train.ema_start_step);
  m["train.eval_every"] = std::to_string(train.eval_every);
  m["eval.samples_per_class"] = std::to_string(eval_samples_per_class);
  return m;
}

fs::path resolve_out_root(const fs::path& fallback) {
  if (const char* env = std::getenv("ECGAN_LAB_OUT"); env != nullptr && *env != '\0') return env;
  return fallback;
}

std::string RunSummary::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["dataset"] = dataset;
  j["seeds"] = nlohmann::json::array();
  for (const auto& s : per_seed) j["seeds"].push_back(s.seed);
  j["per_seed"] = nlohmann::json::array();
  for (const auto& s : per_seed) {
    nlohmann::ordered_json row;
    row["seed"] = s.seed;
    row["best"] = record_json(s.best);
    row["final"] = record_json(s.final_record);
    j["per_seed"].push_back(row);
  }
  nlohmann::ordered_json agg;
  for (const char* name : kMetricNames) {
    if (auto it = aggregate.find(name); it != aggregate.end()) {
      agg[name] = {{"mean", it->second.mean}, {"sd", it->second.sd}};
    }
  }
  j["aggregate"] = agg;
  return j.dump(2) + "\n";
}

RunSummary RunSummary::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RunSummary s;
  s.preset = j.at("preset").get<std::string>();
  s.dataset = j.at("dataset").get<std::string>();
  for (const auto& row : j.at("per_seed")) {
    SeedSummary ss;
    ss.seed = row.at("seed").get<std::uint64_t>();
    ss.best = MetricsRecord::from_json_line(row.at("best").dump());
    ss.final_record = MetricsRecord::from_json_line(row.at("final").dump());
    s.per_seed.push_back(ss);
  }
  for (const auto& [name, v] : j.at("aggregate").items()) {
    s.aggregate[name] = {v.at("mean").get<double>(), v.at("sd").get<double>()};
  }
  return s;
}

namespace {

MetricSpread spread(const std::vector<double>& xs) {
  MetricSpread s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

double metric_of(const MetricsRecord& r, const std::string& name) {
  if (name == "frechet") return r.frechet;
  if (name == "intra_frechet") return r.intra_frechet;
  if (name == "condition_accuracy") return r.condition_accuracy;
  return r.classifier_entropy_score;
}

}  // namespace

LabeledDataset load_dataset(const ExperimentConfig& c) {
  if (c.dataset == "ring8") return sample_mixture(OracleMixture::ring(), c.data_samples, c.data_seed);
  ImageDatasetSpec spec;
  spec.max_per_class = c.max_per_class;
  return load_image_dataset(c.dataset, spec);
}

EvalContext make_eval_context(const ExperimentConfig& c, const LabeledDataset& data) {
  if (c.dataset == "ring8") return EvalContext::for_mixture(OracleMixture::ring(), c.eval_samples_per_class);
  return EvalContext::for_images(data, c.eval_samples_per_class, derive_seed(c.data_seed, {0xfea7}));
}

bool load_summary(const ExperimentConfig& config, RunSummary& out) {
  const fs::path p = config.run_dir() / "summary.json";
  if (!fs::exists(p)) return false;
  out = RunSummary::from_json(read_text(p));
  return true;
}

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options, RunSummary* summary_out) {
  const fs::path dir = config.run_dir();
  const ConfigMap wanted = config.to_map();
  if (fs::exists(dir)) {
    const bool same = fs::exists(dir / "config.txt") && load_config_file(dir / "config.txt") == wanted;
    if (!options.force) {
      if (same && fs::exists(dir / "summary.json")) {
        emit(options.log, "run " + dir.string() + " is up to date; pass --force to retrain");
        if (summary_out) load_summary(config, *summary_out);
        return RunOutcome::up_to_date;
      }
      throw IoError("run directory " + dir.string() + " already exists " +
                    (same ? "with an unfinished run" : "with a different config") + "; pass --force to overwrite it");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_config(wanted));

  LabeledDataset data = load_dataset(config);
  NetConfig net = config.net;
  net.data_shape = data.shape;
  net.num_classes = data.num_classes;
  const EvalContext eval = make_eval_context(config, data);
  emit(options.log, "dataset " + config.dataset + ": " + std::to_string(data.size()) + " samples, " +
                        std::to_string(data.num_classes) + " classes");

  RunSummary summary;
  summary.preset = config.preset.name;
  summary.dataset = config.dataset;
  std::ofstream all_metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!all_metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());

  for (std::size_t si = 0; si < config.seeds.size(); ++si) {
    const std::uint64_t seed = config.seeds[si];
    const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
    net.init_seed = derive_seed(seed, {0x1a17});
    TrainConfig tc = config.train;
    tc.seed = seed;
    TrainState state(net, config.preset, tc, data.label_marginal());

    TrainCallbacks cb;
    cb.on_metrics = [&](const MetricsRecord& r) {
      all_metrics << r.to_json_line() << '\n' << std::flush;
      std::ostringstream os;
      os << "seed " << seed << " step " << r.step << ": frechet " << r.frechet << ", intra " << r.intra_frechet
         << ", accuracy " << r.condition_accuracy << ", entropy score " << r.classifier_entropy_score;
      emit(options.log, os.str());
    };
    const TrainResult result = train(state, data, eval, seed_dir, cb);
    write_sample_figure(seed_dir / "samples.png", state.generator_ema, data, derive_seed(seed, {0x5a}));
    if (si == 0) fs::copy_file(seed_dir / "samples.png", dir / "samples.png", fs::copy_options::overwrite_existing);

    SeedSummary ss;
    ss.seed = seed;
    if (result.best) ss.best = result.history[*result.best];
    if (!result.history.empty()) ss.final_record = result.history.back();
    summary.per_seed.push_back(ss);
  }

  for (const char* name : kMetricNames) {
    std::vector<double> xs;
    for (const auto& s : summary.per_seed) xs.push_back(metric_of(s.best, name));
    summary.aggregate[name] = spread(xs);
  }
  write_text(dir / "summary.json", summary.to_json());
  if (summary_out) *summary_out = summary;
  return RunOutcome::trained;
}

int ablation_order(const std::string& preset) {
  static const std::vector<std::string> order = {"ECGAN-0", "ECGAN-U", "ECGAN-C", "ECGAN-E", "ECGAN-UC",
                                                 "ECGAN-UCE", "ProjGAN", "ACGAN", "ContraGAN"};
  const auto it = std::find(order.begin(), order.end(), preset);
  return it == order.end() ? static_cast<int>(order.size()) + 1 : static_cast<int>(it - order.begin()) + 1;
}

std::string compare_experiments(const std::vector<ExperimentConfig>& configs, const CompareOptions& options) {
  require(configs.size() >= 2, "compare needs at least two configs");

  if (options.no_train) {
    std::string missing;
    for (const auto& c : configs) {
      if (!fs::exists(c.run_dir() / "summary.json")) missing += "\n  " + (c.run_dir() / "summary.json").string();
    }
    if (!missing.empty()) throw IoError("missing run artifacts (rerun without --no-train to produce them):" + missing);
  }

  struct Row {
    int order;
    std::string name;
    RunSummary summary;
  };
  std::vector<Row> rows;
  for (const auto& c : configs) {
    RunSummary s;
    if (options.no_train) {
      load_summary(c, s);
    } else {
      RunOptions ro;
      ro.force = options.force;
      ro.log = options.log;
      run_experiment(c, ro, &s);
    }
    rows.push_back({ablation_order(c.preset.name), c.name, s});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.order < b.order; });

  auto cell = [](const RunSummary& s, const char* metric) {
    const auto it = s.aggregate.find(metric);
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    if (it == s.aggregate.end()) os << "n/a";
    else os << it->second.mean << " ± " << it->second.sd;
    return os.str();
  };

  std::ostringstream txt;
  txt << std::left << std::setw(6) << "order" << std::setw(12) << "preset" << std::setw(28) << "run" << std::setw(7)
      << "seeds" << std::setw(22) << "frechet" << std::setw(22) << "intra_frechet" << std::setw(22)
      << "condition_accuracy" << "classifier_entropy_score\n";
  std::ostringstream csv;
  csv << "order,preset,run,seeds";
  for (const char* m : kMetricNames) csv << "," << m << "_mean," << m << "_sd";
  csv << "\n";
  csv << std::setprecision(10);
  for (const auto& r : rows) {
    // The byte count of "±" exceeds its display width by one, so pad the metric columns one wider.
    txt << std::left << std::setw(6) << r.order << std::setw(12) << r.summary.preset << std::setw(28) << r.name
        << std::setw(7) << r.summary.per_seed.size() << std::setw(23) << cell(r.summary, "frechet") << std::setw(23)
        << cell(r.summary, "intra_frechet") << std::setw(23) << cell(r.summary, "condition_accuracy")
        << cell(r.summary, "classifier_entropy_score") << "\n";
    csv << r.order << "," << r.summary.preset << "," << r.name << "," << r.summary.per_seed.size();
    for (const char* m : kMetricNames) {
      const auto it = r.summary.aggregate.find(m);
      if (it == r.summary.aggregate.end()) csv << ",,";
      else csv << "," << it->second.mean << "," << it->second.sd;
    }
    csv << "\n";
  }

  fs::create_directories(options.out_dir);
  write_text(options.out_dir / "compare.txt", txt.str());
  write_text(options.out_dir / "compare.csv", csv.str());
  return txt.str();
}

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

Rgb class_color(int k, int num_classes) {
  static const Rgb palette[] = {{228, 26, 28},  {55, 126, 184}, {77, 175, 74},  {152, 78, 163},
                                {255, 127, 0},  {166, 86, 40},  {247, 129, 191}, {0, 170, 170}};
  if (num_classes <= 8) return palette[k % 8];
  // Evenly spaced hues beyond the fixed palette.
  const double h = 6.0 * static_cast<double>(k) / static_cast<double>(num_classes);
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  return {static_cast<std::uint8_t>(200 * r), static_cast<std::uint8_t>(200 * g), static_cast<std::uint8_t>(200 * b)};
}

}  // namespace

void write_sample_figure(const fs::path& path, const Generator& generator, const LabeledDataset& real,
                         std::uint64_t seed) {
  const int k = real.num_classes;
  Rng rng(seed);
  if (!real.is_image()) {
    require(real.x.cols() == 2, "scatter figures need 2-D data");
    constexpr int kSize = 512;
    constexpr int kPerClass = 200;
    std::vector<int> labels(static_cast<std::size_t>(k * kPerClass));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i) % k;
    const Matrix fake = generator.sample(randn(static_cast<Eigen::Index>(labels.size()), generator.config().noise_dim, rng), labels);

    const RowVector lo = real.x.colwise().minCoeff();
    const RowVector hi = real.x.colwise().maxCoeff();
    const double span = std::max((hi - lo).maxCoeff(), 1e-9) * 1.2;
    const RowVector center = (lo + hi) / 2.0;
    Image8 img{kSize, kSize, 3, std::vector<std::uint8_t>(kSize * kSize * 3, 255)};
    auto plot = [&](double x, double y, Rgb c, int radius) {
      const int px = static_cast<int>((x - center[0]) / span * kSize + kSize / 2.0);
      const int py = static_cast<int>(kSize / 2.0 - (y - center[1]) / span * kSize);
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int u = px + dx, v = py + dy;
          if (u < 0 || v < 0 || u >= kSize || v >= kSize) continue;
          auto* p = &img.data[static_cast<std::size_t>((v * kSize + u) * 3)];
          p[0] = c.r;
          p[1] = c.g;
          p[2] = c.b;
        }
      }
    };
    const Eigen::Index shown = std::min<Eigen::Index>(real.size(), 4000);
    for (Eigen::Index i = 0; i < shown; ++i) plot(real.x(i, 0), real.x(i, 1), {200, 200, 200}, 1);
    for (Eigen::Index i = 0; i < fake.rows(); ++i) {
      plot(fake(i, 0), fake(i, 1), class_color(labels[static_cast<std::size_t>(i)], k), 1);
    }
    write_png(path, img);
    return;
  }

  const ImageShape s = real.shape;
  constexpr int kCols = 8;
  constexpr int kPad = 2;
  std::vector<int> labels;
  for (int y = 0; y < k; ++y) labels.insert(labels.end(), kCols, y);
  const Matrix fake = generator.sample(randn(static_cast<Eigen::Index>(labels.size()), generator.config().noise_dim, rng), labels);
  const int channels = s.channels == 3 ? 3 : 1;
  Image8 img;
  img.width = kCols * (s.width + kPad) + kPad;
  img.height = k * (s.height + kPad) + kPad;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(img.width * img.height * channels), 255);
  for (int y = 0; y < k; ++y) {
    for (int col = 0; col < kCols; ++col) {
      const auto row = fake.row(y * kCols + col);
      const int ox = kPad + col * (s.width + kPad);
      const int oy = kPad + y * (s.height + kPad);
      for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < s.height; ++i) {
          for (int j = 0; j < s.width; ++j) {
            const double v = row[(c * s.height + i) * s.width + j];
            img.data[static_cast<std::size_t>(((oy + i) * img.width + ox + j) * channels + c)] = to_byte(v);
          }
        }
      }
    }
  }
  write_png(path, img);
}

}  // namespace ecgan
