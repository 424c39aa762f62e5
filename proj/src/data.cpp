#include "ecgan/data.hpp"

#include "ecgan/energy_core.hpp"
#include "ecgan/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

namespace ecgan {

namespace fs = std::filesystem;

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is, const fs::path& path, std::uint64_t offset) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (is.gcount() != 4) {
    throw InvalidInput(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

double to_unit(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

LabeledDataset from_raw(const RawImages& raw) {
  LabeledDataset ds;
  ds.shape = raw.shape;
  ds.num_classes = raw.num_classes;
  ds.x.resize(static_cast<Eigen::Index>(raw.pixels.size()), raw.shape.flat());
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    for (int j = 0; j < raw.shape.flat(); ++j) ds.x(static_cast<Eigen::Index>(i), j) = to_unit(raw.pixels[i][j]);
    ds.y.push_back(raw.labels[i]);
  }
  return ds;
}

LabeledDataset load_directory(const fs::path& root, const ImageDatasetSpec& spec) {
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw InvalidInput(root.string() + ": no class subdirectories");
  if (class_dirs.size() > 255) throw InvalidInput(root.string() + ": more than 255 classes");

  RawImages raw;
  raw.num_classes = static_cast<int>(class_dirs.size());
  bool have_shape = false;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[label]))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (spec.max_per_class > 0 && files.size() > static_cast<std::size_t>(spec.max_per_class))
      files.resize(static_cast<std::size_t>(spec.max_per_class));
    for (const auto& f : files) {
      const Image8 img = f.extension() == ".png" || f.extension() == ".PNG" ? read_png(f) : read_pnm(f);
      const ImageShape s{img.channels, img.height, img.width};
      if (!have_shape) {
        raw.shape = s;
        have_shape = true;
      } else if (!(s == raw.shape)) {
        throw InvalidInput(f.string() + ": image shape differs from the rest of the dataset");
      }
      std::vector<std::uint8_t> chw(img.data.size());
      for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x)
            chw[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] =
                img.data[(static_cast<std::size_t>(y) * s.width + x) * s.channels + c];
      raw.labels.push_back(static_cast<std::uint8_t>(label));
      raw.pixels.push_back(std::move(chw));
    }
  }
  if (raw.pixels.empty()) throw InvalidInput(root.string() + ": no images found");
  return from_raw(raw);
}

}  // namespace

void OracleMixture::validate() const {
  const std::size_t k = means.size();
  require(k >= 1, "mixture needs at least one component");
  require(covariances.size() == k && static_cast<std::size_t>(priors.size()) == k, "mixture fields misaligned");
  const Eigen::Index d = means.front().size();
  require(d >= 1, "mixture dimension must be positive");
  double total = 0.0;
  for (std::size_t y = 0; y < k; ++y) {
    require(means[y].size() == d, "mixture means must share one dimension");
    const Matrix& c = covariances[y];
    require(c.rows() == d && c.cols() == d, "covariance shape mismatch");
    require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()),
            "covariance must be symmetric");
    require(Eigen::LLT<Eigen::MatrixXd>(c).info() == Eigen::Success, "covariance must be positive definite");
    require(priors[static_cast<Eigen::Index>(y)] >= 0.0, "priors must be nonnegative");
    total += priors[static_cast<Eigen::Index>(y)];
  }
  require(std::abs(total - 1.0) <= 1e-12, "priors must sum to 1");
}

double OracleMixture::log_density(int y, const Vector& x) const {
  require(y >= 0 && y < num_classes(), "component index out of range");
  require(x.size() == dim(), "point dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(covariances[static_cast<std::size_t>(y)]);
  const Vector diff = x - means[static_cast<std::size_t>(y)];
  const Vector solved = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (solved.squaredNorm() + log_det + static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi));
}

Vector OracleMixture::marginal_mean() const {
  Vector mu = Vector::Zero(dim());
  for (int y = 0; y < num_classes(); ++y) mu += priors[y] * means[static_cast<std::size_t>(y)];
  return mu;
}

Matrix OracleMixture::marginal_covariance() const {
  const Vector mu = marginal_mean();
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim(), dim());
  for (int y = 0; y < num_classes(); ++y) {
    const Vector& m = means[static_cast<std::size_t>(y)];
    second += priors[y] * (Eigen::MatrixXd(covariances[static_cast<std::size_t>(y)]) + m * m.transpose());
  }
  return second - mu * mu.transpose();
}

OracleMixture OracleMixture::ring(int k, double radius, double variance) {
  require(k >= 1 && radius >= 0.0 && variance > 0.0, "invalid ring parameters");
  OracleMixture mix;
  for (int y = 0; y < k; ++y) {
    const double a = 2.0 * std::numbers::pi * y / k;
    Vector m(2);
    m << radius * std::cos(a), radius * std::sin(a);
    mix.means.push_back(m);
    mix.covariances.push_back(Matrix::Identity(2, 2) * variance);
  }
  mix.priors = Vector::Constant(k, 1.0 / k);
  return mix;
}

std::vector<double> LabeledDataset::label_marginal() const {
  std::vector<double> p(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : this->y) p[static_cast<std::size_t>(y)] += 1.0;
  for (double& v : p) v /= static_cast<double>(this->y.size());
  return p;
}

std::vector<int> LabeledDataset::class_counts() const {
  std::vector<int> c(static_cast<std::size_t>(num_classes), 0);
  for (int y : this->y) ++c[static_cast<std::size_t>(y)];
  return c;
}

LabeledDataset sample_mixture(const OracleMixture& mix, int n, std::uint64_t seed) {
  mix.validate();
  require(n >= 1, "sample count must be positive");
  Rng rng(seed);
  std::discrete_distribution<int> pick(mix.priors.data(), mix.priors.data() + mix.priors.size());
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Eigen::MatrixXd> chol;
  for (const auto& c : mix.covariances) chol.push_back(Eigen::LLT<Eigen::MatrixXd>(c).matrixL());

  LabeledDataset ds;
  ds.num_classes = mix.num_classes();
  ds.shape = {static_cast<int>(mix.dim()), 1, 1};
  ds.x.resize(n, mix.dim());
  ds.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = pick(rng);
    Vector z(mix.dim());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = nd(rng);
    ds.x.row(i) = (mix.means[static_cast<std::size_t>(y)] + chol[static_cast<std::size_t>(y)] * z).transpose();
    ds.y[static_cast<std::size_t>(i)] = y;
  }
  return ds;
}

Vector bayes_posterior(const OracleMixture& mix, const Vector& x) {
  Vector logp(mix.num_classes());
  for (int y = 0; y < mix.num_classes(); ++y) {
    const double prior = mix.priors[y];
    logp[y] = prior > 0.0 ? std::log(prior) + mix.log_density(y, x) : -std::numeric_limits<double>::infinity();
  }
  const double mx = logp.maxCoeff();
  Vector p = (logp.array() - mx).exp().matrix();
  return p / p.sum();
}

void write_record_file(const fs::path& path, const RawImages& images) {
  require(images.labels.size() == images.pixels.size(), "labels and pixels misaligned");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_u32(out, static_cast<std::uint32_t>(images.num_classes));
  put_u32(out, static_cast<std::uint32_t>(images.pixels.size()));
  put_u32(out, static_cast<std::uint32_t>(images.shape.height));
  put_u32(out, static_cast<std::uint32_t>(images.shape.width));
  put_u32(out, static_cast<std::uint32_t>(images.shape.channels));
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    require(images.pixels[i].size() == static_cast<std::size_t>(images.shape.flat()), "image size mismatch");
    out.put(static_cast<char>(images.labels[i]));
    out.write(reinterpret_cast<const char*>(images.pixels[i].data()),
              static_cast<std::streamsize>(images.pixels[i].size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

RawImages read_record_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  RawImages raw;
  const std::uint32_t k = get_u32(in, path, 0);
  const std::uint32_t count = get_u32(in, path, 4);
  const std::uint32_t h = get_u32(in, path, 8);
  const std::uint32_t w = get_u32(in, path, 12);
  const std::uint32_t c = get_u32(in, path, 16);
  if (k < 1 || k > 256 || h < 1 || w < 1 || c < 1 || h > 4096 || w > 4096 || c > 4) {
    throw InvalidInput(path.string() + ": implausible header values at byte offset 0");
  }
  raw.num_classes = static_cast<int>(k);
  raw.shape = {static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
  const std::size_t record = 1 + static_cast<std::size_t>(raw.shape.flat());
  std::uint64_t offset = 20;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<std::uint8_t> buf(record);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record));
    if (in.gcount() != static_cast<std::streamsize>(record)) {
      throw InvalidInput(path.string() + ": truncated record " + std::to_string(i) + " at byte offset " +
                         std::to_string(offset + static_cast<std::uint64_t>(in.gcount())));
    }
    if (buf[0] >= k) {
      throw InvalidInput(path.string() + ": label " + std::to_string(buf[0]) + " out of range at byte offset " +
                         std::to_string(offset));
    }
    raw.labels.push_back(buf[0]);
    raw.pixels.emplace_back(buf.begin() + 1, buf.end());
    offset += record;
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput(path.string() + ": trailing bytes after last record at byte offset " + std::to_string(offset));
  }
  return raw;
}

LabeledDataset load_image_dataset(const fs::path& path, const ImageDatasetSpec& spec) {
  if (!fs::exists(path)) throw InvalidInput(path.string() + ": no such file or directory");
  LabeledDataset ds = fs::is_directory(path) ? load_directory(path, spec) : from_raw(read_record_file(path));
  if (ds.size() == 0) throw InvalidInput(path.string() + ": dataset is empty");
  if (spec.shape && !(*spec.shape == ds.shape)) throw InvalidInput(path.string() + ": unexpected image shape");
  if (spec.max_per_class > 0 && !fs::is_directory(path)) {
    std::vector<int> seen(static_cast<std::size_t>(ds.num_classes), 0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
      if (seen[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])]++ < spec.max_per_class) keep.push_back(i);
    LabeledDataset sub;
    sub.num_classes = ds.num_classes;
    sub.shape = ds.shape;
    sub.x.resize(static_cast<Eigen::Index>(keep.size()), ds.x.cols());
    for (std::size_t j = 0; j < keep.size(); ++j) {
      sub.x.row(static_cast<Eigen::Index>(j)) = ds.x.row(keep[j]);
      sub.y.push_back(ds.y[static_cast<std::size_t>(keep[j])]);
    }
    return sub;
  }
  return ds;
}

std::uint8_t to_byte(double normalized) {
  const double v = std::round((normalized + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace ecgan
