#include "ecgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ecgan {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'C', 'G', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw InvalidInput(path_.string() + ": truncated checkpoint at byte offset " +
                         std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())));
    }
    offset_ += n;
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, 2);
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorMap load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(in, path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw InvalidInput(path.string() + ": bad magic at byte offset 0");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw InvalidInput(path.string() + ": unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const auto count = r.get<std::uint32_t>();
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > (1u << 16)) {
      throw InvalidInput(path.string() + ": implausible name length at byte offset " + std::to_string(r.offset() - 4));
    }
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    const auto rank_offset = r.offset();
    if (r.get<std::uint32_t>() != 2) {
      throw InvalidInput(path.string() + ": unsupported rank at byte offset " + std::to_string(rank_offset));
    }
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1ull << 32) || cols > (1ull << 32) || rows * cols > (1ull << 32)) {
      throw InvalidInput(path.string() + ": implausible tensor shape at byte offset " + std::to_string(rank_offset));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.read(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    if (!out.emplace(std::move(name), std::move(m)).second) {
      throw InvalidInput(path.string() + ": duplicate tensor name near byte offset " + std::to_string(rank_offset));
    }
  }
  return out;
}

}  // namespace ecgan
