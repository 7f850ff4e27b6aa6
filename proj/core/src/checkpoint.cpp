#include "adarank/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "adarank/error.hpp"

namespace adarank {
namespace {

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t x) {
  out.push_back(static_cast<std::uint8_t>(x & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 24) & 0xff));
}

void push_f64(std::vector<std::uint8_t>& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    require(4);
    std::uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return x;
  }

  double f64() {
    require(8);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string str(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::string rest() { return str(bytes_.size() - pos_); }

  void require(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated container");
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void serialize_layer(std::vector<std::uint8_t>& out, const std::string& name, const Matrix& m) {
  push_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  push_u32(out, static_cast<std::uint32_t>(m.rows()));
  push_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) push_f64(out, m.data()[i]);
}

}  // namespace

void WeightMap::add(std::string name, Matrix m) {
  if (contains(name)) throw ConfigError("weight map: duplicate layer name '" + name + "'");
  names_.push_back(std::move(name));
  mats_.push_back(std::move(m));
}

bool WeightMap::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Matrix& WeightMap::at(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return mats_[i];
  }
  throw ConfigError("weight map: missing layer '" + std::string(name) + "'");
}

Matrix& WeightMap::at(std::string_view name) {
  return const_cast<Matrix&>(static_cast<const WeightMap*>(this)->at(name));
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  push_u32(out, kContainerVersion);
  push_u32(out, static_cast<std::uint32_t>(ckpt.backbone.size() + ckpt.heads.size()));
  for (std::size_t i = 0; i < ckpt.backbone.size(); ++i) {
    serialize_layer(out, ckpt.backbone.name(i), ckpt.backbone.matrix(i));
  }
  for (const auto& [task, head] : ckpt.heads) {
    serialize_layer(out, "heads." + std::to_string(task), head);
  }
  const std::string manifest = ckpt.manifest.dump(2);
  out.insert(out.end(), manifest.begin(), manifest.end());
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic '" + magic + "'");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t layers = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& x : data) x = r.f64();
    Matrix m(rows, cols, std::move(data));
    if (name.rfind("heads.", 0) == 0) {
      int task = 0;
      try {
        task = std::stoi(name.substr(6));
      } catch (const std::exception&) {
        throw IoError("checkpoint: malformed head name '" + name + "'");
      }
      if (ckpt.heads.count(task)) throw IoError("checkpoint: duplicate head " + name);
      ckpt.heads.emplace(task, std::move(m));
    } else {
      ckpt.backbone.add(std::move(name), std::move(m));
    }
  }
  const std::string manifest = r.rest();
  if (manifest.empty()) {
    ckpt.manifest = nlohmann::json::object();
  } else {
    ckpt.manifest = nlohmann::json::parse(manifest, nullptr, false);
    if (ckpt.manifest.is_discarded()) throw IoError("checkpoint: malformed manifest JSON");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string digest_file(const std::filesystem::path& path) {
  return fnv1a_hex(read_file_bytes(path));
}

std::string digest_string(std::string_view text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  return fnv1a_hex(bytes);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace adarank
