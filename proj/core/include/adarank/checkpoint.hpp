#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adarank/matrix.hpp"

namespace adarank {

// Insertion-ordered collection of named matrices. Layer order is part of the
// contract: serialization, merging and gradient bookkeeping all walk it.
class WeightMap {
 public:
  void add(std::string name, Matrix m);
  bool contains(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const Matrix& matrix(std::size_t i) const { return mats_[i]; }
  Matrix& matrix(std::size_t i) { return mats_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> mats_;
};

// Unit of persistence: ordered backbone layers, per-task heads, and a JSON
// manifest recording seeds, config digests and measured accuracies.
struct Checkpoint {
  WeightMap backbone;
  std::map<int, Matrix> heads;
  nlohmann::json manifest = nlohmann::json::object();
};

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'A', 'D', 'R', 'K'};

// Container layout: magic "ADRK", little-endian u32 format version, u32 layer
// count, then per layer {u32 name length, UTF-8 name, u32 rows, u32 cols,
// rows*cols little-endian float64, row-major}, then the manifest as UTF-8
// JSON running to end of file. Heads are stored after the backbone under
// names "heads.<task>". Readers reject unknown versions and bad magic.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64-bit content digest, 16 hex digits. Identity record for
// reproducibility manifests, not a cryptographic hash.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);
std::string digest_file(const std::filesystem::path& path);
std::string digest_string(std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace adarank
