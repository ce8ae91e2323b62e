#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace annoclust {

// Row index into a FeatureStore. Object ids are the external identity; rows are
// what the numeric code passes around.
using Row = std::uint32_t;

enum class DatasetRole { unlabeled, validation, training, indicator };

std::string_view to_string(DatasetRole role);
DatasetRole parse_role(std::string_view text);

struct ObjectRecord {
  std::string object_id;
  std::vector<float> features;
  std::optional<std::string> prior_label;
  DatasetRole role = DatasetRole::unlabeled;
};

// One line of the labels sidecar (object_id,role,label).
struct SidecarEntry {
  std::string object_id;
  DatasetRole role = DatasetRole::unlabeled;
  std::string label;  // empty = no label
};

// Dense row-major feature matrix plus object identities. Build it with add(),
// then share it as const; every reader after that point is lock-free.
class FeatureStore {
 public:
  explicit FeatureStore(std::size_t dimensionality);

  void add(std::string object_id, std::span<const float> features);
  void apply_sidecar(const std::vector<SidecarEntry>& entries);

  std::size_t dimensionality() const { return dim_; }
  std::size_t count() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::span<const float> features(Row row) const {
    return {data_.data() + static_cast<std::size_t>(row) * dim_, dim_};
  }
  const std::vector<float>& matrix() const { return data_; }
  const std::string& object_id(Row row) const { return ids_[row]; }
  const std::vector<std::string>& object_ids() const { return ids_; }
  const std::optional<std::string>& prior_label(Row row) const { return labels_[row]; }
  DatasetRole role(Row row) const { return roles_[row]; }

  std::optional<Row> find(std::string_view object_id) const;
  Row row_of(std::string_view object_id) const;  // throws NotFoundError

  ObjectRecord record(Row row) const;

  friend bool operator==(const FeatureStore& a, const FeatureStore& b);

 private:
  std::size_t dim_;
  std::vector<float> data_;
  std::vector<std::string> ids_;
  std::vector<std::optional<std::string>> labels_;
  std::vector<DatasetRole> roles_;
  std::unordered_map<std::string, Row> index_;
};

// MCFT binary format: "MCFT" | u32 version=1 | u64 count | u32 dim | records of
// (u16 id_len | id bytes | dim x f32), all little-endian.
inline constexpr std::uint32_t kMcftVersion = 1;
inline constexpr std::size_t kMcftHeaderBytes = 4 + 4 + 8 + 4;

FeatureStore load_features(const std::filesystem::path& path);
FeatureStore parse_features(std::span<const std::byte> bytes);
void save_features(const FeatureStore& store, const std::filesystem::path& path);
std::vector<std::byte> serialize_features(const FeatureStore& store);

std::vector<SidecarEntry> load_sidecar(const std::filesystem::path& path);
void save_sidecar(const std::vector<SidecarEntry>& entries, const std::filesystem::path& path);

// L2 distance with double accumulation. Throws ValueError on length mismatch.
double euclidean_distance(std::span<const float> a, std::span<const float> b);

// Sum of squared differences in index order. Every kernel and oracle in the
// project reduces in this exact order so results agree bit for bit.
inline double squared_distance(const float* a, const float* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc += diff * diff;
  }
  return acc;
}

}  // namespace annoclust
