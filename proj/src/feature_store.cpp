#include "annoclust/feature_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "annoclust/csv.hpp"
#include "annoclust/errors.hpp"

namespace annoclust {

namespace {

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(value);
  }

  std::span<const std::byte> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated MCFT payload while reading ") + what);
    }
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::unlabeled: return "unlabeled";
    case DatasetRole::validation: return "validation";
    case DatasetRole::training: return "training";
    case DatasetRole::indicator: return "indicator";
  }
  return "unlabeled";
}

DatasetRole parse_role(std::string_view text) {
  if (text == "unlabeled" || text == "U" || text.empty()) return DatasetRole::unlabeled;
  if (text == "validation" || text == "Lv") return DatasetRole::validation;
  if (text == "training" || text == "Lt") return DatasetRole::training;
  if (text == "indicator" || text == "Ci") return DatasetRole::indicator;
  throw ValueError("unknown dataset role: " + std::string(text));
}

FeatureStore::FeatureStore(std::size_t dimensionality) : dim_(dimensionality) {
  if (dim_ == 0) throw ValueError("dimensionality must be positive");
}

void FeatureStore::add(std::string object_id, std::span<const float> features) {
  if (features.size() != dim_) {
    throw ValueError("feature length " + std::to_string(features.size()) + " != dimensionality " +
                     std::to_string(dim_));
  }
  for (float v : features) {
    if (!std::isfinite(v)) throw ValueError("non-finite feature value for object " + object_id);
  }
  if (index_.contains(object_id)) throw DuplicateIdError("duplicate object id: " + object_id);
  const auto row = static_cast<Row>(ids_.size());
  index_.emplace(object_id, row);
  ids_.push_back(std::move(object_id));
  data_.insert(data_.end(), features.begin(), features.end());
  labels_.emplace_back();
  roles_.push_back(DatasetRole::unlabeled);
}

void FeatureStore::apply_sidecar(const std::vector<SidecarEntry>& entries) {
  for (const auto& e : entries) {
    const Row row = row_of(e.object_id);
    roles_[row] = e.role;
    if (e.label.empty()) {
      labels_[row].reset();
    } else {
      labels_[row] = e.label;
    }
  }
}

std::optional<Row> FeatureStore::find(std::string_view object_id) const {
  auto it = index_.find(std::string(object_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Row FeatureStore::row_of(std::string_view object_id) const {
  if (auto row = find(object_id)) return *row;
  throw NotFoundError("unknown object id: " + std::string(object_id));
}

ObjectRecord FeatureStore::record(Row row) const {
  auto f = features(row);
  return ObjectRecord{ids_[row], {f.begin(), f.end()}, labels_[row], roles_[row]};
}

bool operator==(const FeatureStore& a, const FeatureStore& b) {
  if (a.dim_ != b.dim_ || a.ids_ != b.ids_ || a.labels_ != b.labels_ || a.roles_ != b.roles_) {
    return false;
  }
  // Bitwise, so -0.0f and 0.0f differ the way the file bytes would.
  return a.data_.size() == b.data_.size() &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

FeatureStore parse_features(std::span<const std::byte> bytes) {
  Reader in(bytes);
  auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), "MCFT", 4) != 0) throw FormatError("bad magic, not an MCFT file");
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kMcftVersion) {
    throw FormatError("unsupported MCFT version " + std::to_string(version));
  }
  const auto count = in.get_le<std::uint64_t>("count");
  const auto dim = in.get_le<std::uint32_t>("dim");
  if (dim == 0) throw FormatError("MCFT dimensionality is zero");
  if (count > std::numeric_limits<Row>::max()) throw FormatError("MCFT record count too large");

  FeatureStore store(dim);
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id_len = in.get_le<std::uint16_t>("id length");
    auto id_bytes = in.take(id_len, "object id");
    std::string id(reinterpret_cast<const char*>(id_bytes.data()), id_bytes.size());
    for (std::uint32_t d = 0; d < dim; ++d) {
      const auto bits = in.get_le<std::uint32_t>("feature values");
      std::memcpy(&row[d], &bits, sizeof(float));
    }
    store.add(std::move(id), row);
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after last MCFT record");
  return store;
}

FeatureStore load_features(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open feature file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  return parse_features(std::as_bytes(std::span(raw)));
}

std::vector<std::byte> serialize_features(const FeatureStore& store) {
  std::vector<std::byte> out;
  out.reserve(kMcftHeaderBytes + store.count() * (2 + 16 + 4 * store.dimensionality()));
  for (char c : std::string_view("MCFT")) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out, kMcftVersion);
  put_le<std::uint64_t>(out, store.count());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dimensionality()));
  for (Row r = 0; r < store.count(); ++r) {
    const auto& id = store.object_id(r);
    if (id.size() > 0xffff) throw ValueError("object id longer than 65535 bytes: " + id.substr(0, 32));
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    for (char c : id) out.push_back(static_cast<std::byte>(c));
    for (float v : store.features(r)) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<std::uint32_t>(out, bits);
    }
  }
  return out;
}

void save_features(const FeatureStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_features(store);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write feature file " + path.string());
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw Error("I/O failure writing " + path.string());
}

std::vector<SidecarEntry> load_sidecar(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open labels file " + path.string());
  std::string line;
  if (!std::getline(file, line) || line != "object_id,role,label") {
    throw FormatError("labels file must start with header object_id,role,label");
  }
  std::vector<SidecarEntry> entries;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != 3) throw FormatError("labels line needs 3 fields: " + line);
    entries.push_back({std::move(fields[0]), parse_role(fields[1]), std::move(fields[2])});
  }
  return entries;
}

void save_sidecar(const std::vector<SidecarEntry>& entries, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write labels file " + path.string());
  file << "object_id,role,label\n";
  for (const auto& e : entries) {
    file << csv::field(e.object_id) << ',' << to_string(e.role) << ',' << csv::field(e.label) << '\n';
  }
  if (!file) throw Error("I/O failure writing " + path.string());
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ValueError("feature vectors differ in length");
  return std::sqrt(squared_distance(a.data(), b.data(), a.size()));
}

}  // namespace annoclust
