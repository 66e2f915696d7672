#include "tensor_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "json.hpp"

namespace npad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'N', 'P', 'A', 'D'};

template <class T>
void to_little_endian(T* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    (void)values;
    (void)count;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      auto* bytes = reinterpret_cast<unsigned char*>(values + i);
      std::reverse(bytes, bytes + sizeof(T));
    }
  }
}

std::string describe(const fs::path& path) { return "'" + path.string() + "'"; }

std::size_t element_count(const std::vector<std::uint32_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

struct ParsedHeader {
  TensorHeader header;
  std::size_t header_bytes = 0;
};

ParsedHeader parse_header(std::istream& in, const fs::path& path) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()))
    fail(ErrorCode::Truncated, "truncated header in " + describe(path));
  if (magic != kMagic) fail(ErrorCode::Format, "bad magic in " + describe(path));

  std::array<std::uint8_t, 3> meta{};
  in.read(reinterpret_cast<char*>(meta.data()), meta.size());
  if (in.gcount() != static_cast<std::streamsize>(meta.size()))
    fail(ErrorCode::Truncated, "truncated header in " + describe(path));
  if (meta[0] != kFormatVersion)
    fail(ErrorCode::Format, "unsupported format version " + std::to_string(meta[0]) + " in " +
                                describe(path));
  if (meta[1] > static_cast<std::uint8_t>(DType::U8))
    fail(ErrorCode::UnknownDType,
         "unknown dtype code " + std::to_string(meta[1]) + " in " + describe(path));
  const std::size_t ndim = meta[2];
  if (ndim < 1 || ndim > 4)
    fail(ErrorCode::Format, "invalid ndim " + std::to_string(ndim) + " in " + describe(path));

  ParsedHeader parsed;
  parsed.header.dtype = static_cast<DType>(meta[1]);
  parsed.header.shape.resize(ndim);
  in.read(reinterpret_cast<char*>(parsed.header.shape.data()),
          static_cast<std::streamsize>(ndim * sizeof(std::uint32_t)));
  if (in.gcount() != static_cast<std::streamsize>(ndim * sizeof(std::uint32_t)))
    fail(ErrorCode::Truncated, "truncated header in " + describe(path));
  to_little_endian(parsed.header.shape.data(), ndim);
  for (auto dim : parsed.header.shape)
    if (dim == 0) fail(ErrorCode::Format, "zero-sized dimension in " + describe(path));
  parsed.header_bytes = kMagic.size() + meta.size() + ndim * sizeof(std::uint32_t);
  return parsed;
}

std::ifstream open_for_read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + describe(path));
  return in;
}

std::size_t payload_bytes(const TensorHeader& h) {
  return element_count(h.shape) * dtype_size(h.dtype);
}

void check_length(const fs::path& path, const ParsedHeader& parsed) {
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) fail(ErrorCode::Io, "cannot stat " + describe(path));
  const auto expected = parsed.header_bytes + payload_bytes(parsed.header);
  if (actual < expected)
    fail(ErrorCode::Truncated, "file " + describe(path) + " holds " + std::to_string(actual) +
                                   " bytes, header promises " + std::to_string(expected));
  if (actual > expected)
    fail(ErrorCode::Format, "trailing bytes after payload in " + describe(path));
}

}  // namespace

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::U8: return "u8";
  }
  return "?";
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  return 0;
}

Tensor::Tensor(std::vector<std::uint32_t> shape, Storage data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(!shape_.empty() && shape_.size() <= 4, ErrorCode::InvalidArgument,
          "tensor must have 1 to 4 dimensions");
  for (auto dim : shape_)
    require(dim > 0, ErrorCode::InvalidArgument, "tensor dimensions must be positive");
  const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, data_);
  require(stored == element_count(shape_), ErrorCode::InvalidArgument,
          "tensor value count " + std::to_string(stored) + " does not match shape product " +
              std::to_string(element_count(shape_)));
}

std::size_t Tensor::size() const { return element_count(shape_); }

std::vector<double> Tensor::as_f64() const {
  return std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

void write_tensor(const fs::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + describe(path) + " for writing");

  out.write(kMagic.data(), kMagic.size());
  const std::array<std::uint8_t, 3> meta = {kFormatVersion,
                                            static_cast<std::uint8_t>(tensor.dtype()),
                                            static_cast<std::uint8_t>(tensor.shape().size())};
  out.write(reinterpret_cast<const char*>(meta.data()), meta.size());
  auto dims = tensor.shape();
  to_little_endian(dims.data(), dims.size());
  out.write(reinterpret_cast<const char*>(dims.data()),
            static_cast<std::streamsize>(dims.size() * sizeof(std::uint32_t)));

  std::visit(
      [&](const auto& values) {
        using T = typename std::decay_t<decltype(values)>::value_type;
        if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
          out.write(reinterpret_cast<const char*>(values.data()),
                    static_cast<std::streamsize>(values.size() * sizeof(T)));
        } else {
          auto copy = values;
          to_little_endian(copy.data(), copy.size());
          out.write(reinterpret_cast<const char*>(copy.data()),
                    static_cast<std::streamsize>(copy.size() * sizeof(T)));
        }
      },
      tensor.storage());
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed for " + describe(path));
}

TensorHeader read_tensor_header(const fs::path& path) {
  auto in = open_for_read(path);
  auto parsed = parse_header(in, path);
  check_length(path, parsed);
  return parsed.header;
}

Tensor read_tensor(const fs::path& path) {
  auto in = open_for_read(path);
  auto parsed = parse_header(in, path);
  check_length(path, parsed);
  const std::size_t count = element_count(parsed.header.shape);

  auto load = [&](auto tag) -> Tensor {
    using T = decltype(tag);
    std::vector<T> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
      fail(ErrorCode::Truncated, "truncated payload in " + describe(path));
    to_little_endian(values.data(), values.size());
    return Tensor(parsed.header.shape, std::move(values));
  };

  switch (parsed.header.dtype) {
    case DType::F32: return load(float{});
    case DType::F64: return load(double{});
    case DType::U8: return load(std::uint8_t{});
  }
  fail(ErrorCode::UnknownDType, "unknown dtype in " + describe(path));
}

Tensor to_tensor(const FeatureMap& fm) {
  std::vector<float> values(fm.values().begin(), fm.values().end());
  return Tensor({static_cast<std::uint32_t>(fm.height()), static_cast<std::uint32_t>(fm.width()),
                 static_cast<std::uint32_t>(fm.channels())},
                std::move(values));
}

FeatureMap to_feature_map(const Tensor& t) {
  require(t.shape().size() == 3, ErrorCode::ShapeMismatch,
          "feature map tensor must be H x W x C");
  return FeatureMap(t.shape()[0], t.shape()[1], t.shape()[2], t.as_f64());
}

Tensor to_tensor(const AnomalyMap& map, DType dtype) {
  const std::vector<std::uint32_t> shape = {static_cast<std::uint32_t>(map.height()),
                                            static_cast<std::uint32_t>(map.width())};
  switch (dtype) {
    case DType::F32:
      return Tensor(shape, std::vector<float>(map.values().begin(), map.values().end()));
    case DType::F64: return Tensor(shape, map.values());
    case DType::U8: break;
  }
  fail(ErrorCode::InvalidArgument, "anomaly maps are stored as f32 or f64");
}

AnomalyMap to_anomaly_map(const Tensor& t) {
  require(t.shape().size() == 2, ErrorCode::ShapeMismatch, "anomaly map tensor must be H x W");
  return AnomalyMap(t.shape()[0], t.shape()[1], t.as_f64());
}

FeatureMap read_feature_map(const fs::path& path) {
  const auto t = read_tensor(path);
  if (t.shape().size() != 3)
    fail(ErrorCode::ShapeMismatch, "feature tensor " + describe(path) + " must be H x W x C");
  return to_feature_map(t);
}

std::vector<const ManifestEntry*> DatasetManifest::with_role(Role role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.role == role) out.push_back(&e);
  return out;
}

namespace {

std::pair<std::size_t, std::size_t> read_hw(const json& doc, const char* key,
                                            const fs::path& path) {
  if (!doc.contains(key) || !doc[key].is_array() || doc[key].size() != 2 ||
      !doc[key][0].is_number_integer() || !doc[key][1].is_number_integer() ||
      doc[key][0].get<long long>() <= 0 || doc[key][1].get<long long>() <= 0)
    fail(ErrorCode::Validation,
         std::string("manifest ") + describe(path) + " needs positive integer pair '" + key + "'");
  return {doc[key][0].get<std::size_t>(), doc[key][1].get<std::size_t>()};
}

std::string format_shape(const std::vector<std::uint32_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + describe(path));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "manifest " + describe(path) + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::Validation, "manifest root must be an object");

  DatasetManifest manifest;
  std::tie(manifest.feature_h, manifest.feature_w) = read_hw(doc, "feature_hw", path);
  std::tie(manifest.image_h, manifest.image_w) = read_hw(doc, "image_hw", path);
  if (!doc.contains("entries") || !doc["entries"].is_array())
    fail(ErrorCode::Validation, "manifest " + describe(path) + " needs an 'entries' array");

  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return base / fs::path(p); };

  std::optional<std::vector<std::uint32_t>> common_shape;
  std::size_t index = 0;
  for (const auto& item : doc["entries"]) {
    const std::string where = "manifest entry " + std::to_string(index++);
    if (!item.is_object() || !item.contains("tensor") || !item["tensor"].is_string())
      fail(ErrorCode::Validation, where + " needs a 'tensor' path");
    ManifestEntry entry;
    entry.tensor = resolve(item["tensor"].get<std::string>());
    entry.id = item.contains("id") && item["id"].is_string()
                   ? item["id"].get<std::string>()
                   : fs::path(item["tensor"].get<std::string>()).stem().string();

    const std::string role = item.value("role", std::string{});
    if (role == "train") entry.role = Role::Train;
    else if (role == "test") entry.role = Role::Test;
    else fail(ErrorCode::Validation, where + " has role '" + role + "', expected train|test");

    if (item.contains("label") && !item["label"].is_null()) {
      if (!item["label"].is_number_integer())
        fail(ErrorCode::Validation, where + " label must be 0 or 1");
      const int label = item["label"].get<int>();
      if (label != 0 && label != 1) fail(ErrorCode::Validation, where + " label must be 0 or 1");
      entry.label = label;
    }
    if (entry.role == Role::Train && entry.label.value_or(0) != 0)
      fail(ErrorCode::Validation, where + " is a train entry labeled anomalous; training is "
                                          "nominal-only");

    if (item.contains("mask") && !item["mask"].is_null()) {
      if (!item["mask"].is_string()) fail(ErrorCode::Validation, where + " mask must be a path");
      entry.mask = resolve(item["mask"].get<std::string>());
    }
    if (item.contains("shift") && !item["shift"].is_null()) {
      const auto& s = item["shift"];
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() ||
          !s[1].is_number_integer())
        fail(ErrorCode::Validation, where + " shift must be an integer pair");
      entry.shift = ShiftOffset{s[0].get<int>(), s[1].get<int>()};
    }

    if (!fs::exists(entry.tensor))
      fail(ErrorCode::Io, where + " references missing tensor " + describe(entry.tensor));
    const auto header = read_tensor_header(entry.tensor);
    if (header.shape.size() != 3)
      fail(ErrorCode::ShapeMismatch, "tensor " + describe(entry.tensor) + " must be H x W x C");
    if (header.shape[0] != manifest.feature_h || header.shape[1] != manifest.feature_w)
      fail(ErrorCode::ShapeMismatch, "tensor " + describe(entry.tensor) + " has shape " +
                                         format_shape(header.shape) +
                                         " but feature_hw is [" +
                                         std::to_string(manifest.feature_h) + "," +
                                         std::to_string(manifest.feature_w) + "]");
    if (common_shape && *common_shape != header.shape)
      fail(ErrorCode::ShapeMismatch, "tensor " + describe(entry.tensor) + " has shape " +
                                         format_shape(header.shape) + ", expected " +
                                         format_shape(*common_shape));
    common_shape = header.shape;

    if (entry.mask) {
      if (!fs::exists(*entry.mask))
        fail(ErrorCode::Io, where + " references missing mask " + describe(*entry.mask));
      const auto mh = read_tensor_header(*entry.mask);
      if (mh.dtype != DType::U8 || mh.shape.size() != 2 || mh.shape[0] != manifest.image_h ||
          mh.shape[1] != manifest.image_w)
        fail(ErrorCode::ShapeMismatch, "mask " + describe(*entry.mask) +
                                           " must be a u8 tensor of shape image_hw");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (common_shape) manifest.channels = (*common_shape)[2];
  return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return fs::relative(p, base.empty() ? "." : base).generic_string(); };

  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json item;
    item["id"] = e.id;
    item["tensor"] = rel(e.tensor);
    item["role"] = e.role == Role::Train ? "train" : "test";
    item["label"] = e.label ? json(*e.label) : json(nullptr);
    item["mask"] = e.mask ? json(rel(*e.mask)) : json(nullptr);
    item["shift"] = e.shift ? json::array({e.shift->a, e.shift->b}) : json(nullptr);
    entries.push_back(std::move(item));
  }
  json doc;
  doc["feature_hw"] = {manifest.feature_h, manifest.feature_w};
  doc["image_hw"] = {manifest.image_h, manifest.image_w};
  doc["entries"] = std::move(entries);

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write manifest " + describe(path));
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + describe(path));
}

}  // namespace npad
