#pragma once

// NPAD tensor files and dataset manifests.
//
// File layout: "NPAD", u8 version (1), u8 dtype (0=f32, 1=f64, 2=u8), u8 ndim,
// ndim x u32 little-endian dims, then the row-major payload in little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "feature_map.hpp"

namespace npad {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

const char* dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

inline constexpr std::uint8_t kFormatVersion = 1;

class Tensor {
 public:
  using Storage =
      std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>>;

  // Throws InvalidArgument unless 1 <= ndim <= 4, every dim is positive and
  // the value count equals the product of dims.
  Tensor(std::vector<std::uint32_t> shape, Storage data);

  DType dtype() const { return static_cast<DType>(data_.index()); }
  const std::vector<std::uint32_t>& shape() const { return shape_; }
  std::size_t size() const;

  template <class T>
  std::span<const T> values() const {
    const auto* v = std::get_if<std::vector<T>>(&data_);
    require(v != nullptr, ErrorCode::InvalidArgument, "tensor dtype mismatch");
    return *v;
  }

  const Storage& storage() const { return data_; }

  // Values widened to double regardless of dtype.
  std::vector<double> as_f64() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::uint32_t> shape_;
  Storage data_;
};

struct TensorHeader {
  DType dtype = DType::F32;
  std::vector<std::uint32_t> shape;
};

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);
// Reads and validates only the header; the payload length is checked too.
TensorHeader read_tensor_header(const std::filesystem::path& path);

// Feature maps are stored as H x W x C f32 tensors.
Tensor to_tensor(const FeatureMap& fm);
FeatureMap to_feature_map(const Tensor& t);
Tensor to_tensor(const AnomalyMap& map, DType dtype = DType::F32);
AnomalyMap to_anomaly_map(const Tensor& t);

FeatureMap read_feature_map(const std::filesystem::path& path);

enum class Role { Train, Test };

struct ShiftOffset {
  int a = 0;
  int b = 0;

  friend bool operator==(const ShiftOffset&, const ShiftOffset&) = default;
  friend auto operator<=>(const ShiftOffset&, const ShiftOffset&) = default;
};

struct ManifestEntry {
  // Groups shift variants of one image. Defaults to the tensor file stem.
  std::string id;
  std::filesystem::path tensor;  // resolved against the manifest directory
  Role role = Role::Train;
  std::optional<int> label;
  std::optional<std::filesystem::path> mask;
  std::optional<ShiftOffset> shift;
};

struct DatasetManifest {
  std::size_t feature_h = 0;
  std::size_t feature_w = 0;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::size_t channels = 0;  // taken from the tensor headers
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> with_role(Role role) const;
};

// Parses the JSON manifest and eagerly validates every referenced tensor.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes entries with paths relative to the manifest's directory.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

}  // namespace npad
