#pragma once

// Binary tensor container:
//
//   offset 0  "AXTF"
//          4  version (1)
//          5  dtype (0 float32, 1 uint8, 2 uint32)
//          6  ndim
//          7  ndim little-endian uint32 dims
//          …  payload, little-endian, element size · product(dims) bytes

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rlaux/data/dataset.hpp"
#include "rlaux/nn/tensor.hpp"

namespace rlaux::data {

enum class DType : std::uint8_t { Float32 = 0, UInt8 = 1, UInt32 = 2 };

inline constexpr std::uint8_t kTensorFileVersion = 1;
inline constexpr std::size_t kTensorHeaderFixedBytes = 7;

std::size_t element_size(DType dtype);
std::string to_string(DType dtype);

using TensorValues = std::variant<std::vector<float>, std::vector<std::uint8_t>, std::vector<std::uint32_t>>;

struct TensorRecord {
  std::vector<std::uint32_t> dims;
  TensorValues values;

  DType dtype() const { return static_cast<DType>(values.index()); }
  std::size_t numel() const;
  /// Throws FormatError if dims are empty, contain 0 or disagree with the value count.
  void validate() const;

  bool operator==(const TensorRecord&) const = default;
};

std::string encode_tensor(const TensorRecord& record);
/// `source` names the origin in error messages.
TensorRecord decode_tensor(std::string_view bytes, const std::string& source = "<memory>");

void save_tensor(const std::filesystem::path& path, const TensorRecord& record);
TensorRecord load_tensor(const std::filesystem::path& path);

TensorRecord to_record(const nn::Tensor& tensor);
TensorRecord to_record(std::span<const int> labels);
/// Requires float32.
nn::Tensor to_tensor(const TensorRecord& record, const std::string& source = "<memory>");
/// Requires a 1-d uint8 or uint32 record.
std::vector<int> to_labels(const TensorRecord& record, const std::string& source = "<memory>");

// A dataset split on disk: <dir>/<split>_inputs.axtf, <split>_primary.axtf,
// optionally <split>_subclass.axtf, plus <dir>/<split>_meta.txt with
// num_primary and hierarchy_factor.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir, const std::string& split);

}  // namespace rlaux::data
