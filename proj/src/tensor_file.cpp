#include "rlaux/data/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rlaux/checkpoint.hpp"
#include "rlaux/error.hpp"

namespace rlaux::data {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'X', 'T', 'F'};

[[noreturn]] void format_error(const std::string& source, std::size_t offset, const std::string& what) {
  throw FormatError(source + ": " + what + " at byte offset " + std::to_string(offset));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

}  // namespace

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::Float32: return 4;
    case DType::UInt8: return 1;
    case DType::UInt32: return 4;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::Float32: return "float32";
    case DType::UInt8: return "uint8";
    case DType::UInt32: return "uint32";
  }
  return "dtype(" + std::to_string(static_cast<int>(dtype)) + ")";
}

std::size_t TensorRecord::numel() const {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

void TensorRecord::validate() const {
  if (dims.empty()) throw FormatError("tensor has no dimensions");
  if (dims.size() > 255) throw FormatError("tensor has more than 255 dimensions");
  std::size_t product = 1;
  for (std::uint32_t d : dims) {
    if (d == 0) throw FormatError("tensor dimension of size 0");
    product *= d;
  }
  if (product != numel()) {
    throw FormatError("tensor dims hold " + std::to_string(product) + " elements but " + std::to_string(numel()) +
                      " values are present");
  }
}

std::string encode_tensor(const TensorRecord& record) {
  record.validate();
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kTensorFileVersion));
  out.push_back(static_cast<char>(record.dtype()));
  out.push_back(static_cast<char>(record.dims.size()));
  for (std::uint32_t d : record.dims) put_u32(out, d);
  std::visit(
      [&](const auto& v) {
        const std::size_t offset = out.size();
        out.resize(offset + v.size() * sizeof(v[0]));
        if (!v.empty()) std::memcpy(out.data() + offset, v.data(), v.size() * sizeof(v[0]));
      },
      record.values);
  return out;
}

TensorRecord decode_tensor(std::string_view bytes, const std::string& source) {
  if (bytes.size() < kTensorHeaderFixedBytes) format_error(source, bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) format_error(source, 0, "bad magic (expected \"AXTF\")");
  if (static_cast<std::uint8_t>(bytes[4]) != kTensorFileVersion) {
    format_error(source, 4, "unsupported version " + std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  const auto code = static_cast<std::uint8_t>(bytes[5]);
  if (code > 2) format_error(source, 5, "unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t ndim = static_cast<unsigned char>(bytes[6]);
  if (ndim == 0) format_error(source, 6, "ndim 0");
  const std::size_t header = kTensorHeaderFixedBytes + 4 * ndim;
  if (bytes.size() < header) format_error(source, bytes.size(), "truncated dims");

  TensorRecord record;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::size_t offset = kTensorHeaderFixedBytes + 4 * i;
    const std::uint32_t d = get_u32(bytes, offset);
    if (d == 0) format_error(source, offset, "dimension " + std::to_string(i) + " is 0");
    record.dims.push_back(d);
    count *= d;
  }
  const std::size_t payload = count * element_size(dtype);
  if (bytes.size() < header + payload) {
    format_error(source, bytes.size(), "truncated payload (expected " + std::to_string(payload) + " bytes after offset " +
                                           std::to_string(header) + ")");
  }
  if (bytes.size() > header + payload) format_error(source, header + payload, "trailing bytes after payload");

  auto fill = [&](auto vec) {
    vec.resize(count);
    if (count > 0) std::memcpy(vec.data(), bytes.data() + header, payload);
    record.values = std::move(vec);
  };
  switch (dtype) {
    case DType::Float32: fill(std::vector<float>{}); break;
    case DType::UInt8: fill(std::vector<std::uint8_t>{}); break;
    case DType::UInt32: fill(std::vector<std::uint32_t>{}); break;
  }
  return record;
}

void save_tensor(const std::filesystem::path& path, const TensorRecord& record) {
  write_file_atomic(path, encode_tensor(record));
}

TensorRecord load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path), path.string()); }

TensorRecord to_record(const nn::Tensor& tensor) {
  TensorRecord r;
  for (std::size_t d : tensor.shape()) {
    if (d > 0xffffffffu) throw FormatError("tensor dimension does not fit in 32 bits");
    r.dims.push_back(static_cast<std::uint32_t>(d));
  }
  r.values = std::vector<float>(tensor.data().begin(), tensor.data().end());
  return r;
}

TensorRecord to_record(std::span<const int> labels) {
  TensorRecord r;
  r.dims = {static_cast<std::uint32_t>(labels.size())};
  std::vector<std::uint32_t> v;
  v.reserve(labels.size());
  for (int l : labels) {
    if (l < 0) throw LabelError("cannot store a negative label");
    v.push_back(static_cast<std::uint32_t>(l));
  }
  r.values = std::move(v);
  return r;
}

nn::Tensor to_tensor(const TensorRecord& record, const std::string& source) {
  const auto* v = std::get_if<std::vector<float>>(&record.values);
  if (v == nullptr) throw FormatError(source + ": expected float32, found " + to_string(record.dtype()) + " at byte offset 5");
  return nn::Tensor(std::vector<std::size_t>(record.dims.begin(), record.dims.end()), *v);
}

std::vector<int> to_labels(const TensorRecord& record, const std::string& source) {
  if (record.dims.size() != 1) throw FormatError(source + ": labels must be 1-d at byte offset 6");
  std::vector<int> out;
  if (const auto* u32 = std::get_if<std::vector<std::uint32_t>>(&record.values)) {
    for (std::uint32_t l : *u32) {
      if (l > 0x7fffffffu) throw FormatError(source + ": label value too large");
      out.push_back(static_cast<int>(l));
    }
  } else if (const auto* u8 = std::get_if<std::vector<std::uint8_t>>(&record.values)) {
    out.assign(u8->begin(), u8->end());
  } else {
    throw FormatError(source + ": expected uint8 or uint32 labels, found float32 at byte offset 5");
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  const std::string p = dataset.split;
  save_tensor(dir / (p + "_inputs.axtf"), to_record(dataset.inputs));
  save_tensor(dir / (p + "_primary.axtf"), to_record(dataset.primary_labels));
  if (dataset.subclass_labels) save_tensor(dir / (p + "_subclass.axtf"), to_record(*dataset.subclass_labels));
  std::ostringstream meta;
  meta << "num_primary=" << dataset.num_primary << "\nhierarchy_factor=" << dataset.hierarchy_factor << "\n";
  write_file_atomic(dir / (p + "_meta.txt"), meta.str());
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& split) {
  Dataset ds;
  ds.split = split;
  const auto meta_path = dir / (split + "_meta.txt");
  std::istringstream meta(read_file(meta_path));
  std::string line;
  int line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(meta_path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "num_primary") {
        ds.num_primary = std::stoi(value);
      } else if (key == "hierarchy_factor") {
        ds.hierarchy_factor = std::stoi(value);
      } else {
        throw FormatError(meta_path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError(meta_path.string() + ":" + std::to_string(line_no) + ": bad integer '" + value + "'");
    }
  }
  const auto inputs = dir / (split + "_inputs.axtf");
  const auto primary = dir / (split + "_primary.axtf");
  const auto subclass = dir / (split + "_subclass.axtf");
  ds.inputs = to_tensor(load_tensor(inputs), inputs.string());
  ds.primary_labels = to_labels(load_tensor(primary), primary.string());
  if (std::filesystem::exists(subclass)) ds.subclass_labels = to_labels(load_tensor(subclass), subclass.string());
  ds.validate();
  return ds;
}

}  // namespace rlaux::data
