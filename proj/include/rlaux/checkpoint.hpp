#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlaux/nn/autograd.hpp"

namespace rlaux {

/// Exact parameter state of a network at some epoch.
struct Snapshot {
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::vector<float> values;
    bool operator==(const Entry&) const = default;
  };
  int epoch = 0;
  std::vector<Entry> entries;

  bool operator==(const Snapshot&) const = default;
};

Snapshot snapshot_parameters(std::span<const nn::Parameter<float>* const> params, int epoch);
void restore_parameters(std::span<nn::Parameter<float>* const> params, const Snapshot& snap);

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text);
/// FNV-1a over the raw bytes of every parameter value, in order.
std::uint64_t parameter_hash(const Snapshot& snap);

std::string hex64(std::uint64_t v);

// On-disk layout: a text manifest at `path` and a little-endian float32 blob
// at `path + ".bin"`. Manifest:
//
//   rlaux-checkpoint 1
//   epoch <int>
//   config_hash <16 hex digits>
//   blob <file name of the blob>
//   blob_bytes <total bytes>
//   params <count>
//   param <name> <rows>x<cols> offset <byte offset> bytes <byte count>
//   ...
//
// Both files are written to a temporary name and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Snapshot& snap, std::uint64_t config_hash);

struct LoadedCheckpoint {
  Snapshot snapshot;
  std::uint64_t config_hash = 0;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` to path via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace rlaux
