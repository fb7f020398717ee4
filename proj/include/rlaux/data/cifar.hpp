#pragma once

// CIFAR-100 binary records (coarse byte, fine byte, 3072 channel-planar image
// bytes) mapped onto the 20-superclass task. Fine classes become the oracle
// subclass labels: subclass = 5·superclass + rank of the fine class within it.

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rlaux/data/dataset.hpp"

namespace rlaux::data {

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 3074;
inline constexpr int kCifarFineClasses = 100;
inline constexpr int kCifarSuperclasses = 20;
inline constexpr int kCifarFinePerSuper = 5;

/// Fine label names in label-index order.
const std::array<std::string_view, kCifarFineClasses>& cifar100_fine_names();
/// Superclass display names in superclass-index order.
const std::array<std::string_view, kCifarSuperclasses>& cifar100_superclass_names();

struct SuperclassMap {
  std::array<int, kCifarFineClasses> super_of{};  // fine index → superclass
  std::array<int, kCifarFineClasses> rank_in_super{};

  int subclass_of(int fine) const { return kCifarFinePerSuper * super_of.at(static_cast<std::size_t>(fine)) +
                                           rank_in_super.at(static_cast<std::size_t>(fine)); }
  std::vector<std::string_view> members(int super) const;
};

/// The standard 20-superclass grouping.
SuperclassMap default_superclass_map();
/// Parses `fine_name,super_index` lines (# comments allowed). Every fine class
/// must appear exactly once and every superclass must receive exactly 5.
SuperclassMap parse_superclass_map(std::string_view text, const std::string& source = "<map>");
SuperclassMap load_superclass_map(const std::filesystem::path& path);
std::string format_superclass_map(const SuperclassMap& map);

int fine_index(std::string_view name);

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

/// Raw records: pixel values scaled to [0, 1], no normalization yet.
Dataset decode_cifar100(std::string_view bytes, const SuperclassMap& map, const std::string& split,
                        const std::string& source = "<memory>");
Dataset load_cifar100(const std::filesystem::path& path, const SuperclassMap& map, const std::string& split);

ChannelStats channel_stats(const Dataset& dataset);
/// In place (x − mean_c) / std_c per channel.
void normalize_channels(Dataset& dataset, const ChannelStats& stats);

}  // namespace rlaux::data
