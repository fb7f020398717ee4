#include "rlaux/data/cifar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rlaux/error.hpp"

namespace rlaux::data {

const std::array<std::string_view, kCifarFineClasses>& cifar100_fine_names() {
  static const std::array<std::string_view, kCifarFineClasses> names = {
      "apple",        "aquarium_fish", "baby",       "bear",       "beaver",      "bed",         "bee",
      "beetle",       "bicycle",       "bottle",     "bowl",       "boy",         "bridge",      "bus",
      "butterfly",    "camel",         "can",        "castle",     "caterpillar", "cattle",      "chair",
      "chimpanzee",   "clock",         "cloud",      "cockroach",  "couch",       "crab",        "crocodile",
      "cup",          "dinosaur",      "dolphin",    "elephant",   "flatfish",    "forest",      "fox",
      "girl",         "hamster",       "house",      "kangaroo",   "keyboard",    "lamp",        "lawn_mower",
      "leopard",      "lion",          "lizard",     "lobster",    "man",         "maple_tree",  "motorcycle",
      "mountain",     "mouse",         "mushroom",   "oak_tree",   "orange",      "orchid",      "otter",
      "palm_tree",    "pear",          "pickup_truck", "pine_tree", "plain",      "plate",       "poppy",
      "porcupine",    "possum",        "rabbit",     "raccoon",    "ray",         "road",        "rocket",
      "rose",         "sea",           "seal",       "shark",      "shrew",       "skunk",       "skyscraper",
      "snail",        "snake",         "spider",     "squirrel",   "streetcar",   "sunflower",   "sweet_pepper",
      "table",        "tank",          "telephone",  "television", "tiger",       "tractor",     "train",
      "trout",        "tulip",         "turtle",     "wardrobe",   "whale",       "willow_tree", "wolf",
      "woman",        "worm"};
  return names;
}

const std::array<std::string_view, kCifarSuperclasses>& cifar100_superclass_names() {
  static const std::array<std::string_view, kCifarSuperclasses> names = {
      "Aquatic mammals",
      "Fish",
      "Flowers",
      "Food containers",
      "Fruit and vegetables",
      "Household electrical devices",
      "Household furniture",
      "Insects",
      "Large carnivores",
      "Large man-made outdoor things",
      "Large natural outdoor scenes",
      "Large omnivores and herbivores",
      "Medium-sized mammals",
      "Non-insect invertebrates",
      "People",
      "Reptiles",
      "Small mammals",
      "Trees",
      "Vehicles 1",
      "Vehicles 2"};
  return names;
}

namespace {

const std::array<std::array<std::string_view, kCifarFinePerSuper>, kCifarSuperclasses> kGroups = {{
    {"beaver", "dolphin", "otter", "seal", "whale"},
    {"aquarium_fish", "flatfish", "ray", "shark", "trout"},
    {"orchid", "poppy", "rose", "sunflower", "tulip"},
    {"bottle", "bowl", "can", "cup", "plate"},
    {"apple", "mushroom", "orange", "pear", "sweet_pepper"},
    {"clock", "keyboard", "lamp", "telephone", "television"},
    {"bed", "chair", "couch", "table", "wardrobe"},
    {"bee", "beetle", "butterfly", "caterpillar", "cockroach"},
    {"bear", "leopard", "lion", "tiger", "wolf"},
    {"bridge", "castle", "house", "road", "skyscraper"},
    {"cloud", "forest", "mountain", "plain", "sea"},
    {"camel", "cattle", "chimpanzee", "elephant", "kangaroo"},
    {"fox", "porcupine", "possum", "raccoon", "skunk"},
    {"crab", "lobster", "snail", "spider", "worm"},
    {"baby", "boy", "girl", "man", "woman"},
    {"crocodile", "dinosaur", "lizard", "snake", "turtle"},
    {"hamster", "mouse", "rabbit", "shrew", "squirrel"},
    {"maple_tree", "oak_tree", "palm_tree", "pine_tree", "willow_tree"},
    {"bicycle", "bus", "motorcycle", "pickup_truck", "train"},
    {"lawn_mower", "rocket", "streetcar", "tank", "tractor"},
}};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

SuperclassMap finish_map(const std::array<int, kCifarFineClasses>& super_of, const std::string& source) {
  SuperclassMap map;
  map.super_of = super_of;
  std::array<int, kCifarSuperclasses> counts{};
  for (int f = 0; f < kCifarFineClasses; ++f) {
    const int s = super_of[static_cast<std::size_t>(f)];
    if (s < 0) throw ConfigError(source + ": fine class '" + std::string(cifar100_fine_names()[f]) + "' is unmapped");
    map.rank_in_super[static_cast<std::size_t>(f)] = counts[static_cast<std::size_t>(s)]++;
  }
  for (int s = 0; s < kCifarSuperclasses; ++s) {
    if (counts[static_cast<std::size_t>(s)] != kCifarFinePerSuper) {
      throw ConfigError(source + ": superclass " + std::to_string(s) + " has " +
                        std::to_string(counts[static_cast<std::size_t>(s)]) + " fine classes, expected 5");
    }
  }
  return map;
}

}  // namespace

int fine_index(std::string_view name) {
  const auto& names = cifar100_fine_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown CIFAR-100 fine class '" + std::string(name) + "'");
  return static_cast<int>(it - names.begin());
}

std::vector<std::string_view> SuperclassMap::members(int super) const {
  std::vector<std::string_view> out(kCifarFinePerSuper);
  for (int f = 0; f < kCifarFineClasses; ++f) {
    if (super_of[static_cast<std::size_t>(f)] == super) {
      out.at(static_cast<std::size_t>(rank_in_super[static_cast<std::size_t>(f)])) = cifar100_fine_names()[f];
    }
  }
  return out;
}

SuperclassMap default_superclass_map() {
  std::array<int, kCifarFineClasses> super_of;
  super_of.fill(-1);
  for (int s = 0; s < kCifarSuperclasses; ++s) {
    for (auto name : kGroups[static_cast<std::size_t>(s)]) super_of[static_cast<std::size_t>(fine_index(name))] = s;
  }
  return finish_map(super_of, "built-in map");
}

SuperclassMap parse_superclass_map(std::string_view text, const std::string& source) {
  std::array<int, kCifarFineClasses> super_of;
  super_of.fill(-1);
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(where + ": expected 'fine_name,super_index'");
    const std::string name = trim(std::string_view(line).substr(0, comma));
    const std::string idx = trim(std::string_view(line).substr(comma + 1));
    int f = 0;
    try {
      f = fine_index(name);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    std::size_t used = 0;
    int s = -1;
    try {
      s = std::stoi(idx, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != idx.size() || idx.empty() || s < 0 || s >= kCifarSuperclasses) {
      throw ConfigError(where + ": superclass index '" + idx + "' is not an integer in [0, 19]");
    }
    if (super_of[static_cast<std::size_t>(f)] != -1) throw ConfigError(where + ": '" + name + "' mapped twice");
    super_of[static_cast<std::size_t>(f)] = s;
  }
  return finish_map(super_of, source);
}

SuperclassMap load_superclass_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open superclass map " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_superclass_map(text, path.string());
}

std::string format_superclass_map(const SuperclassMap& map) {
  std::string out;
  for (int f = 0; f < kCifarFineClasses; ++f) {
    out += std::string(cifar100_fine_names()[f]) + "," + std::to_string(map.super_of[static_cast<std::size_t>(f)]) + "\n";
  }
  return out;
}

Dataset decode_cifar100(std::string_view bytes, const SuperclassMap& map, const std::string& split,
                        const std::string& source) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(source + ": size " + std::to_string(bytes.size()) + " is not a positive multiple of the " +
                      std::to_string(kCifarRecordBytes) + "-byte record at byte offset " +
                      std::to_string(bytes.size() - bytes.size() % kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.split = split;
  ds.num_primary = kCifarSuperclasses;
  ds.hierarchy_factor = kCifarFinePerSuper;
  std::vector<float> pixels(n * kCifarImageBytes);
  std::vector<int> sub(n);
  ds.primary_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t offset = i * kCifarRecordBytes;
    const int fine = static_cast<unsigned char>(bytes[offset + 1]);
    if (fine >= kCifarFineClasses) {
      throw FormatError(source + ": fine label " + std::to_string(fine) + " out of range at byte offset " +
                        std::to_string(offset + 1));
    }
    ds.primary_labels[i] = map.super_of[static_cast<std::size_t>(fine)];
    sub[i] = map.subclass_of(fine);
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) {
      pixels[i * kCifarImageBytes + p] = static_cast<float>(static_cast<unsigned char>(bytes[offset + 2 + p])) / 255.0f;
    }
  }
  ds.inputs = nn::Tensor({n, 3, 32, 32}, std::move(pixels));
  ds.subclass_labels = std::move(sub);
  ds.validate();
  return ds;
}

Dataset load_cifar100(const std::filesystem::path& path, const SuperclassMap& map, const std::string& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-100 file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cifar100(bytes, map, split, path.string());
}

ChannelStats channel_stats(const Dataset& dataset) {
  if (dataset.inputs.row_size() != kCifarImageBytes) throw DimensionError("channel_stats: expected 3×32×32 inputs");
  const auto m = dataset.inputs.matrix();
  ChannelStats s;
  const double count = static_cast<double>(m.rows()) * 1024.0;
  for (int c = 0; c < 3; ++c) {
    const auto block = m.middleCols(c * 1024, 1024).cast<double>();
    const double mean = block.sum() / count;
    const double var = (block.array() - mean).square().sum() / count;
    s.mean[static_cast<std::size_t>(c)] = mean;
    s.stddev[static_cast<std::size_t>(c)] = std::sqrt(var);
  }
  return s;
}

void normalize_channels(Dataset& dataset, const ChannelStats& stats) {
  if (dataset.inputs.row_size() != kCifarImageBytes) throw DimensionError("normalize_channels: expected 3×32×32 inputs");
  auto m = dataset.inputs.matrix();
  for (int c = 0; c < 3; ++c) {
    const double sd = stats.stddev[static_cast<std::size_t>(c)];
    if (!(sd > 0.0)) throw DomainError("normalize_channels: channel " + std::to_string(c) + " has zero variance");
    auto block = m.middleCols(c * 1024, 1024);
    block = ((block.array().cast<double>() - stats.mean[static_cast<std::size_t>(c)]) / sd).cast<float>();
  }
}

}  // namespace rlaux::data
