#include "rlaux/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rlaux/error.hpp"

namespace rlaux {

namespace fs = std::filesystem;

Snapshot snapshot_parameters(std::span<const nn::Parameter<float>* const> params, int epoch) {
  Snapshot snap;
  snap.epoch = epoch;
  snap.entries.reserve(params.size());
  for (const auto* p : params) {
    snap.entries.push_back({p->name, p->value.rows(), p->value.cols(),
                            std::vector<float>(p->value.data(), p->value.data() + p->value.size())});
  }
  return snap;
}

void restore_parameters(std::span<nn::Parameter<float>* const> params, const Snapshot& snap) {
  if (params.size() != snap.entries.size()) {
    throw CheckpointError("restore: snapshot has " + std::to_string(snap.entries.size()) + " parameters, network has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = snap.entries[i];
    auto* p = params[i];
    if (e.name != p->name || e.rows != p->value.rows() || e.cols != p->value.cols()) {
      throw CheckpointError("restore: parameter " + p->name + " (" + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()) + ") does not match snapshot entry " + e.name + " (" +
                            std::to_string(e.rows) + "x" + std::to_string(e.cols) + ")");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::memcpy(params[i]->value.data(), snap.entries[i].values.data(), snap.entries[i].values.size() * sizeof(float));
    params[i]->grad.setZero();
  }
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text) { return fnv1a(std::as_bytes(std::span(text.data(), text.size()))); }

std::uint64_t parameter_hash(const Snapshot& snap) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : snap.entries) h = fnv1a(std::as_bytes(std::span(e.values)), h);
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return s;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

fs::path blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  p += ".bin";
  return p;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Snapshot& snap, std::uint64_t config_hash) {
  std::string blob;
  std::ostringstream manifest;
  manifest << "rlaux-checkpoint 1\n"
           << "epoch " << snap.epoch << "\n"
           << "config_hash " << hex64(config_hash) << "\n"
           << "blob " << blob_path(path).filename().string() << "\n";
  std::ostringstream params;
  for (const auto& e : snap.entries) {
    const std::size_t bytes = e.values.size() * sizeof(float);
    params << "param " << e.name << " " << e.rows << "x" << e.cols << " offset " << blob.size() << " bytes " << bytes
           << "\n";
    blob.append(reinterpret_cast<const char*>(e.values.data()), bytes);
  }
  manifest << "blob_bytes " << blob.size() << "\n"
           << "params " << snap.entries.size() << "\n"
           << params.str();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(blob_path(path), blob);
  write_file_atomic(path, manifest.str());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  auto fail = [&](int line, const std::string& msg) -> CheckpointError {
    return CheckpointError(path.string() + ":" + std::to_string(line) + ": " + msg);
  };
  LoadedCheckpoint out;
  std::string line, key;
  int lineno = 0;
  std::size_t blob_bytes = 0, expected_params = 0;
  struct Slot {
    std::size_t offset, bytes;
  };
  std::vector<Slot> slots;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    ls >> key;
    if (lineno == 1) {
      int version = 0;
      ls >> version;
      if (key != "rlaux-checkpoint" || version != 1) throw fail(lineno, "not an rlaux checkpoint manifest");
      continue;
    }
    if (key == "epoch") {
      ls >> out.snapshot.epoch;
    } else if (key == "config_hash") {
      std::string hex;
      ls >> hex;
      out.config_hash = std::stoull(hex, nullptr, 16);
    } else if (key == "blob") {
      // The blob always sits next to the manifest; the recorded name is informational.
    } else if (key == "blob_bytes") {
      ls >> blob_bytes;
    } else if (key == "params") {
      ls >> expected_params;
    } else if (key == "param") {
      Snapshot::Entry e;
      std::string dims, kw1, kw2;
      Slot s{};
      ls >> e.name >> dims >> kw1 >> s.offset >> kw2 >> s.bytes;
      const auto x = dims.find('x');
      if (!ls || kw1 != "offset" || kw2 != "bytes" || x == std::string::npos) throw fail(lineno, "malformed param line");
      e.rows = std::stol(dims.substr(0, x));
      e.cols = std::stol(dims.substr(x + 1));
      if (s.bytes != static_cast<std::size_t>(e.rows * e.cols) * sizeof(float)) {
        throw fail(lineno, "byte count does not match shape for " + e.name);
      }
      out.snapshot.entries.push_back(std::move(e));
      slots.push_back(s);
    } else if (!key.empty()) {
      throw fail(lineno, "unknown manifest key '" + key + "'");
    }
    if (!ls && key != "blob") throw fail(lineno, "malformed line");
  }
  if (slots.size() != expected_params) throw fail(lineno, "parameter count mismatch");

  std::ifstream blob(blob_path(path), std::ios::binary);
  if (!blob) throw IoError("cannot open checkpoint blob " + blob_path(path).string());
  std::string bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != blob_bytes) {
    throw CheckpointError(blob_path(path).string() + ": expected " + std::to_string(blob_bytes) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].offset + slots[i].bytes > bytes.size()) {
      throw CheckpointError(blob_path(path).string() + ": parameter " + out.snapshot.entries[i].name +
                            " extends past end of blob at byte offset " + std::to_string(slots[i].offset));
    }
    auto& values = out.snapshot.entries[i].values;
    values.resize(slots[i].bytes / sizeof(float));
    std::memcpy(values.data(), bytes.data() + slots[i].offset, slots[i].bytes);
  }
  return out;
}

}  // namespace rlaux
