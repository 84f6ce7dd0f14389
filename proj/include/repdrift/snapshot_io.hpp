#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "repdrift/continual.hpp"
#include "repdrift/errors.hpp"

namespace repdrift {

// RSNP layout: "RSNP", u32 version, u64 rows, u64 cols, rows*cols f64, rows u32 labels.
// All integers and floats little-endian.
inline constexpr std::array<char, 4> kSnapshotMagic{'R', 'S', 'N', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <class T>
T get_le(const std::vector<unsigned char>& in, std::size_t& at, const char* what) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (in.size() - at < sizeof(U)) throw FormatError(std::string("RSNP: truncated ") + what, at);
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in[at + i]) << (8 * i);
  at += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<unsigned char> encode_snapshot(const Matrix& h, std::span<const std::uint32_t> labels) {
  require(labels.size() == h.rows(), "encode_snapshot: label count does not match rows");
  std::vector<unsigned char> out(kSnapshotMagic.begin(), kSnapshotMagic.end());
  out.reserve(24 + 8 * h.size() + 4 * labels.size());
  detail::put_le(out, kSnapshotVersion);
  detail::put_le(out, static_cast<std::uint64_t>(h.rows()));
  detail::put_le(out, static_cast<std::uint64_t>(h.cols()));
  for (double v : h.data()) detail::put_le(out, v);
  for (std::uint32_t l : labels) detail::put_le(out, l);
  return out;
}

struct DecodedSnapshot {
  Matrix h;
  std::vector<std::uint32_t> labels;
};

inline DecodedSnapshot decode_snapshot(const std::vector<unsigned char>& in) {
  if (in.size() < 4 || !std::equal(kSnapshotMagic.begin(), kSnapshotMagic.end(), in.begin()))
    throw FormatError("RSNP: bad magic", 0);
  std::size_t at = 4;
  const auto version = detail::get_le<std::uint32_t>(in, at, "version");
  if (version != kSnapshotVersion)
    throw FormatError("RSNP: unsupported version " + std::to_string(version), 4);
  const auto rows = detail::get_le<std::uint64_t>(in, at, "row count");
  const auto cols = detail::get_le<std::uint64_t>(in, at, "column count");
  const std::uint64_t remaining = in.size() - at;
  if (rows > std::numeric_limits<std::uint64_t>::max() / (8 * std::max<std::uint64_t>(cols, 1) + 4) ||
      cols > std::numeric_limits<std::uint64_t>::max() / 16)
    throw FormatError("RSNP: implausible dimensions", 8);
  const std::uint64_t expected = rows * cols * 8 + rows * 4;
  if (remaining < expected) throw FormatError("RSNP: truncated payload", at + std::min(remaining, rows * cols * 8));
  if (remaining > expected) throw FormatError("RSNP: trailing bytes", at + expected);
  DecodedSnapshot out{Matrix(rows, cols), std::vector<std::uint32_t>(rows)};
  for (double& v : out.h.data()) v = detail::get_le<double>(in, at, "payload");
  for (auto& l : out.labels) l = detail::get_le<std::uint32_t>(in, at, "labels");
  if (!out.h.all_finite()) throw FormatError("RSNP: non-finite payload value", 24);
  return out;
}

inline void write_snapshot(const std::filesystem::path& path, const Matrix& h,
                           std::span<const std::uint32_t> labels) {
  const auto bytes = encode_snapshot(h, labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write snapshot " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline DecodedSnapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot " + path.string(), 0);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

inline std::string snapshot_filename(const SnapshotKey& key) {
  return "t" + std::to_string(key.task) + "_p" + std::to_string(key.phase) + "_" +
         std::string(to_string(key.split)) + ".rsnp";
}

/// Writes every snapshot plus a `store.meta` key=value sidecar.
inline void save_store(const std::filesystem::path& dir, const SnapshotStore& store) {
  std::filesystem::create_directories(dir);
  std::ostringstream meta;
  meta << "format = RSNP\n";
  meta << "version = " << kSnapshotVersion << "\n";
  meta << "seed = " << store.metadata.seed << "\n";
  meta << "widths = ";
  for (std::size_t i = 0; i < store.metadata.widths.size(); ++i)
    meta << (i ? "," : "") << store.metadata.widths[i];
  meta << "\n";
  meta << "config_hash = " << store.metadata.config_hash << "\n";
  meta << "num_tasks = " << store.metadata.num_tasks << "\n";
  for (const auto& [key, snap] : store.cells()) {
    const std::string file = snapshot_filename(key);
    write_snapshot(dir / file, snap.h, snap.labels);
    meta << "snapshot = " << key.task << "," << key.phase << "," << to_string(key.split) << ","
         << snap.num_classes << "," << file << "\n";
  }
  std::ofstream out(dir / "store.meta", std::ios::trunc);
  out << meta.str();
}

inline SnapshotStore load_store(const std::filesystem::path& dir) {
  std::ifstream in(dir / "store.meta");
  if (!in) throw FormatError("cannot open " + (dir / "store.meta").string(), 0);
  SnapshotStore store;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("store.meta: expected 'key = value'", line_start);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "seed") {
      store.metadata.seed = std::stoull(value);
    } else if (key == "num_tasks") {
      store.metadata.num_tasks = std::stoull(value);
    } else if (key == "config_hash") {
      store.metadata.config_hash = value;
    } else if (key == "widths") {
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) store.metadata.widths.push_back(std::stoull(tok));
    } else if (key == "snapshot") {
      std::stringstream ss(value);
      std::string task, phase, split, classes, file;
      if (!std::getline(ss, task, ',') || !std::getline(ss, phase, ',') || !std::getline(ss, split, ',') ||
          !std::getline(ss, classes, ',') || !std::getline(ss, file))
        throw FormatError("store.meta: malformed snapshot entry", line_start);
      auto decoded = read_snapshot(dir / file);
      store.put(RepresentationSnapshot{std::move(decoded.h), std::move(decoded.labels),
                                       static_cast<std::uint32_t>(std::stoul(task)), std::stoi(phase),
                                       split_from_string(split), static_cast<std::uint32_t>(std::stoul(classes))});
    } else if (key != "format" && key != "version") {
      throw FormatError("store.meta: unknown key '" + key + "'", line_start);
    }
  }
  return store;
}

}  // namespace repdrift
