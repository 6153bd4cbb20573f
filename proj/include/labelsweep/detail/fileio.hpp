#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "labelsweep/error.hpp"

namespace labelsweep::detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes through a sibling temp file and renames, so readers never observe
// a half-written file. Missing parent directories are created.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("i/o failure: cannot create " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error("i/o failure: short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("i/o failure: cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  write_file_atomic(path, std::span<const char>(reinterpret_cast<const char*>(data.data()), data.size()));
}

// rename(2) with a copy+remove fallback when source and destination live on
// different filesystems.
inline void move_file(const std::filesystem::path& from, const std::filesystem::path& to) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(to.parent_path(), ec);
  if (ec) throw Error("i/o failure: cannot create " + to.parent_path().string() + ": " + ec.message());
  fs::rename(from, to, ec);
  if (!ec) return;
  if (ec != std::errc::cross_device_link)
    throw Error("i/o failure: cannot move " + from.string() + " -> " + to.string() + ": " + ec.message());
  fs::copy_file(from, to, fs::copy_options::none, ec);
  if (ec) throw Error("i/o failure: cannot copy " + from.string() + " -> " + to.string() + ": " + ec.message());
  fs::remove(from, ec);
  if (ec) throw Error("i/o failure: cannot remove " + from.string() + ": " + ec.message());
}

}  // namespace labelsweep::detail
