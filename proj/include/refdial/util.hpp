#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace refdial {

// 64-bit FNV-1a. Stable across platforms, used for all fingerprints.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) noexcept;
  Fnv1a& update_byte(unsigned char b) noexcept;
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string base64_encode(std::span<const unsigned char> bytes);

// Number of Unicode code points in a UTF-8 string (continuation bytes skipped).
std::size_t utf8_length(std::string_view s) noexcept;

std::string read_text_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Runs fn(i) for i in [0, count) on up to `workers` threads. The first exception
// thrown by any task is rethrown after all workers have joined.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace refdial
