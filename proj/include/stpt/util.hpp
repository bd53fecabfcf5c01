// stpt/util.hpp
//
// Copyright 2026 The stpt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stpt {

inline constexpr uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t h = kFnvOffset) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(buf, 8, h);
}

std::string to_hex(uint64_t v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string lowercase(std::string_view s);

// Canonical decimal formatting used in fingerprints and text artifacts:
// shortest round-trip representation of a double.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, std::string_view contents);
void append_text_file(const std::filesystem::path& p, std::string_view contents);
std::vector<unsigned char> read_binary_file(const std::filesystem::path& p);
void write_binary_file(const std::filesystem::path& p, const void* data, size_t n);

bool env_flag_set(const char* name);

}  // namespace stpt
