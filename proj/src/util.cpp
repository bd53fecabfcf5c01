// util.cpp
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

#include "stpt/util.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stpt/error.hpp"
#include "stpt/rng.hpp"

namespace stpt {

const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kIntegrity: return "integrity";
    case ErrorCategory::kState: return "state";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kInternal: return "internal";
  }
  return "unknown";
}

std::string Rng::state_string() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  require(!is.fail(), ErrorCategory::kParse, "bad rng state string");
}

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = fnv1a_u64(master);
  h = fnv1a(tag, h);
  h = fnv1a_u64(a, h);
  h = fnv1a_u64(b, h);
  h = fnv1a_u64(c, h);
  // splitmix64 finalizer to spread FNV output over the full state space
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::string format_double(double v) {
  // Shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = std::strtod(buf, nullptr);
    if (back == v) return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot open file: " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCategory::kIo, "cannot write file: " + p.string());
  f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  require(f.good(), ErrorCategory::kIo, "short write: " + p.string());
}

void append_text_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::app);
  require(f.good(), ErrorCategory::kIo, "cannot append to file: " + p.string());
  f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::vector<unsigned char> read_binary_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot open file: " + p.string());
  f.seekg(0, std::ios::end);
  std::streamsize n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  require(f.good(), ErrorCategory::kIo, "short read: " + p.string());
  return buf;
}

void write_binary_file(const std::filesystem::path& p, const void* data, size_t n) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCategory::kIo, "cannot write file: " + p.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  require(f.good(), ErrorCategory::kIo, "short write: " + p.string());
}

bool env_flag_set(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && std::strcmp(v, "0") != 0 && std::strcmp(v, "") != 0;
}

}  // namespace stpt
