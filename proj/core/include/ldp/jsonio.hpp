// Copyright 2026 the ldplan authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LDP_JSONIO_HPP_
#define LDP_JSONIO_HPP_

#include <json.hpp>

#include <filesystem>
#include <string>

#include "ldp/common.hpp"
#include "ldp/sha256.hpp"

namespace ldp {

using Json = nlohmann::json;

// Decimal with 17 significant digits: enough to round-trip any IEEE-754
// double exactly through strtod.
std::string format_double(double v);

// Hand-assembled JSON number arrays so floats keep the 17-digit format
// (nlohmann would re-render them).
std::string json_vec(const Vec& v);
std::string json_mat_rows(const Mat& m);  // array of row arrays

Vec parse_vec(const Json& a);
Mat parse_mat_rows(const Json& a);

// Line-oriented file writer that hashes every byte it emits.
class HashingWriter {
 public:
  explicit HashingWriter(const std::filesystem::path& path);
  ~HashingWriter();
  void write(const std::string& chunk);
  void write_line(const std::string& line) { write(line + "\n"); }
  // Closes the file and returns the content hash of all bytes written.
  std::string finish();

 private:
  struct Impl;
  Impl* impl_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
Json load_json_file(const std::filesystem::path& path);

}  // namespace ldp

#endif  // LDP_JSONIO_HPP_
