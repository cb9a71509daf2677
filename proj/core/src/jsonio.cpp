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

#include "ldp/jsonio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ldp {

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw NumericError("cannot serialize non-finite double");
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string json_vec(const Vec& v) {
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v(i));
  }
  out += "]";
  return out;
}

std::string json_mat_rows(const Mat& m) {
  std::string out = "[";
  for (int r = 0; r < m.rows(); ++r) {
    if (r) out += ",";
    out += "[";
    for (int c = 0; c < m.cols(); ++c) {
      if (c) out += ",";
      out += format_double(m(r, c));
    }
    out += "]";
  }
  out += "]";
  return out;
}

Vec parse_vec(const Json& a) {
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = a[i].get<double>();
  return v;
}

Mat parse_mat_rows(const Json& a) {
  const int rows = static_cast<int>(a.size());
  if (rows == 0) return Mat(0, 0);
  const int cols = static_cast<int>(a[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(a[r].size()) != cols) {
      throw std::runtime_error("ragged matrix rows in JSON");
    }
    for (int c = 0; c < cols; ++c) m(r, c) = a[r][c].get<double>();
  }
  return m;
}

struct HashingWriter::Impl {
  std::ofstream out;
  Sha256 hash;
  bool finished = false;
};

HashingWriter::HashingWriter(const std::filesystem::path& path) : impl_(new Impl) {
  std::filesystem::create_directories(path.parent_path());
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    throw ArtifactError("cannot open for writing: " + path.string());
  }
}

HashingWriter::~HashingWriter() { delete impl_; }

void HashingWriter::write(const std::string& chunk) {
  impl_->out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  impl_->hash.update(chunk);
}

std::string HashingWriter::finish() {
  impl_->out.close();
  impl_->finished = true;
  return impl_->hash.hex_digest();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

Json load_json_file(const std::filesystem::path& path) {
  return Json::parse(read_file(path));
}

}  // namespace ldp
