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

#ifndef LDP_CONFIG_HPP_
#define LDP_CONFIG_HPP_

#include <string>
#include <vector>

#include "ldp/jsonio.hpp"

namespace ldp {

// A single versioned JSON document drives every pipeline stage. The defaults
// document doubles as the knob registry: unknown keys in user configs are
// errors, every key the code consumes is present in the resolved dump, and a
// startup check fails if a registered knob is never consumed.
//
// Values that copy the paper's settings are tagged "paper" in the dump;
// everything else is "desk-scale".
class ExperimentConfig {
 public:
  // Parses defaults <- file <- overrides ("a.b.c=json-value" items).
  static ExperimentConfig load(const Json& file_doc,
                               const std::vector<std::string>& overrides = {});
  static ExperimentConfig load_file(const std::string& path,
                                    const std::vector<std::string>& overrides = {});
  static Json defaults();

  const Json& resolved() const { return resolved_; }
  // Resolved config plus per-key provenance (default / file / override).
  Json resolved_with_sources() const;

  // Typed accessors (paths are dotted). Marks the key as consumed.
  int geti(const std::string& path) const;
  double getd(const std::string& path) const;
  bool getb(const std::string& path) const;
  std::string gets(const std::string& path) const;
  std::vector<int> getvi(const std::string& path) const;
  std::vector<double> getvd(const std::string& path) const;
  std::vector<std::uint64_t> getvu(const std::string& path) const;
  Json getj(const std::string& path) const;

  std::uint64_t seed() const;
  std::string out_dir() const;

  // Digest of everything except output location; stages key their caches and
  // manifests on the digest of the subset of knobs they consume.
  std::string digest() const;
  std::string digest_of(const std::vector<std::string>& key_prefixes) const;

  // Throws if any registered knob was never consumed by validate-time reads.
  void check_all_consumed() const;

 private:
  Json resolved_;
  Json sources_;
  mutable std::vector<std::string> consumed_;
};

}  // namespace ldp

#endif  // LDP_CONFIG_HPP_
