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

#ifndef LDP_COMMON_HPP_
#define LDP_COMMON_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ldp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or hash-stale pipeline artifact (CLI exit code 3).
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numerical invariants (CLI exit code 4).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Counter-based deterministic generator (splitmix64 core). All entropy in the
// project flows from one top-level seed through named substreams, so two runs
// with the same config produce byte-identical artifacts. std:: distributions
// are avoided on purpose: their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive integer range.
  int uniform_int(int lo, int hi);
  // Standard normal via Box-Muller (two uniforms per call, no cached spare).
  double normal();

  void fill_normal(Mat& m);
  Mat normal_mat(int rows, int cols);
  Vec normal_vec(int n);

 private:
  std::uint64_t state_;
};

// Stable seed derivation for named substreams: hash of (seed, label, index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index = 0);

inline Rng substream(std::uint64_t seed, std::string_view label,
                     std::uint64_t index = 0) {
  return Rng(derive_seed(seed, label, index));
}

// Worker cap: min(LP_THREADS, hardware_concurrency); at least 1.
int worker_threads();

// Runs fn(i) for i in [0, n). Work items must be independent and write only
// to their own slots; chunk assignment is deterministic but execution order
// is not, so no item may reduce into shared state.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace ldp

#endif  // LDP_COMMON_HPP_
