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

#ifndef LDP_NETS_HPP_
#define LDP_NETS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ldp/common.hpp"
#include "ldp/jsonio.hpp"
#include "ldp/tape.hpp"

namespace ldp {

enum class ArchFamily { kMlp, kAttentionEncoder, kTemporalUnet };
enum class Activation { kRelu, kMish, kSilu };

// One spec instantiates to a deterministic set of parameter shapes; unused
// fields for a family stay at their defaults.
struct ArchSpec {
  ArchFamily family = ArchFamily::kMlp;
  Activation act = Activation::kRelu;

  // mlp: in_dim -> hidden... -> out_dim, activation between layers.
  int in_dim = 0;
  std::vector<int> hidden;
  int out_dim = 0;

  // attention_encoder: non-causal pre-LN blocks over (T x token_dim) tokens.
  int token_dim = 0;
  int d_model = 0;
  int n_heads = 1;
  int n_blocks = 0;
  int ff_mult = 2;

  // temporal_unet: residual temporal-conv blocks over (N x io_channels),
  // with sinusoidal step embedding and an optional condition pathway.
  int io_channels = 0;
  std::vector<int> channels;
  int kernel = 3;
  int gn_groups = 8;
  int t_embed_dim = 0;
  int cond_dim = 0;
  int embed_hidden = 0;

  Json to_json() const;
  static ArchSpec from_json(const Json& j);
};

// Named parameter matrices in a fixed order. Values are plain data; training
// loops own their set exclusively and updates go through adam_step.
class ParamSet {
 public:
  int add(std::string name, int rows, int cols);
  int size() const { return static_cast<int>(items_.size()); }
  long total_count() const;

  Mat& value(int i) { return items_[static_cast<std::size_t>(i)].value; }
  const Mat& value(int i) const { return items_[static_cast<std::size_t>(i)].value; }
  const std::string& name(int i) const { return items_[static_cast<std::size_t>(i)].name; }
  int index_of(const std::string& name) const;  // -1 when absent
  Mat& by_name(const std::string& name);
  const Mat& by_name(const std::string& name) const;

  // Same names/shapes, all zeros.
  static ParamSet zeros_like(const ParamSet& other);

  std::uint64_t init_seed = 0;

 private:
  struct Item {
    std::string name;
    Mat value;
  };
  std::vector<Item> items_;
};

// Shape-building plus deterministic initialization from init_seed.
ParamSet build_params(const ArchSpec& spec, std::uint64_t init_seed);

struct NetAux {
  double timestep = 0.0;
  const Vec* condition = nullptr;
};

// A network bound onto a tape: parameter leaves are references into the
// ParamSet (which must outlive the tape). One binding may feed any number of
// forward passes on the same tape; gradients then accumulate per parameter.
struct NetBinding {
  ArchSpec spec;  // by value: callers often pass freshly built specs
  const ParamSet* params = nullptr;
  std::vector<diff::V> pv;

  diff::V operator[](const std::string& name) const;
};

NetBinding bind_net(diff::Tape& tape, const ArchSpec& spec, const ParamSet& params,
                    bool requires_grad = true);

diff::V net_apply(diff::Tape& tape, const NetBinding& net, diff::V input,
                  const NetAux* aux = nullptr);

// Collects accumulated parameter gradients after tape.backward().
ParamSet grads_from(const diff::Tape& tape, const NetBinding& net);

// Deterministic Glorot-uniform fill keyed by (seed, name); used for the few
// parameters composed outside build_params.
void glorot_fill(Mat& m, std::uint64_t seed, const std::string& name,
                 double fan_in = 0, double fan_out = 0);

// Transformer-style sin/cos features.
Mat sinusoid_row(double pos, int dim);
Mat sinusoid_table(int len, int dim);

// Pure convenience wrappers over one-off tapes.
Mat forward_eval(const ArchSpec& spec, const ParamSet& params, const Mat& input,
                 const NetAux* aux = nullptr);

struct BackwardResult {
  ParamSet param_grads;
  Mat input_grad;
};
BackwardResult backward_grad(const ArchSpec& spec, const ParamSet& params,
                             const Mat& input, const NetAux* aux,
                             const Mat& output_adjoint);

// Compares reverse-mode gradients against central differences of a random
// scalar projection of the output, over a seeded coordinate subset of both
// parameters and input. Returns the max relative error.
double finite_diff_check(const ArchSpec& spec, const ParamSet& params,
                         const Mat& input, const NetAux* aux, double h,
                         std::uint64_t seed, int coords_per_item = 12);

// Generic version for composite losses: fn must be a pure scalar function of
// (params, input); grads are whatever the caller computed for them.
double finite_diff_check_fn(
    const std::function<double(const ParamSet&, const Mat&)>& fn,
    const ParamSet& params, const Mat& input, const ParamSet& param_grads,
    const Mat& input_grad, double h, std::uint64_t seed, int coords_per_item = 12);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<Mat> m, v;
};

AdamState make_adam(const ParamSet& params, AdamConfig cfg);
// Bias-corrected update; returns the new parameters and advances state.
ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& state);
void adam_step_inplace(ParamSet& params, const ParamSet& grads, AdamState& state);

// Cosine decay from base to 10% of base across the run.
double cosine_lr(double base, int step, int total_steps);

// Checkpoint file: one JSON header line (sections, shapes, metadata, payload
// hash) followed by raw little-endian doubles in section/item order.
struct Checkpoint {
  std::vector<std::pair<std::string, ParamSet>> sections;
  Json meta;
  std::string payload_hash;
  ParamSet& section(const std::string& name);
  const ParamSet& section(const std::string& name) const;
  bool has_section(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const ParamSet*>>& sections,
                     const Json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ldp

#endif  // LDP_NETS_HPP_
