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

#include "ldp/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ldp {

using diff::Tape;
using diff::V;

namespace {

const char* family_name(ArchFamily f) {
  switch (f) {
    case ArchFamily::kMlp: return "mlp";
    case ArchFamily::kAttentionEncoder: return "attention_encoder";
    case ArchFamily::kTemporalUnet: return "temporal_unet";
  }
  return "?";
}

ArchFamily family_from(const std::string& s) {
  if (s == "mlp") return ArchFamily::kMlp;
  if (s == "attention_encoder") return ArchFamily::kAttentionEncoder;
  if (s == "temporal_unet") return ArchFamily::kTemporalUnet;
  throw ConfigError("unknown arch family: " + s);
}

const char* act_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kMish: return "mish";
    case Activation::kSilu: return "silu";
  }
  return "?";
}

Activation act_from(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "mish") return Activation::kMish;
  if (s == "silu") return Activation::kSilu;
  throw ConfigError("unknown activation: " + s);
}

int act_kind(Activation a) {
  switch (a) {
    case Activation::kRelu: return 0;
    case Activation::kMish: return 1;
    case Activation::kSilu: return 2;
  }
  return 0;
}

// Largest divisor of channels that does not exceed the requested group count.
int effective_groups(int requested, int channels) {
  int g = std::min(requested, channels);
  while (g > 1 && channels % g != 0) --g;
  return std::max(g, 1);
}

}  // namespace

Mat sinusoid_row(double pos, int dim) {
  Mat row(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    row(0, 2 * i) = std::sin(pos * freq);
    row(0, 2 * i + 1) = std::cos(pos * freq);
  }
  if (dim % 2 == 1) row(0, dim - 1) = std::sin(pos);
  return row;
}

Mat sinusoid_table(int len, int dim) {
  Mat table(len, dim);
  for (int t = 0; t < len; ++t) table.row(t) = sinusoid_row(t, dim).row(0);
  return table;
}

void glorot_fill(Mat& m, std::uint64_t seed, const std::string& name,
                 double fan_in, double fan_out) {
  if (fan_in <= 0) fan_in = static_cast<double>(m.rows());
  if (fan_out <= 0) fan_out = static_cast<double>(m.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(derive_seed(seed, name));
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
  }
}

Json ArchSpec::to_json() const {
  Json j;
  j["family"] = family_name(family);
  j["act"] = act_name(act);
  j["in_dim"] = in_dim;
  j["hidden"] = hidden;
  j["out_dim"] = out_dim;
  j["token_dim"] = token_dim;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["n_blocks"] = n_blocks;
  j["ff_mult"] = ff_mult;
  j["io_channels"] = io_channels;
  j["channels"] = channels;
  j["kernel"] = kernel;
  j["gn_groups"] = gn_groups;
  j["t_embed_dim"] = t_embed_dim;
  j["cond_dim"] = cond_dim;
  j["embed_hidden"] = embed_hidden;
  return j;
}

ArchSpec ArchSpec::from_json(const Json& j) {
  ArchSpec s;
  s.family = family_from(j.at("family").get<std::string>());
  s.act = act_from(j.at("act").get<std::string>());
  s.in_dim = j.at("in_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.out_dim = j.at("out_dim").get<int>();
  s.token_dim = j.at("token_dim").get<int>();
  s.d_model = j.at("d_model").get<int>();
  s.n_heads = j.at("n_heads").get<int>();
  s.n_blocks = j.at("n_blocks").get<int>();
  s.ff_mult = j.at("ff_mult").get<int>();
  s.io_channels = j.at("io_channels").get<int>();
  s.channels = j.at("channels").get<std::vector<int>>();
  s.kernel = j.at("kernel").get<int>();
  s.gn_groups = j.at("gn_groups").get<int>();
  s.t_embed_dim = j.at("t_embed_dim").get<int>();
  s.cond_dim = j.at("cond_dim").get<int>();
  s.embed_hidden = j.at("embed_hidden").get<int>();
  return s;
}

int ParamSet::add(std::string name, int rows, int cols) {
  items_.push_back(Item{std::move(name), Mat::Zero(rows, cols)});
  return static_cast<int>(items_.size()) - 1;
}

long ParamSet::total_count() const {
  long n = 0;
  for (const auto& it : items_) n += static_cast<long>(it.value.size());
  return n;
}

int ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Mat& ParamSet::by_name(const std::string& name) {
  const int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named " + name);
  return value(i);
}

const Mat& ParamSet::by_name(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named " + name);
  return value(i);
}

ParamSet ParamSet::zeros_like(const ParamSet& other) {
  ParamSet p;
  p.init_seed = other.init_seed;
  for (int i = 0; i < other.size(); ++i) {
    p.add(other.name(i), static_cast<int>(other.value(i).rows()),
          static_cast<int>(other.value(i).cols()));
  }
  return p;
}

namespace {

enum class InitKind { kGlorot, kZero, kOne };

struct Builder {
  ParamSet params;
  std::uint64_t seed;

  void add(const std::string& name, int rows, int cols, InitKind kind,
           double fan_in = 0, double fan_out = 0) {
    const int idx = params.add(name, rows, cols);
    Mat& m = params.value(idx);
    switch (kind) {
      case InitKind::kZero:
        break;
      case InitKind::kOne:
        m.setOnes();
        break;
      case InitKind::kGlorot: {
        if (fan_in <= 0) fan_in = rows;
        if (fan_out <= 0) fan_out = cols;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_seed(seed, name));
        for (long r = 0; r < m.rows(); ++r) {
          for (long c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
        }
        break;
      }
    }
  }

  void linear(const std::string& prefix, int in, int out) {
    add(prefix + ".w", in, out, InitKind::kGlorot);
    add(prefix + ".b", 1, out, InitKind::kZero);
  }

  void conv(const std::string& prefix, int in_c, int out_c, int kernel,
            InitKind kind = InitKind::kGlorot) {
    for (int j = 0; j < kernel; ++j) {
      add(prefix + ".w" + std::to_string(j), in_c, out_c, kind,
          double(in_c) * kernel, double(out_c) * kernel);
    }
    add(prefix + ".b", 1, out_c, InitKind::kZero);
  }
};

}  // namespace

ParamSet build_params(const ArchSpec& spec, std::uint64_t init_seed) {
  Builder b;
  b.seed = init_seed;
  b.params.init_seed = init_seed;
  switch (spec.family) {
    case ArchFamily::kMlp: {
      std::vector<int> dims;
      dims.push_back(spec.in_dim);
      for (int h : spec.hidden) dims.push_back(h);
      dims.push_back(spec.out_dim);
      for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        b.linear("fc" + std::to_string(i), dims[i], dims[i + 1]);
      }
      break;
    }
    case ArchFamily::kAttentionEncoder: {
      if (spec.d_model % spec.n_heads != 0) {
        throw ConfigError("d_model must be divisible by n_heads");
      }
      b.linear("in_proj", spec.token_dim, spec.d_model);
      for (int i = 0; i < spec.n_blocks; ++i) {
        const std::string p = "blk" + std::to_string(i);
        b.add(p + ".ln1.g", 1, spec.d_model, InitKind::kOne);
        b.add(p + ".ln1.b", 1, spec.d_model, InitKind::kZero);
        b.linear(p + ".attn.q", spec.d_model, spec.d_model);
        b.linear(p + ".attn.k", spec.d_model, spec.d_model);
        b.linear(p + ".attn.v", spec.d_model, spec.d_model);
        b.linear(p + ".attn.o", spec.d_model, spec.d_model);
        b.add(p + ".ln2.g", 1, spec.d_model, InitKind::kOne);
        b.add(p + ".ln2.b", 1, spec.d_model, InitKind::kZero);
        b.linear(p + ".ff1", spec.d_model, spec.ff_mult * spec.d_model);
        b.linear(p + ".ff2", spec.ff_mult * spec.d_model, spec.d_model);
      }
      break;
    }
    case ArchFamily::kTemporalUnet: {
      b.linear("t_embed.fc0", spec.t_embed_dim, spec.embed_hidden);
      b.linear("t_embed.fc1", spec.embed_hidden, spec.t_embed_dim);
      if (spec.cond_dim > 0) {
        b.linear("c_embed.fc0", spec.cond_dim, spec.embed_hidden);
        b.linear("c_embed.fc1", spec.embed_hidden, spec.t_embed_dim);
      }
      int in_c = spec.io_channels;
      for (std::size_t i = 0; i < spec.channels.size(); ++i) {
        const std::string p = "blk" + std::to_string(i);
        const int out_c = spec.channels[i];
        b.conv(p + ".conv1", in_c, out_c, spec.kernel);
        b.add(p + ".gn1.g", 1, out_c, InitKind::kOne);
        b.add(p + ".gn1.b", 1, out_c, InitKind::kZero);
        b.linear(p + ".emb", spec.t_embed_dim, out_c);
        b.conv(p + ".conv2", out_c, out_c, spec.kernel);
        b.add(p + ".gn2.g", 1, out_c, InitKind::kOne);
        b.add(p + ".gn2.b", 1, out_c, InitKind::kZero);
        if (in_c != out_c) {
          b.add(p + ".skip.w", in_c, out_c, InitKind::kGlorot);
        }
        in_c = out_c;
      }
      // Zero-initialized heads: an untrained net predicts zero noise. The
      // step-conditioned input gain gives the output a k-dependent linear
      // path in the input, which group-normalized conv blocks cannot carry.
      b.conv("out", in_c, spec.io_channels, 1, InitKind::kZero);
      b.add("in_gain.w", spec.t_embed_dim, spec.io_channels, InitKind::kZero);
      b.add("in_gain.b", 1, spec.io_channels, InitKind::kZero);
      break;
    }
  }
  return b.params;
}

V NetBinding::operator[](const std::string& name) const {
  const int i = params->index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named " + name);
  return pv[static_cast<std::size_t>(i)];
}

NetBinding bind_net(Tape& tape, const ArchSpec& spec, const ParamSet& params,
                    bool requires_grad) {
  NetBinding b;
  b.spec = spec;
  b.params = &params;
  b.pv.reserve(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    b.pv.push_back(tape.leaf_ref(&params.value(i), requires_grad));
  }
  return b;
}

namespace {

using Bound = NetBinding;

V linear(Tape& t, const Bound& p, const std::string& prefix, V x) {
  return t.add_rowvec(t.matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

V conv1d(Tape& t, const Bound& p, const std::string& prefix, V x, int kernel) {
  const int pad = (kernel - 1) / 2;
  V acc{-1};
  for (int j = 0; j < kernel; ++j) {
    V shifted = (j - pad == 0) ? x : t.shift_rows(x, j - pad);
    V term = t.matmul(shifted, p[prefix + ".w" + std::to_string(j)]);
    acc = acc.valid() ? t.add(acc, term) : term;
  }
  return t.add_rowvec(acc, p[prefix + ".b"]);
}

V group_norm(Tape& t, V x, int groups, V gain, V bias) {
  const int c = static_cast<int>(t.val(x).cols());
  const int g = effective_groups(groups, c);
  const int gs = c / g;
  V y{-1};
  if (g == 1) {
    y = t.normalize_all(x);
  } else {
    std::vector<V> parts;
    parts.reserve(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) {
      parts.push_back(t.normalize_all(t.slice_cols(x, i * gs, gs)));
    }
    y = t.concat_cols(parts);
  }
  return t.add_rowvec(t.mul_rowvec(y, gain), bias);
}

V layer_norm(Tape& t, const Bound& p, const std::string& prefix, V x) {
  return t.add_rowvec(t.mul_rowvec(t.layer_norm_rows(x), p[prefix + ".g"]),
                      p[prefix + ".b"]);
}

V mlp_forward(Tape& t, const ArchSpec& spec, const Bound& p, V x) {
  const int n_layers = static_cast<int>(spec.hidden.size()) + 1;
  V h = x;
  for (int i = 0; i < n_layers; ++i) {
    h = linear(t, p, "fc" + std::to_string(i), h);
    if (i + 1 < n_layers) h = t.activation(h, act_kind(spec.act));
  }
  return h;
}

V attention_forward(Tape& t, const ArchSpec& spec, const Bound& p, V tokens) {
  V x = linear(t, p, "in_proj", tokens);
  const int dh = spec.d_model / spec.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int i = 0; i < spec.n_blocks; ++i) {
    const std::string blk = "blk" + std::to_string(i);
    V h = layer_norm(t, p, blk + ".ln1", x);
    V q = linear(t, p, blk + ".attn.q", h);
    V k = linear(t, p, blk + ".attn.k", h);
    V v = linear(t, p, blk + ".attn.v", h);
    std::vector<V> head_outs;
    head_outs.reserve(static_cast<std::size_t>(spec.n_heads));
    for (int hd = 0; hd < spec.n_heads; ++hd) {
      V qh = t.slice_cols(q, hd * dh, dh);
      V kh = t.slice_cols(k, hd * dh, dh);
      V vh = t.slice_cols(v, hd * dh, dh);
      V att = t.row_softmax(t.scale(t.matmul(qh, kh, false, true), scale));
      head_outs.push_back(t.matmul(att, vh));
    }
    V attn = linear(t, p, blk + ".attn.o",
                    spec.n_heads == 1 ? head_outs[0] : t.concat_cols(head_outs));
    x = t.add(x, attn);
    V h2 = layer_norm(t, p, blk + ".ln2", x);
    V f = linear(t, p, blk + ".ff2",
                 t.activation(linear(t, p, blk + ".ff1", h2), act_kind(spec.act)));
    x = t.add(x, f);
  }
  return x;
}

V embed_mlp(Tape& t, const ArchSpec& spec, const Bound& p, const std::string& prefix, V in) {
  V h = t.activation(linear(t, p, prefix + ".fc0", in), act_kind(spec.act));
  return linear(t, p, prefix + ".fc1", h);
}

V unet_forward(Tape& t, const ArchSpec& spec, const Bound& p, V x, const NetAux* aux) {
  const double step = aux ? aux->timestep : 0.0;
  V t_sin = t.leaf(sinusoid_row(step, spec.t_embed_dim));
  V emb = embed_mlp(t, spec, p, "t_embed", t_sin);
  if (spec.cond_dim > 0 && aux && aux->condition != nullptr) {
    if (aux->condition->size() != spec.cond_dim) {
      throw std::invalid_argument("unet condition: expected dim " +
                                  std::to_string(spec.cond_dim) + ", got " +
                                  std::to_string(aux->condition->size()));
    }
    V c_in = t.leaf(aux->condition->transpose());
    emb = t.add(emb, embed_mlp(t, spec, p, "c_embed", c_in));
  }
  V cur = x;
  int in_c = spec.io_channels;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::string blk = "blk" + std::to_string(i);
    const int out_c = spec.channels[i];
    V h = conv1d(t, p, blk + ".conv1", cur, spec.kernel);
    h = group_norm(t, h, spec.gn_groups, p[blk + ".gn1.g"], p[blk + ".gn1.b"]);
    h = t.activation(h, act_kind(spec.act));
    h = t.add_rowvec(h, linear(t, p, blk + ".emb", emb));
    h = conv1d(t, p, blk + ".conv2", h, spec.kernel);
    h = group_norm(t, h, spec.gn_groups, p[blk + ".gn2.g"], p[blk + ".gn2.b"]);
    h = t.activation(h, act_kind(spec.act));
    V skip = (in_c != out_c) ? t.matmul(cur, p[blk + ".skip.w"]) : cur;
    cur = t.add(h, skip);
    in_c = out_c;
  }
  V out = t.add_rowvec(t.matmul(cur, p["out.w0"]), p["out.b"]);
  V gain = linear(t, p, "in_gain", emb);
  return t.add(out, t.mul_rowvec(x, gain));
}

}  // namespace

V net_apply(Tape& tape, const NetBinding& net, V input, const NetAux* aux) {
  const ArchSpec& spec = net.spec;
  switch (spec.family) {
    case ArchFamily::kMlp: {
      V in = input;
      if (aux && aux->condition != nullptr) {
        V c = tape.leaf(aux->condition->transpose());
        in = tape.concat_cols({in, c});
      }
      if (tape.val(in).cols() != spec.in_dim) {
        throw std::invalid_argument("mlp input: expected " + std::to_string(spec.in_dim) +
                                    " columns, got " + std::to_string(tape.val(in).cols()));
      }
      return mlp_forward(tape, spec, net, in);
    }
    case ArchFamily::kAttentionEncoder:
      if (tape.val(input).cols() != spec.token_dim) {
        throw std::invalid_argument("encoder input: expected " +
                                    std::to_string(spec.token_dim) + " columns, got " +
                                    std::to_string(tape.val(input).cols()));
      }
      return attention_forward(tape, spec, net, input);
    case ArchFamily::kTemporalUnet:
      if (tape.val(input).cols() != spec.io_channels) {
        throw std::invalid_argument("unet input: expected " +
                                    std::to_string(spec.io_channels) + " channels, got " +
                                    std::to_string(tape.val(input).cols()));
      }
      return unet_forward(tape, spec, net, input, aux);
  }
  throw std::logic_error("unreachable arch family");
}

Mat forward_eval(const ArchSpec& spec, const ParamSet& params, const Mat& input,
                 const NetAux* aux) {
  Tape tape;
  NetBinding net = bind_net(tape, spec, params, /*requires_grad=*/false);
  V out = net_apply(tape, net, tape.leaf(input), aux);
  return tape.val(out);
}

ParamSet grads_from(const diff::Tape& tape, const NetBinding& net) {
  ParamSet grads = ParamSet::zeros_like(*net.params);
  for (int i = 0; i < net.params->size(); ++i) {
    Mat gm = tape.grad(net.pv[static_cast<std::size_t>(i)]);
    if (!gm.allFinite()) {
      throw NumericError("non-finite gradient in " + net.params->name(i));
    }
    grads.value(i) = std::move(gm);
  }
  return grads;
}

BackwardResult backward_grad(const ArchSpec& spec, const ParamSet& params,
                             const Mat& input, const NetAux* aux,
                             const Mat& output_adjoint) {
  Tape tape;
  NetBinding net = bind_net(tape, spec, params, /*requires_grad=*/true);
  V in = tape.leaf(input, /*requires_grad=*/true);
  V out = net_apply(tape, net, in, aux);
  tape.backward(out, output_adjoint);
  BackwardResult res;
  res.param_grads = grads_from(tape, net);
  res.input_grad = tape.grad(in);
  if (!res.input_grad.allFinite()) {
    throw NumericError("non-finite gradient in input");
  }
  return res;
}

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

}  // namespace

double finite_diff_check_fn(
    const std::function<double(const ParamSet&, const Mat&)>& fn,
    const ParamSet& params, const Mat& input, const ParamSet& param_grads,
    const Mat& input_grad, double h, std::uint64_t seed, int coords_per_item) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  Rng rng(derive_seed(seed, "fd-coords"));
  ParamSet p = params;
  Mat in = input;
  double worst = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + h;
    const double up = fn(p, in);
    *slot = saved - h;
    const double dn = fn(p, in);
    *slot = saved;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic, fd));
  };
  for (int i = 0; i < p.size(); ++i) {
    Mat& m = p.value(i);
    const Mat& g = param_grads.value(i);
    const int n = static_cast<int>(m.size());
    const int probes = std::min(coords_per_item, n);
    for (int t = 0; t < probes; ++t) {
      const int idx = rng.uniform_int(0, n - 1);
      probe(m.data() + idx, g.data()[idx]);
    }
  }
  if (in.size() > 0) {
    const int n = static_cast<int>(in.size());
    const int probes = std::min(coords_per_item, n);
    for (int t = 0; t < probes; ++t) {
      const int idx = rng.uniform_int(0, n - 1);
      probe(in.data() + idx, input_grad.data()[idx]);
    }
  }
  return worst;
}

double finite_diff_check(const ArchSpec& spec, const ParamSet& params,
                         const Mat& input, const NetAux* aux, double h,
                         std::uint64_t seed, int coords_per_item) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  Rng proj_rng(derive_seed(seed, "fd-projection"));
  const Mat probe_out = forward_eval(spec, params, input, aux);
  Mat projection = proj_rng.normal_mat(static_cast<int>(probe_out.rows()),
                                       static_cast<int>(probe_out.cols()));
  BackwardResult bw = backward_grad(spec, params, input, aux, projection);
  auto fn = [&](const ParamSet& p, const Mat& x) {
    return forward_eval(spec, p, x, aux).cwiseProduct(projection).sum();
  };
  return finite_diff_check_fn(fn, params, input, bw.param_grads, bw.input_grad, h,
                              seed, coords_per_item);
}

AdamState make_adam(const ParamSet& params, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m.reserve(static_cast<std::size_t>(params.size()));
  s.v.reserve(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    s.m.push_back(Mat::Zero(params.value(i).rows(), params.value(i).cols()));
    s.v.push_back(Mat::Zero(params.value(i).rows(), params.value(i).cols()));
  }
  return s;
}

void adam_step_inplace(ParamSet& params, const ParamSet& grads, AdamState& state) {
  if (params.size() != grads.size() ||
      static_cast<std::size_t>(params.size()) != state.m.size()) {
    throw std::invalid_argument("adam_step: shape mismatch between params/grads/state");
  }
  state.step += 1;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (int i = 0; i < params.size(); ++i) {
    const Mat& g = grads.value(i);
    Mat& m = state.m[static_cast<std::size_t>(i)];
    Mat& v = state.v[static_cast<std::size_t>(i)];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    params.value(i).array() -=
        state.cfg.lr * m_hat.array() / (v_hat.array().sqrt() + state.cfg.eps);
  }
}

ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& state) {
  ParamSet next = params;
  adam_step_inplace(next, grads, state);
  return next;
}

double cosine_lr(double base, int step, int total_steps) {
  if (total_steps <= 1) return base;
  const double floor = 0.1 * base;
  const double frac = static_cast<double>(step - 1) / (total_steps - 1);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

// -- checkpoint io ------------------------------------------------------------

ParamSet& Checkpoint::section(const std::string& name) {
  for (auto& [n, p] : sections) {
    if (n == name) return p;
  }
  throw ArtifactError("checkpoint has no section: " + name);
}

const ParamSet& Checkpoint::section(const std::string& name) const {
  for (const auto& [n, p] : sections) {
    if (n == name) return p;
  }
  throw ArtifactError("checkpoint has no section: " + name);
}

bool Checkpoint::has_section(const std::string& name) const {
  for (const auto& [n, p] : sections) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const ParamSet*>>& sections,
                     const Json& meta) {
  std::string payload;
  Json header;
  header["format"] = "ldp-ckpt-v1";
  header["meta"] = meta;
  Json jsections = Json::array();
  for (const auto& [name, ps] : sections) {
    Json jsec;
    jsec["name"] = name;
    jsec["init_seed"] = ps->init_seed;
    Json jitems = Json::array();
    for (int i = 0; i < ps->size(); ++i) {
      const Mat& m = ps->value(i);
      Json ji;
      ji["name"] = ps->name(i);
      ji["rows"] = m.rows();
      ji["cols"] = m.cols();
      jitems.push_back(ji);
      for (long r = 0; r < m.rows(); ++r) {
        for (long c = 0; c < m.cols(); ++c) {
          const double d = m(r, c);
          char bytes[sizeof(double)];
          std::memcpy(bytes, &d, sizeof(double));
          payload.append(bytes, sizeof(double));
        }
      }
    }
    jsec["items"] = jitems;
    jsections.push_back(jsec);
  }
  header["sections"] = jsections;
  header["payload_sha256"] = sha256_hex(payload);
  HashingWriter w(path);
  w.write(header.dump());
  w.write("\n");
  w.write(payload);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open checkpoint: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw ArtifactError("checkpoint missing header: " + path.string());
  }
  Json header = Json::parse(header_line, nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded() || !header.is_object() ||
      header.value("format", "") != "ldp-ckpt-v1" || !header.contains("sections") ||
      !header.contains("payload_sha256") || !header.contains("meta")) {
    throw ArtifactError("corrupt or unknown checkpoint header: " + path.string());
  }
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>()) {
    throw ArtifactError("checkpoint payload hash mismatch: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  ckpt.payload_hash = header.at("payload_sha256").get<std::string>();
  std::size_t off = 0;
  for (const Json& jsec : header.at("sections")) {
    if (!jsec.contains("items") || !jsec.contains("name") || !jsec.contains("init_seed")) {
      throw ArtifactError("corrupt checkpoint section header: " + path.string());
    }
    ParamSet ps;
    ps.init_seed = jsec.at("init_seed").get<std::uint64_t>();
    for (const Json& ji : jsec.at("items")) {
      const int rows = ji.at("rows").get<int>();
      const int cols = ji.at("cols").get<int>();
      const int idx = ps.add(ji.at("name").get<std::string>(), rows, cols);
      Mat& m = ps.value(idx);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          if (off + sizeof(double) > payload.size()) {
            throw ArtifactError("checkpoint payload truncated: " + path.string());
          }
          double d;
          std::memcpy(&d, payload.data() + off, sizeof(double));
          off += sizeof(double);
          m(r, c) = d;
        }
      }
    }
    ckpt.sections.emplace_back(jsec.at("name").get<std::string>(), std::move(ps));
  }
  if (off != payload.size()) {
    throw ArtifactError("checkpoint payload has trailing bytes: " + path.string());
  }
  return ckpt;
}

}  // namespace ldp
