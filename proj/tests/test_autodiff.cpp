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

#include <doctest.h>

#include <cmath>

#include "ldp/nets.hpp"
#include "ldp/tape.hpp"

using namespace ldp;
using diff::Tape;
using diff::V;

namespace {

// Central-difference gradient of a scalar tape program, one coordinate at a
// time. The builder must be a pure function of the input matrix.
Mat fd_grad(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (long i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double dn = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - dn) / (2 * h);
  }
  return g;
}

void check_op_grad(const std::function<V(Tape&, V)>& op, const Mat& x0,
                   double tol = 1e-6) {
  auto scalar = [&](const Mat& x) {
    Tape t;
    V in = t.leaf(x, true);
    // Fixed quadratic readout so every output entry matters differently.
    V out = op(t, in);
    Mat w(t.val(out).rows(), t.val(out).cols());
    for (long i = 0; i < w.size(); ++i) w.data()[i] = 0.25 + 0.5 * (i % 7);
    V loss = t.sum_all(t.mul(out, t.leaf(w)));
    return t.val(loss)(0, 0);
  };
  Tape t;
  V in = t.leaf(x0, true);
  V out = op(t, in);
  Mat w(t.val(out).rows(), t.val(out).cols());
  for (long i = 0; i < w.size(); ++i) w.data()[i] = 0.25 + 0.5 * (i % 7);
  V loss = t.sum_all(t.mul(out, t.leaf(w)));
  t.backward_scalar(loss);
  const Mat analytic = t.grad(in);
  const Mat numeric = fd_grad(scalar, x0);
  const double err = (analytic - numeric).cwiseAbs().maxCoeff();
  CAPTURE(err);
  CHECK(err < tol);
}

}  // namespace

TEST_CASE("tape op gradients match finite differences") {
  Rng r(11);
  const Mat x = r.normal_mat(6, 4);
  check_op_grad([](Tape& t, V v) { return t.silu(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.mish(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.tanh_(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.exp_(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.square(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.row_softmax(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.row_logsumexp(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.layer_norm_rows(v); }, x, 1e-5);
  check_op_grad([](Tape& t, V v) { return t.normalize_all(v); }, x, 1e-5);
  check_op_grad([](Tape& t, V v) { return t.max_pool_rows(v, 3); }, x);
  check_op_grad([](Tape& t, V v) { return t.tile_rows(v, 3); }, x);
  check_op_grad([](Tape& t, V v) { return t.shift_rows(v, 2); }, x);
  check_op_grad([](Tape& t, V v) { return t.shift_rows(v, -1); }, x);
  check_op_grad([](Tape& t, V v) { return t.next_row_clamped(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.slice_rows(v, 1, 3); }, x);
  check_op_grad([](Tape& t, V v) { return t.slice_cols(v, 1, 2); }, x);
  check_op_grad([](Tape& t, V v) { return t.flatten_row(v); }, x);
  check_op_grad([](Tape& t, V v) { return t.mean_all(v); }, x);
  check_op_grad(
      [](Tape& t, V v) { return t.matmul(v, t.leaf(Rng(3).normal_mat(4, 5))); }, x);
  check_op_grad(
      [](Tape& t, V v) { return t.matmul(t.leaf(Rng(4).normal_mat(7, 6)), v); }, x);
  check_op_grad(
      [](Tape& t, V v) {
        return t.matmul(v, t.leaf(Rng(5).normal_mat(6, 4)), true, false);
      },
      x);
  check_op_grad(
      [](Tape& t, V v) {
        return t.matmul(t.leaf(Rng(6).normal_mat(5, 4)), v, false, true);
      },
      x);
  check_op_grad(
      [](Tape& t, V v) { return t.add_rowvec(v, t.leaf(Rng(7).normal_mat(1, 4))); }, x);
  check_op_grad(
      [](Tape& t, V v) { return t.mul_rowvec(v, t.leaf(Rng(8).normal_mat(1, 4))); }, x);
  check_op_grad(
      [](Tape& t, V v) {
        return t.concat_cols({v, t.square(v), t.leaf(Rng(9).normal_mat(6, 2))});
      },
      x);
}

TEST_CASE("x*x at 3 has input gradient 6") {
  Tape t;
  V x = t.leaf(Mat::Constant(1, 1, 3.0), true);
  V y = t.mul(x, x);
  t.backward(y, Mat::Ones(1, 1));
  CHECK(t.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("zero adjoint gives zero gradients") {
  Rng r(2);
  ArchSpec spec;
  spec.family = ArchFamily::kMlp;
  spec.in_dim = 5;
  spec.hidden = {8};
  spec.out_dim = 3;
  ParamSet p = build_params(spec, 77);
  const Mat in = r.normal_mat(2, 5);
  auto res = backward_grad(spec, p, in, nullptr, Mat::Zero(2, 3));
  for (int i = 0; i < res.param_grads.size(); ++i) {
    CHECK(res.param_grads.value(i).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(res.input_grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp forward trivia") {
  ArchSpec spec;
  spec.family = ArchFamily::kMlp;
  spec.in_dim = 4;
  spec.hidden = {6};
  spec.out_dim = 2;
  ParamSet zero = ParamSet::zeros_like(build_params(spec, 1));
  Rng r(1);
  const Mat in = r.normal_mat(3, 4);
  CHECK(forward_eval(spec, zero, in).cwiseAbs().maxCoeff() == 0.0);

  // Identity-initialized single linear layer reproduces its input.
  ArchSpec lin;
  lin.family = ArchFamily::kMlp;
  lin.in_dim = 4;
  lin.out_dim = 4;
  ParamSet ident = build_params(lin, 2);
  ident.by_name("fc0.w") = Mat::Identity(4, 4);
  ident.by_name("fc0.b").setZero();
  CHECK((forward_eval(lin, ident, in) - in).cwiseAbs().maxCoeff() == 0.0);

  // Purity: repeated evaluation is bit-identical.
  ParamSet p = build_params(spec, 3);
  const Mat a = forward_eval(spec, p, in);
  const Mat b = forward_eval(spec, p, in);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // Shape mismatch names the offending dimension.
  CHECK_THROWS_WITH_AS(forward_eval(spec, p, r.normal_mat(3, 5)),
                       doctest::Contains("expected 4"), std::invalid_argument);
}

TEST_CASE("parameter shapes are a pure function of the spec") {
  ArchSpec spec;
  spec.family = ArchFamily::kTemporalUnet;
  spec.act = Activation::kMish;
  spec.io_channels = 6;
  spec.channels = {8, 12};
  spec.kernel = 3;
  spec.gn_groups = 4;
  spec.t_embed_dim = 8;
  spec.cond_dim = 3;
  spec.embed_hidden = 10;
  ParamSet a = build_params(spec, 5);
  ParamSet b = build_params(spec, 5);
  REQUIRE(a.size() == b.size());
  CHECK(a.total_count() == b.total_count());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.name(i) == b.name(i));
    CHECK((a.value(i) - b.value(i)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("finite_diff_check across families") {
  Rng r(21);

  // Exact for a linear map.
  ArchSpec lin;
  lin.family = ArchFamily::kMlp;
  lin.in_dim = 6;
  lin.out_dim = 4;
  ParamSet pl = build_params(lin, 10);
  CHECK(finite_diff_check(lin, pl, r.normal_mat(3, 6), nullptr, 1e-5, 1) < 1e-9);

  // Random 2-layer MLP.
  ArchSpec mlp;
  mlp.family = ArchFamily::kMlp;
  mlp.act = Activation::kSilu;
  mlp.in_dim = 8;
  mlp.hidden = {16};
  mlp.out_dim = 5;
  ParamSet pm = build_params(mlp, 11);
  CHECK(finite_diff_check(mlp, pm, r.normal_mat(4, 8), nullptr, 1e-5, 2) < 1e-4);

  // Attention encoder at smoke size.
  ArchSpec enc;
  enc.family = ArchFamily::kAttentionEncoder;
  enc.act = Activation::kSilu;
  enc.token_dim = 5;
  enc.d_model = 8;
  enc.n_heads = 2;
  enc.n_blocks = 2;
  ParamSet pe = build_params(enc, 12);
  CHECK(finite_diff_check(enc, pe, r.normal_mat(6, 5), nullptr, 1e-5, 3) < 1e-4);

  // Small temporal U-Net with condition and timestep.
  ArchSpec unet;
  unet.family = ArchFamily::kTemporalUnet;
  unet.act = Activation::kMish;
  unet.io_channels = 4;
  unet.channels = {6, 6};
  unet.kernel = 3;
  unet.gn_groups = 2;
  unet.t_embed_dim = 8;
  unet.cond_dim = 3;
  unet.embed_hidden = 8;
  ParamSet pu = build_params(unet, 13);
  // The zero-initialized output head hides upstream gradients; give it values.
  glorot_fill(pu.by_name("out.w0"), 14, "out.w0");
  Vec cond = r.normal_vec(3);
  NetAux aux{7.0, &cond};
  CHECK(finite_diff_check(unet, pu, r.normal_mat(5, 4), &aux, 1e-5, 4) < 1e-4);

  CHECK_THROWS_AS(finite_diff_check(lin, pl, r.normal_mat(3, 6), nullptr, 0.0, 1),
                  std::invalid_argument);
}

TEST_CASE("adam basics") {
  ArchSpec lin;
  lin.family = ArchFamily::kMlp;
  lin.in_dim = 1;
  lin.out_dim = 1;
  ParamSet p = build_params(lin, 20);
  p.by_name("fc0.w")(0, 0) = 1.0;

  AdamState st = make_adam(p, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  ParamSet zero_grads = ParamSet::zeros_like(p);
  ParamSet next = adam_step(p, zero_grads, st);
  CHECK(st.step == 1);
  CHECK(next.by_name("fc0.w")(0, 0) == 1.0);

  // One step on f(p) = p^2 from p=1 moves downhill.
  ParamSet g = ParamSet::zeros_like(p);
  g.by_name("fc0.w")(0, 0) = 2.0;
  next = adam_step(next, g, st);
  CHECK(next.by_name("fc0.w")(0, 0) < 1.0);

  // 200 steps on the same convex quadratic shrink |p| below 1e-2.
  ParamSet q = build_params(lin, 21);
  q.by_name("fc0.w")(0, 0) = 1.0;
  AdamState st2 = make_adam(q, AdamConfig{0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 200; ++i) {
    ParamSet gr = ParamSet::zeros_like(q);
    gr.by_name("fc0.w")(0, 0) = 2.0 * q.by_name("fc0.w")(0, 0);
    adam_step_inplace(q, gr, st2);
  }
  CHECK(std::abs(q.by_name("fc0.w")(0, 0)) < 1e-2);
}

TEST_CASE("checkpoint io round-trips bit-exactly") {
  ArchSpec mlp;
  mlp.family = ArchFamily::kMlp;
  mlp.in_dim = 3;
  mlp.hidden = {4};
  mlp.out_dim = 2;
  ParamSet a = build_params(mlp, 30);
  ParamSet b = build_params(mlp, 31);
  Json meta;
  meta["purpose"] = "test";
  meta["arch"] = mlp.to_json();
  const auto path = std::filesystem::temp_directory_path() / "ldp_ckpt_test.bin";
  save_checkpoint(path, {{"first", &a}, {"second", &b}}, meta);
  Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.sections.size() == 2);
  CHECK(ck.meta.at("purpose") == "test");
  const ParamSet& ra = ck.section("first");
  REQUIRE(ra.size() == a.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(ra.name(i) == a.name(i));
    CHECK((ra.value(i) - a.value(i)).cwiseAbs().maxCoeff() == 0.0);
  }
  // Tampering any byte is detected.
  std::string raw = read_file(path);
  raw[raw.size() / 2] ^= 0x01;
  write_file(path, raw);
  CHECK_THROWS_AS(load_checkpoint(path), ArtifactError);
  std::filesystem::remove(path);
}
