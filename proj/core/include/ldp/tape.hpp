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

#ifndef LDP_TAPE_HPP_
#define LDP_TAPE_HPP_

#include <cstdint>
#include <vector>

#include "ldp/common.hpp"

namespace ldp::diff {

// Reverse-mode autodiff over dense matrices. One Tape records one forward
// pass as an append-only op list; backward() walks it in reverse. Ops are a
// fixed enum (no per-node closures) so a training step costs little beyond
// the Eigen kernels themselves.
//
// Matrices are (rows = positions/batch, cols = features) throughout.

enum class Op : std::uint8_t {
  kLeaf,            // owned constant/input
  kLeafRef,         // external storage (parameters); never copied
  kMatMul,          // flags: transpose per side
  kAdd,             // same shape
  kSub,
  kMul,             // elementwise
  kAddRowVec,       // (T x d) + broadcast (1 x d)
  kMulRowVec,       // (T x d) * broadcast (1 x d)
  kConcatCols,      // variadic
  kScale,           // * c0
  kAddScalar,       // + c0
  kRelu,
  kSilu,
  kMish,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSumAll,          // -> 1x1
  kMeanAll,         // -> 1x1
  kRowSoftmax,
  kRowLogSumExp,    // -> T x 1
  kLayerNormRows,   // per-row standardization, no affine
  kNormalizeAll,    // whole-block standardization (group-norm core)
  kMaxPoolRows,     // window i0 over rows, ties -> first index
  kTileRows,        // repeat each row i0 times
  kShiftRows,       // y[t] = x[t + i0] (zero outside)
  kNextRowClamped,  // y[t] = x[min(t+1, T-1)]
  kSliceRows,       // rows [i0, i0+i1)
  kSliceCols,       // cols [i0, i0+i1)
  kFlattenRow,      // row-major flatten -> 1 x (r*c)
};

struct V {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. leaf_ref keeps a pointer: the caller guarantees the matrix
  // outlives the tape (parameter storage does).
  V leaf(Mat value, bool requires_grad = false);
  V leaf_ref(const Mat* value, bool requires_grad = true);
  V zeros(int rows, int cols) { return leaf(Mat::Zero(rows, cols)); }

  V matmul(V a, V b, bool trans_a = false, bool trans_b = false);
  V add(V a, V b);
  V sub(V a, V b);
  V mul(V a, V b);
  V add_rowvec(V a, V row);
  V mul_rowvec(V a, V row);
  V concat_cols(const std::vector<V>& parts);
  V scale(V a, double c);
  V add_scalar(V a, double c);
  V relu(V a);
  V silu(V a);
  V mish(V a);
  V tanh_(V a);
  V exp_(V a);
  V log_(V a);
  V square(V a);
  V sum_all(V a);
  V mean_all(V a);
  V row_softmax(V a);
  V row_logsumexp(V a);
  V layer_norm_rows(V a, double eps = 1e-5);
  V normalize_all(V a, double eps = 1e-5);
  V max_pool_rows(V a, int window);
  V tile_rows(V a, int times);
  V shift_rows(V a, int offset);
  V next_row_clamped(V a);
  V slice_rows(V a, int start, int count);
  V slice_cols(V a, int start, int count);
  V flatten_row(V a);

  V activation(V a, int kind);  // 0 relu, 1 mish, 2 silu

  const Mat& val(V v) const;
  // Gradient accumulated by the last backward(); zeros if the node was not
  // reached. Only meaningful for requires_grad nodes.
  Mat grad(V v) const;

  // Seeds d(root)/d(root) = adjoint and propagates. adjoint must match the
  // root's shape. May be called once per tape.
  void backward(V root, const Mat& adjoint);
  void backward_scalar(V root) { backward(root, Mat::Ones(1, 1)); }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Op op;
    int a = -1, b = -1;
    int i0 = 0, i1 = 0;
    double c0 = 0.0;
    bool flag_a = false, flag_b = false;
    bool rg = false;  // requires grad (propagated)
    Mat value;
    const Mat* ext = nullptr;
    Mat grad;
    std::vector<int> args;  // concat sources or pooling argmax rows
  };

  const Mat& value_of(const Node& n) const { return n.ext ? *n.ext : n.value; }
  Node& at(V v);
  const Node& at(V v) const;
  V push(Node n);
  void accumulate(int id, const Mat& g);
  void backward_node(int id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace ldp::diff

#endif  // LDP_TAPE_HPP_
