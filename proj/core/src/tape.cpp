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

#include "ldp/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ldp::diff {

namespace {

[[noreturn]] void shape_fail(const char* op, long ar, long ac, long br, long bc) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                              std::to_string(ar) + "x" + std::to_string(ac) +
                              " vs " + std::to_string(br) + "x" +
                              std::to_string(bc) + ")");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double softplus(double x) {
  // Stable for large |x|.
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace

Tape::Node& Tape::at(V v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Tape::Node& Tape::at(V v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

V Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return V{static_cast<int>(nodes_.size()) - 1};
}

V Tape::leaf(Mat value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.rg = requires_grad;
  return push(std::move(n));
}

V Tape::leaf_ref(const Mat* value, bool requires_grad) {
  Node n;
  n.op = Op::kLeafRef;
  n.ext = value;
  n.rg = requires_grad;
  return push(std::move(n));
}

V Tape::matmul(V a, V b, bool trans_a, bool trans_b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  const long ak = trans_a ? A.rows() : A.cols();
  const long bk = trans_b ? B.cols() : B.rows();
  if (ak != bk) shape_fail("matmul", A.rows(), A.cols(), B.rows(), B.cols());
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.flag_a = trans_a;
  n.flag_b = trans_b;
  n.rg = at(a).rg || at(b).rg;
  if (!trans_a && !trans_b) n.value = A * B;
  else if (trans_a && !trans_b) n.value = A.transpose() * B;
  else if (!trans_a && trans_b) n.value = A * B.transpose();
  else n.value = A.transpose() * B.transpose();
  return push(std::move(n));
}

V Tape::add(V a, V b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    shape_fail("add", A.rows(), A.cols(), B.rows(), B.cols());
  }
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.rg = at(a).rg || at(b).rg;
  n.value = A + B;
  return push(std::move(n));
}

V Tape::sub(V a, V b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    shape_fail("sub", A.rows(), A.cols(), B.rows(), B.cols());
  }
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.rg = at(a).rg || at(b).rg;
  n.value = A - B;
  return push(std::move(n));
}

V Tape::mul(V a, V b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    shape_fail("mul", A.rows(), A.cols(), B.rows(), B.cols());
  }
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.rg = at(a).rg || at(b).rg;
  n.value = A.cwiseProduct(B);
  return push(std::move(n));
}

V Tape::add_rowvec(V a, V row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  if (R.rows() != 1 || R.cols() != A.cols()) {
    shape_fail("add_rowvec", A.rows(), A.cols(), R.rows(), R.cols());
  }
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a.id;
  n.b = row.id;
  n.rg = at(a).rg || at(row).rg;
  n.value = A.rowwise() + R.row(0);
  return push(std::move(n));
}

V Tape::mul_rowvec(V a, V row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  if (R.rows() != 1 || R.cols() != A.cols()) {
    shape_fail("mul_rowvec", A.rows(), A.cols(), R.rows(), R.cols());
  }
  Node n;
  n.op = Op::kMulRowVec;
  n.a = a.id;
  n.b = row.id;
  n.rg = at(a).rg || at(row).rg;
  n.value = A.array().rowwise() * R.row(0).array();
  return push(std::move(n));
}

V Tape::concat_cols(const std::vector<V>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const long rows = val(parts[0]).rows();
  long cols = 0;
  bool rg = false;
  for (V p : parts) {
    if (val(p).rows() != rows) {
      shape_fail("concat_cols", rows, val(parts[0]).cols(), val(p).rows(), val(p).cols());
    }
    cols += val(p).cols();
    rg = rg || at(p).rg;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.rg = rg;
  n.value.resize(rows, cols);
  long off = 0;
  for (V p : parts) {
    const Mat& P = val(p);
    n.value.middleCols(off, P.cols()) = P;
    off += P.cols();
    n.args.push_back(p.id);
  }
  return push(std::move(n));
}

V Tape::scale(V a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.c0 = c;
  n.rg = at(a).rg;
  n.value = val(a) * c;
  return push(std::move(n));
}

V Tape::add_scalar(V a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a.id;
  n.c0 = c;
  n.rg = at(a).rg;
  n.value = val(a).array() + c;
  return push(std::move(n));
}

V Tape::relu(V a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).cwiseMax(0.0);
  return push(std::move(n));
}

V Tape::silu(V a) {
  Node n;
  n.op = Op::kSilu;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).unaryExpr([](double x) { return x * sigmoid(x); });
  return push(std::move(n));
}

V Tape::mish(V a) {
  Node n;
  n.op = Op::kMish;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).unaryExpr([](double x) { return x * std::tanh(softplus(x)); });
  return push(std::move(n));
}

V Tape::tanh_(V a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).array().tanh();
  return push(std::move(n));
}

V Tape::exp_(V a) {
  Node n;
  n.op = Op::kExp;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).array().exp();
  return push(std::move(n));
}

V Tape::log_(V a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).array().log();
  return push(std::move(n));
}

V Tape::square(V a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = val(a).array().square();
  return push(std::move(n));
}

V Tape::sum_all(V a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = Mat::Constant(1, 1, val(a).sum());
  return push(std::move(n));
}

V Tape::mean_all(V a) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value = Mat::Constant(1, 1, val(a).mean());
  return push(std::move(n));
}

V Tape::row_softmax(V a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kRowSoftmax;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value.resize(A.rows(), A.cols());
  for (long r = 0; r < A.rows(); ++r) {
    const double m = A.row(r).maxCoeff();
    Eigen::ArrayXd e = (A.row(r).array() - m).exp();
    n.value.row(r) = e / e.sum();
  }
  return push(std::move(n));
}

V Tape::row_logsumexp(V a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kRowLogSumExp;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value.resize(A.rows(), 1);
  for (long r = 0; r < A.rows(); ++r) {
    const double m = A.row(r).maxCoeff();
    n.value(r, 0) = m + std::log((A.row(r).array() - m).exp().sum());
  }
  return push(std::move(n));
}

V Tape::layer_norm_rows(V a, double eps) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kLayerNormRows;
  n.a = a.id;
  n.c0 = eps;
  n.rg = at(a).rg;
  n.value.resize(A.rows(), A.cols());
  for (long r = 0; r < A.rows(); ++r) {
    const double mu = A.row(r).mean();
    const double var = (A.row(r).array() - mu).square().mean();
    n.value.row(r) = (A.row(r).array() - mu) / std::sqrt(var + eps);
  }
  return push(std::move(n));
}

V Tape::normalize_all(V a, double eps) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kNormalizeAll;
  n.a = a.id;
  n.c0 = eps;
  n.rg = at(a).rg;
  const double mu = A.mean();
  const double var = (A.array() - mu).square().mean();
  n.value = (A.array() - mu) / std::sqrt(var + eps);
  return push(std::move(n));
}

V Tape::max_pool_rows(V a, int window) {
  const Mat& A = val(a);
  if (window < 1 || A.rows() % window != 0) {
    throw std::invalid_argument("max_pool_rows: rows " + std::to_string(A.rows()) +
                                " not divisible by window " + std::to_string(window));
  }
  const long out_rows = A.rows() / window;
  Node n;
  n.op = Op::kMaxPoolRows;
  n.a = a.id;
  n.i0 = window;
  n.rg = at(a).rg;
  n.value.resize(out_rows, A.cols());
  n.args.resize(static_cast<std::size_t>(out_rows * A.cols()));
  for (long o = 0; o < out_rows; ++o) {
    for (long c = 0; c < A.cols(); ++c) {
      long best = o * window;
      double bv = A(best, c);
      for (long r = o * window + 1; r < (o + 1) * window; ++r) {
        if (A(r, c) > bv) {  // strict: ties keep the first index
          bv = A(r, c);
          best = r;
        }
      }
      n.value(o, c) = bv;
      n.args[static_cast<std::size_t>(o * A.cols() + c)] = static_cast<int>(best);
    }
  }
  return push(std::move(n));
}

V Tape::tile_rows(V a, int times) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kTileRows;
  n.a = a.id;
  n.i0 = times;
  n.rg = at(a).rg;
  n.value.resize(A.rows() * times, A.cols());
  for (long r = 0; r < A.rows(); ++r) {
    for (int t = 0; t < times; ++t) n.value.row(r * times + t) = A.row(r);
  }
  return push(std::move(n));
}

V Tape::shift_rows(V a, int offset) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kShiftRows;
  n.a = a.id;
  n.i0 = offset;
  n.rg = at(a).rg;
  n.value = Mat::Zero(A.rows(), A.cols());
  for (long t = 0; t < A.rows(); ++t) {
    const long src = t + offset;
    if (src >= 0 && src < A.rows()) n.value.row(t) = A.row(src);
  }
  return push(std::move(n));
}

V Tape::next_row_clamped(V a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kNextRowClamped;
  n.a = a.id;
  n.rg = at(a).rg;
  n.value.resize(A.rows(), A.cols());
  for (long t = 0; t < A.rows(); ++t) {
    n.value.row(t) = A.row(std::min(t + 1, A.rows() - 1));
  }
  return push(std::move(n));
}

V Tape::slice_rows(V a, int start, int count) {
  const Mat& A = val(a);
  if (start < 0 || start + count > A.rows()) {
    throw std::invalid_argument("slice_rows: out of range");
  }
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.id;
  n.i0 = start;
  n.i1 = count;
  n.rg = at(a).rg;
  n.value = A.middleRows(start, count);
  return push(std::move(n));
}

V Tape::slice_cols(V a, int start, int count) {
  const Mat& A = val(a);
  if (start < 0 || start + count > A.cols()) {
    throw std::invalid_argument("slice_cols: out of range");
  }
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.i0 = start;
  n.i1 = count;
  n.rg = at(a).rg;
  n.value = A.middleCols(start, count);
  return push(std::move(n));
}

V Tape::flatten_row(V a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kFlattenRow;
  n.a = a.id;
  n.i0 = static_cast<int>(A.rows());
  n.i1 = static_cast<int>(A.cols());
  n.rg = at(a).rg;
  n.value.resize(1, A.rows() * A.cols());
  for (long r = 0; r < A.rows(); ++r) {
    for (long c = 0; c < A.cols(); ++c) n.value(0, r * A.cols() + c) = A(r, c);
  }
  return push(std::move(n));
}

V Tape::activation(V a, int kind) {
  switch (kind) {
    case 0: return relu(a);
    case 1: return mish(a);
    case 2: return silu(a);
    default: throw std::invalid_argument("activation: unknown kind");
  }
}

const Mat& Tape::val(V v) const { return value_of(at(v)); }

Mat Tape::grad(V v) const {
  const Node& n = at(v);
  if (n.grad.size() == 0) {
    const Mat& x = value_of(n);
    return Mat::Zero(x.rows(), x.cols());
  }
  return n.grad;
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.rg) return;
  if (n.grad.size() == 0) n.grad = g;
  else n.grad += g;
}

void Tape::backward(V root, const Mat& adjoint) {
  if (backward_done_) throw std::logic_error("tape backward called twice");
  backward_done_ = true;
  const Mat& rv = val(root);
  if (rv.rows() != adjoint.rows() || rv.cols() != adjoint.cols()) {
    shape_fail("backward", rv.rows(), rv.cols(), adjoint.rows(), adjoint.cols());
  }
  accumulate(root.id, adjoint);
  for (int id = root.id; id >= 0; --id) backward_node(id);
}

void Tape::backward_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.rg || n.grad.size() == 0) return;
  const Mat& G = n.grad;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kLeafRef:
      break;
    case Op::kMatMul: {
      const Mat& A = value_of(nodes_[n.a]);
      const Mat& B = value_of(nodes_[n.b]);
      if (nodes_[n.a].rg) {
        Mat gA;
        if (!n.flag_a) gA = n.flag_b ? Mat(G * B) : Mat(G * B.transpose());
        else gA = n.flag_b ? Mat(B.transpose() * G.transpose()) : Mat(B * G.transpose());
        accumulate(n.a, gA);
      }
      if (nodes_[n.b].rg) {
        Mat gB;
        if (!n.flag_b) gB = n.flag_a ? Mat(A * G) : Mat(A.transpose() * G);
        else gB = n.flag_a ? Mat(G.transpose() * A.transpose()) : Mat(G.transpose() * A);
        accumulate(n.b, gB);
      }
      break;
    }
    case Op::kAdd:
      accumulate(n.a, G);
      accumulate(n.b, G);
      break;
    case Op::kSub:
      accumulate(n.a, G);
      accumulate(n.b, -G);
      break;
    case Op::kMul:
      accumulate(n.a, G.cwiseProduct(value_of(nodes_[n.b])));
      accumulate(n.b, G.cwiseProduct(value_of(nodes_[n.a])));
      break;
    case Op::kAddRowVec:
      accumulate(n.a, G);
      accumulate(n.b, Mat(G.colwise().sum()));
      break;
    case Op::kMulRowVec: {
      const Mat& R = value_of(nodes_[n.b]);
      accumulate(n.a, Mat(G.array().rowwise() * R.row(0).array()));
      accumulate(n.b, Mat(G.cwiseProduct(value_of(nodes_[n.a])).colwise().sum()));
      break;
    }
    case Op::kConcatCols: {
      long off = 0;
      for (int src : n.args) {
        const long w = value_of(nodes_[src]).cols();
        accumulate(src, Mat(G.middleCols(off, w)));
        off += w;
      }
      break;
    }
    case Op::kScale:
      accumulate(n.a, Mat(G * n.c0));
      break;
    case Op::kAddScalar:
      accumulate(n.a, G);
      break;
    case Op::kRelu: {
      const Mat& X = value_of(nodes_[n.a]);
      accumulate(n.a, Mat((X.array() > 0.0).select(G, Mat::Zero(G.rows(), G.cols()))));
      break;
    }
    case Op::kSilu: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat d = X.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
      accumulate(n.a, Mat(G.cwiseProduct(d)));
      break;
    }
    case Op::kMish: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat d = X.unaryExpr([](double x) {
        const double sp = softplus(x);
        const double t = std::tanh(sp);
        return t + x * (1.0 - t * t) * sigmoid(x);
      });
      accumulate(n.a, Mat(G.cwiseProduct(d)));
      break;
    }
    case Op::kTanh: {
      accumulate(n.a, Mat(G.cwiseProduct(Mat(1.0 - n.value.array().square()))));
      break;
    }
    case Op::kExp:
      accumulate(n.a, Mat(G.cwiseProduct(n.value)));
      break;
    case Op::kLog:
      accumulate(n.a, Mat(G.cwiseQuotient(value_of(nodes_[n.a]))));
      break;
    case Op::kSquare:
      accumulate(n.a, Mat(2.0 * G.cwiseProduct(value_of(nodes_[n.a]))));
      break;
    case Op::kSumAll: {
      const Mat& X = value_of(nodes_[n.a]);
      accumulate(n.a, Mat(Mat::Constant(X.rows(), X.cols(), G(0, 0))));
      break;
    }
    case Op::kMeanAll: {
      const Mat& X = value_of(nodes_[n.a]);
      accumulate(n.a, Mat(Mat::Constant(X.rows(), X.cols(),
                                        G(0, 0) / static_cast<double>(X.size()))));
      break;
    }
    case Op::kRowSoftmax: {
      const Mat& Y = n.value;
      Mat gx(Y.rows(), Y.cols());
      for (long r = 0; r < Y.rows(); ++r) {
        const double dot = G.row(r).cwiseProduct(Y.row(r)).sum();
        gx.row(r) = Y.row(r).cwiseProduct(Mat(G.row(r).array() - dot));
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kRowLogSumExp: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx(X.rows(), X.cols());
      for (long r = 0; r < X.rows(); ++r) {
        const double m = X.row(r).maxCoeff();
        Eigen::ArrayXd e = (X.row(r).array() - m).exp();
        gx.row(r) = (e / e.sum()).matrix() * G(r, 0);
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kLayerNormRows: {
      const Mat& X = value_of(nodes_[n.a]);
      const Mat& Y = n.value;
      Mat gx(X.rows(), X.cols());
      for (long r = 0; r < X.rows(); ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        const double s = std::sqrt(var + n.c0);
        const double g_mean = G.row(r).mean();
        const double gy_mean = G.row(r).cwiseProduct(Y.row(r)).mean();
        gx.row(r) = (G.row(r).array() - g_mean - Y.row(r).array() * gy_mean) / s;
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kNormalizeAll: {
      const Mat& X = value_of(nodes_[n.a]);
      const Mat& Y = n.value;
      const double mu = X.mean();
      const double var = (X.array() - mu).square().mean();
      const double s = std::sqrt(var + n.c0);
      const double g_mean = G.mean();
      const double gy_mean = G.cwiseProduct(Y).mean();
      accumulate(n.a, Mat(((G.array() - g_mean) - Y.array() * gy_mean) / s));
      break;
    }
    case Op::kMaxPoolRows: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      for (long o = 0; o < n.value.rows(); ++o) {
        for (long c = 0; c < n.value.cols(); ++c) {
          gx(n.args[static_cast<std::size_t>(o * n.value.cols() + c)], c) += G(o, c);
        }
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kTileRows: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      for (long r = 0; r < X.rows(); ++r) {
        for (int t = 0; t < n.i0; ++t) gx.row(r) += G.row(r * n.i0 + t);
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kShiftRows: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      for (long t = 0; t < X.rows(); ++t) {
        const long src = t + n.i0;
        if (src >= 0 && src < X.rows()) gx.row(src) += G.row(t);
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kNextRowClamped: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      for (long t = 0; t < X.rows(); ++t) {
        gx.row(std::min(t + 1, X.rows() - 1)) += G.row(t);
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::kSliceRows: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      gx.middleRows(n.i0, n.i1) = G;
      accumulate(n.a, gx);
      break;
    }
    case Op::kSliceCols: {
      const Mat& X = value_of(nodes_[n.a]);
      Mat gx = Mat::Zero(X.rows(), X.cols());
      gx.middleCols(n.i0, n.i1) = G;
      accumulate(n.a, gx);
      break;
    }
    case Op::kFlattenRow: {
      Mat gx(n.i0, n.i1);
      for (int r = 0; r < n.i0; ++r) {
        for (int c = 0; c < n.i1; ++c) gx(r, c) = G(0, r * n.i1 + c);
      }
      accumulate(n.a, gx);
      break;
    }
  }
  // Free the adjoint as soon as it has been propagated; keeps peak memory
  // proportional to live values, not to the tape length.
  if (n.op != Op::kLeaf && n.op != Op::kLeafRef) n.grad.resize(0, 0);
}

}  // namespace ldp::diff
