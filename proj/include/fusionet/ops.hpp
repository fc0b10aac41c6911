#pragma once

// Differentiable primitives over Graph. Every op records its forward value and
// a closure computing the local vector-Jacobian product.
//
// Broadcasting is limited to (1-element tensor) op (tensor) and
// (row vector) op (matrix) along the last axis.

#include "fusionet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fusionet {

namespace detail {

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& x, Index rows, Index cols) {
  if (x.rows() == rows && x.cols() == cols) return x;
  return x.replicate(rows / x.rows(), cols / x.cols());
}

template <typename Scalar>
Matrix<Scalar> reduce_to(const Matrix<Scalar>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<Scalar>::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

template <typename Scalar>
Shape broadcast_shape(std::string_view op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto wider = [&]() -> const Shape& { return a.rank() >= b.rank() ? a.shape() : b.shape(); };
  if (a.rows() == b.rows() && a.cols() == b.cols()) return wider();
  if (a.size() == 1) return b.shape();
  if (b.size() == 1) return a.shape();
  if (a.rows() == 1 && a.cols() == b.cols()) return b.shape();
  if (b.rows() == 1 && b.cols() == a.cols()) return a.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                       to_string(b.shape()));
}

template <typename Scalar>
void require_rank3(std::string_view op, const Tensor<Scalar>& x) {
  if (x.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [H, W, C] input, got " +
                         to_string(x.shape()));
  }
}

template <typename Scalar, typename Forward, typename Derivative>
Var<Scalar> unary(std::string_view op, Var<Scalar> x, Forward f, Derivative df) {
  Matrix<Scalar> y = x.value().unaryExpr(f);
  return x.graph->record(op, Tensor<Scalar>(x.shape(), std::move(y)), {x},
                         [x, df](const auto& up, const auto& out, Graph<Scalar>& g) {
                           g.accumulate(x, df(x.value(), out, up));
                         });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Shape shape = detail::broadcast_shape("add", a.tensor(), b.tensor());
  const Index r = std::max(a.rows(), b.rows()), c = std::max(a.cols(), b.cols());
  Matrix<Scalar> y = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  return a.graph->record("add", Tensor<Scalar>(std::move(shape), std::move(y)), {a, b},
                         [a, b](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(a, detail::reduce_to(up, a.rows(), a.cols()));
                           g.accumulate(b, detail::reduce_to(up, b.rows(), b.cols()));
                         });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  Shape shape = detail::broadcast_shape("sub", a.tensor(), b.tensor());
  const Index r = std::max(a.rows(), b.rows()), c = std::max(a.cols(), b.cols());
  Matrix<Scalar> y = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  return a.graph->record("sub", Tensor<Scalar>(std::move(shape), std::move(y)), {a, b},
                         [a, b](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(a, detail::reduce_to(up, a.rows(), a.cols()));
                           g.accumulate(b, -detail::reduce_to(up, b.rows(), b.cols()));
                         });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  Shape shape = detail::broadcast_shape("mul", a.tensor(), b.tensor());
  const Index r = std::max(a.rows(), b.rows()), c = std::max(a.cols(), b.cols());
  Matrix<Scalar> y =
      detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  return a.graph->record(
      "mul", Tensor<Scalar>(std::move(shape), std::move(y)), {a, b},
      [a, b, r, c](const auto& up, const auto&, Graph<Scalar>& g) {
        if (a.requires_grad()) {
          Matrix<Scalar> da = up.cwiseProduct(detail::expand(b.value(), r, c));
          g.accumulate(a, detail::reduce_to(da, a.rows(), a.cols()));
        }
        if (b.requires_grad()) {
          Matrix<Scalar> db = up.cwiseProduct(detail::expand(a.value(), r, c));
          g.accumulate(b, detail::reduce_to(db, b.rows(), b.cols()));
        }
      });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
  Matrix<Scalar> y = x.value() * factor;
  return x.graph->record("scale", Tensor<Scalar>(x.shape(), std::move(y)), {x},
                         [x, factor](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(x, up * factor);
                         });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  return detail::unary(
      "tanh", x, [](Scalar v) { return std::tanh(v); },
      [](const auto&, const auto& y, const auto& up) -> Matrix<Scalar> {
        return (up.array() * (Scalar(1) - y.array().square())).matrix();
      });
}

/// relu'(0) is taken as 0.
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  return detail::unary(
      "relu", x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](const auto& in, const auto&, const auto& up) -> Matrix<Scalar> {
        return up.cwiseProduct((in.array() > Scalar(0)).template cast<Scalar>().matrix());
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  return detail::unary(
      "sigmoid", x,
      [](Scalar v) {
        // Split by sign so exp never overflows.
        if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](const auto&, const auto& y, const auto& up) -> Matrix<Scalar> {
        return (up.array() * y.array() * (Scalar(1) - y.array())).matrix();
      });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> x) {
  return detail::unary(
      "exp", x, [](Scalar v) { return std::exp(v); },
      [](const auto&, const auto& y, const auto& up) -> Matrix<Scalar> {
        return up.cwiseProduct(y);
      });
}

/// Natural log. Non-positive inputs raise DomainError; clamp first.
template <typename Scalar>
Var<Scalar> log(Var<Scalar> x) {
  if ((x.value().array() <= Scalar(0)).any()) {
    throw DomainError("log: input contains non-positive values (min " +
                      std::to_string(static_cast<double>(x.value().minCoeff())) + ")");
  }
  return detail::unary(
      "log", x, [](Scalar v) { return std::log(v); },
      [](const auto& in, const auto&, const auto& up) -> Matrix<Scalar> {
        return up.cwiseQuotient(in);
      });
}

/// Elementwise clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> x, Scalar lo, Scalar hi) {
  Matrix<Scalar> y = x.value().cwiseMax(lo).cwiseMin(hi);
  return x.graph->record(
      "clamp", Tensor<Scalar>(x.shape(), std::move(y)), {x},
      [x, lo, hi](const auto& up, const auto&, Graph<Scalar>& g) {
        const auto& in = x.value().array();
        g.accumulate(x, up.cwiseProduct(((in > lo) && (in < hi)).template cast<Scalar>().matrix()));
      });
}

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " * " +
                         to_string(b.shape()));
  }
  Matrix<Scalar> y = a.value() * b.value();
  Shape shape{y.rows(), y.cols()};
  return a.graph->record("matmul", Tensor<Scalar>(std::move(shape), std::move(y)), {a, b},
                         [a, b](const auto& up, const auto&, Graph<Scalar>& g) {
                           if (a.requires_grad()) g.accumulate(a, up * b.value().transpose());
                           if (b.requires_grad()) g.accumulate(b, a.value().transpose() * up);
                         });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> x) {
  Matrix<Scalar> y = x.value().transpose();
  Shape shape{y.rows(), y.cols()};
  return x.graph->record("transpose", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(x, up.transpose());
                         });
}

/// Row-wise softmax with max subtraction. Backward applies the full Jacobian
/// diag(y) - y^T y of each row.
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x) {
  const auto& in = x.value();
  Matrix<Scalar> y(in.rows(), in.cols());
  for (Index r = 0; r < in.rows(); ++r) {
    auto shifted = (in.row(r).array() - in.row(r).maxCoeff()).exp();
    y.row(r) = shifted / shifted.sum();
  }
  return x.graph->record("softmax", Tensor<Scalar>(x.shape(), std::move(y)), {x},
                         [x](const auto& up, const auto& out, Graph<Scalar>& g) {
                           Matrix<Scalar> dx(out.rows(), out.cols());
                           for (Index r = 0; r < out.rows(); ++r) {
                             const Scalar dot = up.row(r).dot(out.row(r));
                             dx.row(r) = out.row(r).array() * (up.row(r).array() - dot);
                           }
                           g.accumulate(x, dx);
                         });
}

/// Concatenates along the last axis. Parts must share their row count.
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat: empty part list");
  const Index rows = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat: part " + to_string(p.shape()) + " does not match row count " +
                           std::to_string(rows));
    }
    total += p.cols();
  }
  Matrix<Scalar> y(rows, total);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    offsets.push_back(offset);
    offset += p.cols();
  }
  Shape shape{rows, total};
  return parts.front().graph->record(
      "concat", Tensor<Scalar>(std::move(shape), std::move(y)), parts,
      [parts, offsets](const auto& up, const auto&, Graph<Scalar>& g) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
          g.accumulate(parts[i], up.middleCols(offsets[i], parts[i].cols()));
        }
      });
}

/// Stacks along the first axis. Parts must share their column count.
template <typename Scalar>
Var<Scalar> stack_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("stack_rows: empty part list");
  const Index cols = parts.front().cols();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("stack_rows: part " + to_string(p.shape()) +
                           " does not match column count " + std::to_string(cols));
    }
    total += p.rows();
  }
  Matrix<Scalar> y(total, cols);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    y.middleRows(offset, p.rows()) = p.value();
    offsets.push_back(offset);
    offset += p.rows();
  }
  Shape shape{total, cols};
  return parts.front().graph->record(
      "stack_rows", Tensor<Scalar>(std::move(shape), std::move(y)), parts,
      [parts, offsets](const auto& up, const auto&, Graph<Scalar>& g) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
          g.accumulate(parts[i], up.middleRows(offsets[i], parts[i].rows()));
        }
      });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> x, Index offset, Index width) {
  if (offset < 0 || width <= 0 || offset + width > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + width) + ") outside " + to_string(x.shape()));
  }
  Matrix<Scalar> y = x.value().middleCols(offset, width);
  Shape shape{y.rows(), y.cols()};
  return x.graph->record("slice_cols", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x, offset, width](const auto& up, const auto&, Graph<Scalar>& g) {
                           Matrix<Scalar>* buffer = g.gradient_buffer(x);
                           if (buffer) buffer->middleCols(offset, width) += up;
                         });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> x, Index offset, Index count) {
  if (offset < 0 || count <= 0 || offset + count > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + count) + ") outside " + to_string(x.shape()));
  }
  Matrix<Scalar> y = x.value().middleRows(offset, count);
  Shape shape{y.rows(), y.cols()};
  return x.graph->record("slice_rows", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x, offset, count](const auto& up, const auto&, Graph<Scalar>& g) {
                           Matrix<Scalar>* buffer = g.gradient_buffer(x);
                           if (buffer) buffer->middleRows(offset, count) += up;
                         });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  Matrix<Scalar> y = Matrix<Scalar>::Constant(1, 1, x.value().sum());
  return x.graph->record("sum", Tensor<Scalar>(Shape{1}, std::move(y)), {x},
                         [x](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(x, Matrix<Scalar>::Constant(x.rows(), x.cols(), up(0, 0)));
                         });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Tiles a 1 x c row vector into an n x c matrix.
template <typename Scalar>
Var<Scalar> repeat_rows(Var<Scalar> x, Index n) {
  if (x.rows() != 1) throw DimensionError("repeat_rows: expected a row vector, got " + to_string(x.shape()));
  Matrix<Scalar> y = x.value().replicate(n, 1);
  Shape shape{n, x.cols()};
  return x.graph->record("repeat_rows", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(x, up.colwise().sum());
                         });
}

/// Gathers rows of `table` ([V, E]) for each id. Backward scatters into the table gradient.
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const int> ids) {
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  Matrix<Scalar> y(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                           std::to_string(table.rows()));
    }
    y.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  Shape shape{y.rows(), y.cols()};
  std::vector<int> saved(ids.begin(), ids.end());
  return table.graph->record("embedding", Tensor<Scalar>(std::move(shape), std::move(y)), {table},
                             [table, saved](const auto& up, const auto&, Graph<Scalar>& g) {
                               Matrix<Scalar>* buffer = g.gradient_buffer(table);
                               if (!buffer) return;
                               for (std::size_t i = 0; i < saved.size(); ++i) {
                                 buffer->row(saved[i]) += up.row(static_cast<Index>(i));
                               }
                             });
}

/// 3x3 convolution with zero "same" padding and stride 1.
///
/// x: [H, W, Cin]; kernel: [3, 3, Cin, Cout] (stored (9*Cin) x Cout);
/// bias: [Cout]. Output: [H, W, Cout]. Implemented as im2col + GEMM.
template <typename Scalar>
Var<Scalar> conv2d_3x3(Var<Scalar> x, Var<Scalar> kernel, Var<Scalar> bias) {
  detail::require_rank3("conv2d_3x3", x.tensor());
  const Index h = x.shape()[0], w = x.shape()[1], cin = x.shape()[2];
  if (kernel.rows() != 9 * cin) {
    throw DimensionError("conv2d_3x3: kernel " + to_string(kernel.shape()) +
                         " does not match input " + to_string(x.shape()));
  }
  const Index cout = kernel.cols();
  if (bias.value().size() != cout) {
    throw DimensionError("conv2d_3x3: bias " + to_string(bias.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
  }
  // Both matrices are row-major, so each (pixel, tap) pair is a contiguous copy of cin values.
  auto patches = std::make_shared<Matrix<Scalar>>(Matrix<Scalar>::Zero(h * w, 9 * cin));
  const Scalar* in = x.value().data();
  Scalar* out = patches->data();
  for (Index yy = 0; yy < h; ++yy) {
    for (Index xx = 0; xx < w; ++xx) {
      Scalar* row = out + (yy * w + xx) * 9 * cin;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = yy + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const Scalar* src = in + (sy * w + sx) * cin;
          Scalar* dst = row + (ky * 3 + kx) * cin;
          for (Index k = 0; k < cin; ++k) dst[k] = src[k];
        }
      }
    }
  }
  Matrix<Scalar> y = (*patches) * kernel.value();
  y.rowwise() += bias.value().row(0);
  Shape shape{h, w, cout};
  return x.graph->record(
      "conv2d_3x3", Tensor<Scalar>(std::move(shape), std::move(y)), {x, kernel, bias},
      [x, kernel, bias, patches, h, w, cin](const auto& up, const auto&, Graph<Scalar>& g) {
        if (kernel.requires_grad()) g.accumulate(kernel, patches->transpose() * up);
        if (bias.requires_grad()) {
          g.accumulate(bias, up.colwise().sum());
        }
        Matrix<Scalar>* dx = g.gradient_buffer(x);
        if (!dx) return;
        const Matrix<Scalar> dpatches = up * kernel.value().transpose();
        Scalar* grad = dx->data();
        for (Index yy = 0; yy < h; ++yy) {
          for (Index xx = 0; xx < w; ++xx) {
            const Scalar* row = dpatches.data() + (yy * w + xx) * 9 * cin;
            for (Index ky = 0; ky < 3; ++ky) {
              const Index sy = yy + ky - 1;
              if (sy < 0 || sy >= h) continue;
              for (Index kx = 0; kx < 3; ++kx) {
                const Index sx = xx + kx - 1;
                if (sx < 0 || sx >= w) continue;
                Scalar* dst = grad + (sy * w + sx) * cin;
                const Scalar* src = row + (ky * 3 + kx) * cin;
                for (Index k = 0; k < cin; ++k) dst[k] += src[k];
              }
            }
          }
        }
      });
}

/// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped. Ties go to
/// the first element in row-major window order.
template <typename Scalar>
Var<Scalar> max_pool_2x2(Var<Scalar> x) {
  detail::require_rank3("max_pool_2x2", x.tensor());
  const Index h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const Index ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) {
    throw DimensionError("max_pool_2x2: input " + to_string(x.shape()) + " too small");
  }
  const auto& in = x.value();
  Matrix<Scalar> y(ho * wo, c);
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(ho * wo * c));
  for (Index oy = 0; oy < ho; ++oy) {
    for (Index ox = 0; ox < wo; ++ox) {
      const Index out_row = oy * wo + ox;
      const Index base = (2 * oy) * w + 2 * ox;
      const Index candidates[4] = {base, base + 1, base + w, base + w + 1};
      for (Index ch = 0; ch < c; ++ch) {
        Index best = candidates[0];
        for (int k = 1; k < 4; ++k) {
          if (in(candidates[k], ch) > in(best, ch)) best = candidates[k];
        }
        y(out_row, ch) = in(best, ch);
        (*argmax)[static_cast<std::size_t>(out_row * c + ch)] = best;
      }
    }
  }
  Shape shape{ho, wo, c};
  return x.graph->record("max_pool_2x2", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x, argmax, c](const auto& up, const auto&, Graph<Scalar>& g) {
                           Matrix<Scalar>* dx = g.gradient_buffer(x);
                           if (!dx) return;
                           for (Index r = 0; r < up.rows(); ++r) {
                             for (Index ch = 0; ch < c; ++ch) {
                               (*dx)((*argmax)[static_cast<std::size_t>(r * c + ch)], ch) += up(r, ch);
                             }
                           }
                         });
}

/// Averages each channel of [H, W, C] over spatial positions, giving [1, C].
template <typename Scalar>
Var<Scalar> global_average_pool(Var<Scalar> x) {
  detail::require_rank3("global_average_pool", x.tensor());
  const Index positions = x.rows();
  Matrix<Scalar> y = x.value().colwise().mean();
  Shape shape{1, x.cols()};
  return x.graph->record("global_average_pool", Tensor<Scalar>(std::move(shape), std::move(y)), {x},
                         [x, positions](const auto& up, const auto&, Graph<Scalar>& g) {
                           g.accumulate(x, up.replicate(positions, 1) / static_cast<Scalar>(positions));
                         });
}

/// x W + b for a row-vector (or stacked rows) input; the bias broadcasts over rows.
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace fusionet
