// Copyright 2026 The hlgen Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hlgen/autodiff/graph.hpp"
#include "hlgen/autodiff/tensor.hpp"
#include "hlgen/error.hpp"

// Differentiable primitives. Each op checks its shapes in the forward pass
// and accumulates input adjoints in the backward pass.
namespace hlgen::ad {

/// Lower bound applied inside loss-side logarithms.
inline constexpr double kLogFloor = 1e-12;

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Index maps for the supported broadcasts: equal shapes, a scalar operand,
// or a rank-1 operand repeated across the rows of a rank-2 operand.
struct Broadcast {
  enum Kind { same, a_scalar, b_scalar, a_row, b_row } kind = same;
  Shape out;

  static Broadcast of(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return {same, a.shape()};
    if (b.size() == 1 && b.rank() <= 1) return {b_scalar, a.shape()};
    if (a.size() == 1 && a.rank() <= 1) return {a_scalar, b.shape()};
    if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) return {b_row, a.shape()};
    if (b.rank() == 2 && a.rank() == 1 && b.dim(1) == a.dim(0)) return {a_row, b.shape()};
    throw ShapeError("incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  std::size_t ia(std::size_t i, std::size_t n) const {
    switch (kind) {
      case a_scalar: return 0;
      case a_row: return i % n;
      default: return i;
    }
  }
  std::size_t ib(std::size_t i, std::size_t n) const {
    switch (kind) {
      case b_scalar: return 0;
      case b_row: return i % n;
      default: return i;
    }
  }
  std::size_t row_len() const { return out.empty() ? 1 : out.back(); }
};

// f(a, b) elementwise; da(a, b) and db(a, b) are the partials.
template <class F, class Da, class Db>
Var binary(std::string_view name, Var a, Var b, F f, Da da, Db db) {
  Graph& g = *a.graph;
  return g.apply(
      name, {a, b},
      [f](const std::vector<const Tensor*>& in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        const Broadcast bc = Broadcast::of(x, y);
        Tensor out(bc.out);
        const std::size_t n = bc.row_len();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[bc.ia(i, n)], y[bc.ib(i, n)]);
        return out;
      },
      [da, db](const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& gout,
               const std::vector<Tensor*>& gin) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        const Broadcast bc = Broadcast::of(x, y);
        const std::size_t n = bc.row_len();
        for (std::size_t i = 0; i < out.size(); ++i) {
          const double xa = x[bc.ia(i, n)];
          const double yb = y[bc.ib(i, n)];
          if (gin[0]) (*gin[0])[bc.ia(i, n)] += gout[i] * da(xa, yb);
          if (gin[1]) (*gin[1])[bc.ib(i, n)] += gout[i] * db(xa, yb);
        }
      });
}

// y = f(x) elementwise; df(x, y) is dy/dx.
template <class F, class Df>
Var unary(std::string_view name, Var a, F f, Df df) {
  return a.graph->apply(
      name, {a},
      [f](const std::vector<const Tensor*>& in) {
        Tensor out(in[0]->shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f((*in[0])[i]);
        return out;
      },
      [df](const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& gout,
           const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < out.size(); ++i) (*gin[0])[i] += gout[i] * df((*in[0])[i], out[i]);
      });
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

/// Elementwise minimum; at ties the adjoint goes to `a`.
inline Var minimum(Var a, Var b) {
  return detail::binary(
      "minimum", a, b, [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

/// scale * a + shift
inline Var affine(Var a, double scale, double shift = 0.0) {
  return detail::unary(
      "affine", a, [scale, shift](double x) { return scale * x + shift; },
      [scale](double, double) { return scale; });
}

inline Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

inline Var sigmoid(Var a) {
  return detail::unary(
      "sigmoid", a, [](double x) { return detail::sigmoid_value(x); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var log(Var a) {
  return detail::unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// log(max(x, floor)); the adjoint is zero where the floor is active.
inline Var log_floor(Var a, double floor = kLogFloor) {
  return detail::unary(
      "log_floor", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

/// Softmax over the last axis (rank 1 or 2), max-subtracted.
inline Var softmax(Var a) {
  return a.graph->apply(
      "softmax", {a},
      [](const std::vector<const Tensor*>& in) {
        const Tensor& x = *in[0];
        detail::require(x.rank() == 1 || x.rank() == 2, "softmax expects rank 1 or 2, got " +
                                                            shape_str(x.shape()));
        Tensor out(x.shape());
        const std::size_t n = x.shape().back();
        detail::require(n > 0, "softmax over empty axis");
        for (std::size_t r = 0; r < x.size() / n; ++r) {
          const double* xi = x.data().data() + r * n;
          double* yi = out.data().data() + r * n;
          const double m = *std::max_element(xi, xi + n);
          double z = 0.0;
          for (std::size_t j = 0; j < n; ++j) z += (yi[j] = std::exp(xi[j] - m));
          for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
        }
        return out;
      },
      [](const std::vector<const Tensor*>&, const Tensor& y, const Tensor& gy,
         const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const std::size_t n = y.shape().back();
        for (std::size_t r = 0; r < y.size() / n; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += gy[r * n + j] * y[r * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            (*gin[0])[r * n + j] += y[r * n + j] * (gy[r * n + j] - dot);
          }
        }
      });
}

/// Matrix products: [m,k]x[k,n], [m,k]x[k] and [k]x[k,n].
inline Var matmul(Var a, Var b) {
  return a.graph->apply(
      "matmul", {a, b},
      [](const std::vector<const Tensor*>& in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        if (x.rank() == 2 && y.rank() == 2) {
          detail::require(x.dim(1) == y.dim(0), "matmul " + shape_str(x.shape()) + " x " +
                                                    shape_str(y.shape()));
          const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
          Tensor out(Shape{m, n});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double xv = x[i * k + p];
              for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
            }
          return out;
        }
        if (x.rank() == 2 && y.rank() == 1) {
          detail::require(x.dim(1) == y.dim(0), "matmul " + shape_str(x.shape()) + " x " +
                                                    shape_str(y.shape()));
          const std::size_t m = x.dim(0), k = x.dim(1);
          Tensor out(Shape{m});
          for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += x[i * k + p] * y[p];
            out[i] = s;
          }
          return out;
        }
        if (x.rank() == 1 && y.rank() == 2) {
          detail::require(x.dim(0) == y.dim(0), "matmul " + shape_str(x.shape()) + " x " +
                                                    shape_str(y.shape()));
          const std::size_t k = y.dim(0), n = y.dim(1);
          Tensor out(Shape{n});
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) out[j] += x[p] * y[p * n + j];
          return out;
        }
        throw ShapeError("matmul " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        if (x.rank() == 2 && y.rank() == 2) {
          const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double xv = x[i * k + p];
              for (std::size_t j = 0; j < n; ++j) {
                acc += g[i * n + j] * y[p * n + j];
                if (gin[1]) (*gin[1])[p * n + j] += xv * g[i * n + j];
              }
              if (gin[0]) (*gin[0])[i * k + p] += acc;
            }
        } else if (x.rank() == 2) {
          const std::size_t m = x.dim(0), k = x.dim(1);
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            for (std::size_t p = 0; p < k; ++p) {
              if (gin[0]) (*gin[0])[i * k + p] += gi * y[p];
              if (gin[1]) (*gin[1])[p] += gi * x[i * k + p];
            }
          }
        } else {
          const std::size_t k = y.dim(0), n = y.dim(1);
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += y[p * n + j] * g[j];
              if (gin[1]) (*gin[1])[p * n + j] += x[p] * g[j];
            }
            if (gin[0]) (*gin[0])[p] += acc;
          }
        }
      });
}

inline Var transpose(Var a) {
  return a.graph->apply(
      "transpose", {a},
      [](const std::vector<const Tensor*>& in) {
        const Tensor& x = *in[0];
        detail::require(x.rank() == 2, "transpose expects rank 2, got " + shape_str(x.shape()));
        const std::size_t m = x.dim(0), n = x.dim(1);
        Tensor out(Shape{n, m});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
        return out;
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const std::size_t m = in[0]->dim(0), n = in[0]->dim(1);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += g[j * m + i];
      });
}

/// Inner product of two rank-1 tensors, as a scalar.
inline Var dot(Var a, Var b) {
  return a.graph->apply(
      "dot", {a, b},
      [](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && in[0]->shape() == in[1]->shape(),
                        "dot " + shape_str(in[0]->shape()) + " . " + shape_str(in[1]->shape()));
        double s = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) s += (*in[0])[i] * (*in[1])[i];
        return Tensor::scalar(s);
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        const double gv = g[0];
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          if (gin[0]) (*gin[0])[i] += gv * (*in[1])[i];
          if (gin[1]) (*gin[1])[i] += gv * (*in[0])[i];
        }
      });
}

/// u v^T for rank-1 u, v.
inline Var outer(Var u, Var v) {
  return u.graph->apply(
      "outer", {u, v},
      [](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && in[1]->rank() == 1, "outer expects rank-1 inputs");
        const std::size_t m = in[0]->size(), n = in[1]->size();
        Tensor out(Shape{m, n});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (*in[0])[i] * (*in[1])[j];
        return out;
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        const std::size_t m = in[0]->size(), n = in[1]->size();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            if (gin[0]) (*gin[0])[i] += g[i * n + j] * (*in[1])[j];
            if (gin[1]) (*gin[1])[j] += g[i * n + j] * (*in[0])[i];
          }
      });
}

/// Concatenates rank-1 tensors.
inline Var concat(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat of nothing");
  return parts.front().graph->apply(
      "concat", parts,
      [](const std::vector<const Tensor*>& in) {
        std::vector<double> out;
        for (const Tensor* t : in) {
          detail::require(t->rank() == 1, "concat expects rank-1 parts, got " +
                                              shape_str(t->shape()));
          out.insert(out.end(), t->data().begin(), t->data().end());
        }
        return Tensor::vector(std::move(out));
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::size_t n = in[k]->size();
          if (gin[k])
            for (std::size_t i = 0; i < n; ++i) (*gin[k])[i] += g[off + i];
          off += n;
        }
      });
}

/// Stacks equal-length rank-1 tensors into the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  detail::require(!rows.empty(), "stack_rows of nothing");
  return rows.front().graph->apply(
      "stack_rows", rows,
      [](const std::vector<const Tensor*>& in) {
        const std::size_t d = in[0]->size();
        std::vector<double> out;
        out.reserve(in.size() * d);
        for (const Tensor* t : in) {
          detail::require(t->rank() == 1 && t->size() == d, "stack_rows: ragged rows");
          out.insert(out.end(), t->data().begin(), t->data().end());
        }
        return Tensor::matrix(in.size(), d, std::move(out));
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        const std::size_t d = in[0]->size();
        for (std::size_t k = 0; k < in.size(); ++k)
          if (gin[k])
            for (std::size_t i = 0; i < d; ++i) (*gin[k])[i] += g[k * d + i];
      });
}

/// Contiguous slice [offset, offset+length) of a rank-1 tensor.
inline Var slice(Var a, std::size_t offset, std::size_t length) {
  return a.graph->apply(
      "slice", {a},
      [offset, length](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && offset + length <= in[0]->size(),
                        "slice [" + std::to_string(offset) + "," + std::to_string(offset + length) +
                            ") of " + shape_str(in[0]->shape()));
        auto d = in[0]->data().subspan(offset, length);
        return Tensor::vector(std::vector<double>(d.begin(), d.end()));
      },
      [offset](const std::vector<const Tensor*>&, const Tensor& out, const Tensor& g,
               const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < out.size(); ++i) (*gin[0])[offset + i] += g[i];
      });
}

/// Splits a rank-1 tensor into `parts` equal slices.
inline std::vector<Var> split(Var a, std::size_t parts) {
  const std::size_t n = a.value().size();
  if (a.value().rank() != 1 || parts == 0 || n % parts != 0) {
    throw ShapeError("cannot split " + shape_str(a.shape()) + " into " + std::to_string(parts));
  }
  std::vector<Var> out;
  for (std::size_t k = 0; k < parts; ++k) out.push_back(slice(a, k * (n / parts), n / parts));
  return out;
}

/// Embedding lookup of several rows: [V,d] -> [n,d].
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
  return table.graph->apply(
      "gather_rows", {table},
      [ids](const std::vector<const Tensor*>& in) {
        const Tensor& t = *in[0];
        detail::require(t.rank() == 2, "gather_rows expects a matrix");
        const std::size_t d = t.dim(1);
        std::vector<double> out;
        out.reserve(ids.size() * d);
        for (std::size_t id : ids) {
          detail::require(id < t.dim(0), "gather_rows: id " + std::to_string(id) +
                                             " out of range " + std::to_string(t.dim(0)));
          auto r = t.data().subspan(id * d, d);
          out.insert(out.end(), r.begin(), r.end());
        }
        return Tensor::matrix(ids.size(), d, std::move(out));
      },
      [ids](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
            const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const std::size_t d = in[0]->dim(1);
        for (std::size_t k = 0; k < ids.size(); ++k)
          for (std::size_t i = 0; i < d; ++i) (*gin[0])[ids[k] * d + i] += g[k * d + i];
      });
}

/// Embedding lookup of one row: [V,d] -> [d].
inline Var row(Var table, std::size_t id) {
  return table.graph->apply(
      "row", {table},
      [id](const std::vector<const Tensor*>& in) {
        const Tensor& t = *in[0];
        detail::require(t.rank() == 2 && id < t.dim(0),
                        "row " + std::to_string(id) + " of " + shape_str(t.shape()));
        auto r = t.data().subspan(id * t.dim(1), t.dim(1));
        return Tensor::vector(std::vector<double>(r.begin(), r.end()));
      },
      [id](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
           const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const std::size_t d = in[0]->dim(1);
        for (std::size_t i = 0; i < d; ++i) (*gin[0])[id * d + i] += g[i];
      });
}

/// Element `index` of a rank-1 tensor, as a scalar.
inline Var pick(Var a, std::size_t index) {
  return a.graph->apply(
      "pick", {a},
      [index](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && index < in[0]->size(),
                        "pick " + std::to_string(index) + " of " + shape_str(in[0]->shape()));
        return Tensor::scalar((*in[0])[index]);
      },
      [index](const std::vector<const Tensor*>&, const Tensor&, const Tensor& g,
              const std::vector<Tensor*>& gin) {
        if (gin[0]) (*gin[0])[index] += g[0];
      });
}

/// Zero-extends a rank-1 tensor to length `size`.
inline Var pad_end(Var a, std::size_t size) {
  return a.graph->apply(
      "pad_end", {a},
      [size](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && in[0]->size() <= size,
                        "pad_end " + shape_str(in[0]->shape()) + " to " + std::to_string(size));
        Tensor out(Shape{size});
        std::copy(in[0]->data().begin(), in[0]->data().end(), out.data().begin());
        return out;
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < in[0]->size(); ++i) (*gin[0])[i] += g[i];
      });
}

/// out[indices[i]] += a[i] into a zero vector of length `size`.
inline Var scatter_add(Var a, std::vector<std::size_t> indices, std::size_t size) {
  return a.graph->apply(
      "scatter_add", {a},
      [indices, size](const std::vector<const Tensor*>& in) {
        detail::require(in[0]->rank() == 1 && in[0]->size() == indices.size(),
                        "scatter_add: " + shape_str(in[0]->shape()) + " with " +
                            std::to_string(indices.size()) + " indices");
        Tensor out(Shape{size});
        for (std::size_t i = 0; i < indices.size(); ++i) {
          detail::require(indices[i] < size, "scatter_add: index out of range");
          out[indices[i]] += (*in[0])[i];
        }
        return out;
      },
      [indices](const std::vector<const Tensor*>&, const Tensor&, const Tensor& g,
                const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < indices.size(); ++i) (*gin[0])[i] += g[indices[i]];
      });
}

inline Var sum(Var a) {
  return a.graph->apply(
      "sum", {a},
      [](const std::vector<const Tensor*>& in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return Tensor::scalar(s);
      },
      [](const std::vector<const Tensor*>&, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (double& v : gin[0]->data()) v += g[0];
      });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Sum of a list of scalars.
inline Var add_n(const std::vector<Var>& terms) {
  detail::require(!terms.empty(), "add_n of nothing");
  return terms.front().graph->apply(
      "add_n", terms,
      [](const std::vector<const Tensor*>& in) {
        double s = 0.0;
        for (const Tensor* t : in) {
          detail::require(t->size() == 1, "add_n expects scalars");
          s += (*t)[0];
        }
        return Tensor::scalar(s);
      },
      [](const std::vector<const Tensor*>& in, const Tensor&, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        for (std::size_t k = 0; k < in.size(); ++k)
          if (gin[k]) (*gin[k])[0] += g[0];
      });
}

/// Valid 1-D convolution over the token axis.
/// x: [L, C], w: [F, k, C], b: [F]  ->  [L-k+1, F].
inline Var conv1d(Var x, Var w, Var b) {
  return x.graph->apply(
      "conv1d", {x, w, b},
      [](const std::vector<const Tensor*>& in) {
        const Tensor& X = *in[0];
        const Tensor& W = *in[1];
        const Tensor& B = *in[2];
        detail::require(X.rank() == 2 && W.rank() == 3 && B.rank() == 1 && W.dim(2) == X.dim(1) &&
                            B.dim(0) == W.dim(0),
                        "conv1d x" + shape_str(X.shape()) + " w" + shape_str(W.shape()) + " b" +
                            shape_str(B.shape()));
        const std::size_t L = X.dim(0), C = X.dim(1), F = W.dim(0), k = W.dim(1);
        detail::require(L >= k, "conv1d: sequence length " + std::to_string(L) +
                                    " shorter than filter width " + std::to_string(k));
        const std::size_t T = L - k + 1;
        Tensor out(Shape{T, F});
        for (std::size_t t = 0; t < T; ++t) {
          const double* xt = X.data().data() + t * C;
          for (std::size_t f = 0; f < F; ++f) {
            const double* wf = W.data().data() + f * k * C;
            double s = B[f];
            for (std::size_t q = 0; q < k * C; ++q) s += wf[q] * xt[q];
            out[t * F + f] = s;
          }
        }
        return out;
      },
      [](const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        const Tensor& X = *in[0];
        const Tensor& W = *in[1];
        const std::size_t C = X.dim(1), F = W.dim(0), k = W.dim(1), T = out.dim(0);
        for (std::size_t t = 0; t < T; ++t) {
          const double* xt = X.data().data() + t * C;
          for (std::size_t f = 0; f < F; ++f) {
            const double gv = g[t * F + f];
            if (gv == 0.0) continue;
            const double* wf = W.data().data() + f * k * C;
            if (gin[2]) (*gin[2])[f] += gv;
            if (gin[1]) {
              double* gw = gin[1]->data().data() + f * k * C;
              for (std::size_t q = 0; q < k * C; ++q) gw[q] += gv * xt[q];
            }
            if (gin[0]) {
              double* gx = gin[0]->data().data() + t * C;
              for (std::size_t q = 0; q < k * C; ++q) gx[q] += gv * wf[q];
            }
          }
        }
      });
}

/// Column-wise max over rows: [T, F] -> [F]. Ties route the adjoint to the first row.
inline Var max_over_time(Var a) {
  return a.graph->apply(
      "max_over_time", {a},
      [](const std::vector<const Tensor*>& in) {
        const Tensor& x = *in[0];
        detail::require(x.rank() == 2 && x.dim(0) > 0, "max_over_time expects [T>0, F], got " +
                                                           shape_str(x.shape()));
        const std::size_t T = x.dim(0), F = x.dim(1);
        Tensor out(Shape{F}, -std::numeric_limits<double>::infinity());
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) out[f] = std::max(out[f], x[t * F + f]);
        return out;
      },
      [](const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& g,
         const std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const Tensor& x = *in[0];
        const std::size_t T = x.dim(0), F = x.dim(1);
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t t = 0; t < T; ++t)
            if (x[t * F + f] == out[f]) {
              (*gin[0])[t * F + f] += g[f];
              break;
            }
      });
}

/// Copy of the current value with no path back to `a`.
inline Var detach(Var a) { return a.graph->constant(a.value()); }

}  // namespace hlgen::ad
