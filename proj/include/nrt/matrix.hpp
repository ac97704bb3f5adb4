#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrt/errors.hpp"
#include "nrt/rng.hpp"

namespace nrt {

// Dense row-major matrix of doubles. Vectors are d x 1 matrices; batches
// live in columns (one sample per column) so the hot paths are plain GEMMs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row_ptr(std::size_t i) { return data.data() + i * cols; }
  const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(0.0); }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& v : data) v = rng.uniform(lo, hi);
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

// ---------------------------------------------------------------------------
// GEMM kernels. i-k-j ordering keeps the inner loop contiguous on both the
// accumulator row and the rhs row, which is enough at desk scale.

inline void add_matmul(Matrix& dst, const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows && dst.rows == a.rows && dst.cols == b.cols,
          "matmul: " + a.shape_str() + " * " + b.shape_str() + " -> " + dst.shape_str());
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* drow = dst.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) drow[j] += aik * brow[j];
    }
  }
}

// dst += a^T * b  (a: k x m, b: k x n, dst: m x n)
inline void add_matmul_tn(Matrix& dst, const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && dst.rows == a.cols && dst.cols == b.cols,
          "matmul_tn: " + a.shape_str() + "^T * " + b.shape_str() + " -> " + dst.shape_str());
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* drow = dst.row_ptr(i);
      for (std::size_t j = 0; j < b.cols; ++j) drow[j] += aki * brow[j];
    }
  }
}

// dst += a * b^T  (a: m x k, b: n x k, dst: m x n)
inline void add_matmul_nt(Matrix& dst, const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols && dst.rows == a.rows && dst.cols == b.rows,
          "matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T -> " + dst.shape_str());
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* drow = dst.row_ptr(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row_ptr(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      drow[j] += acc;
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  add_matmul(out, a, b);
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise helpers.

inline void add_inplace(Matrix& dst, const Matrix& src) {
  require(dst.same_shape(src), "add: " + dst.shape_str() + " vs " + src.shape_str());
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

inline void axpy(Matrix& dst, double alpha, const Matrix& src) {
  require(dst.same_shape(src), "axpy: " + dst.shape_str() + " vs " + src.shape_str());
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += alpha * src.data[i];
}

inline void scale_inplace(Matrix& dst, double alpha) {
  for (double& v : dst.data) v *= alpha;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard: " + a.shape_str() + " vs " + b.shape_str());
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

// dst(i, 0) += sum_j src(i, j); bias gradients.
inline void add_row_sums(Matrix& dst, const Matrix& src) {
  require(dst.rows == src.rows && dst.cols == 1,
          "row_sums: " + src.shape_str() + " -> " + dst.shape_str());
  for (std::size_t i = 0; i < src.rows; ++i) {
    const double* srow = src.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < src.cols; ++j) acc += srow[j];
    dst.data[i] += acc;
  }
}

inline double squared_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data) acc += v * v;
  return acc;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Affine layer: out = W x + b with b broadcast across columns.

inline Matrix affine(const Matrix& w, const Matrix& x, const Matrix& b) {
  require(w.cols == x.rows,
          "affine: weights " + w.shape_str() + " incompatible with input " + x.shape_str());
  require(b.rows == w.rows && b.cols == 1,
          "affine: bias " + b.shape_str() + " incompatible with weights " + w.shape_str());
  Matrix out(w.rows, x.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* orow = out.row_ptr(i);
    const double bi = b.data[i];
    for (std::size_t j = 0; j < out.cols; ++j) orow[j] = bi;
  }
  add_matmul(out, w, x);
  return out;
}

// Accumulates dL/dW, dL/dx, dL/db given dL/dout. Any of the outputs may be
// null when the caller does not need that path.
inline void affine_backward(const Matrix& w, const Matrix& x, const Matrix& d_out,
                            Matrix* dw, Matrix* dx, Matrix* db) {
  if (dw != nullptr) add_matmul_nt(*dw, d_out, x);
  if (dx != nullptr) add_matmul_tn(*dx, w, d_out);
  if (db != nullptr) add_row_sums(*db, d_out);
}

// ---------------------------------------------------------------------------
// Activations. Backward variants take the forward *output*, which is all the
// sigmoid/tanh derivatives need.

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class Activation { kSigmoid, kTanh };

inline Matrix activate(const Matrix& x, Activation kind) {
  Matrix out(x.rows, x.cols);
  if (kind == Activation::kSigmoid) {
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = sigmoid_scalar(x.data[i]);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::tanh(x.data[i]);
  }
  return out;
}

// d_pre = d_out * f'(pre) expressed through the activation output.
inline Matrix activate_backward(const Matrix& out, const Matrix& d_out, Activation kind) {
  require(out.same_shape(d_out),
          "activate_backward: " + out.shape_str() + " vs " + d_out.shape_str());
  Matrix d_pre(out.rows, out.cols);
  if (kind == Activation::kSigmoid) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double y = out.data[i];
      d_pre.data[i] = d_out.data[i] * y * (1.0 - y);
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double y = out.data[i];
      d_pre.data[i] = d_out.data[i] * (1.0 - y * y);
    }
  }
  return d_pre;
}

// ---------------------------------------------------------------------------
// Column softmax with max-subtraction; each column is one distribution.

inline Matrix softmax_columns(const Matrix& x) {
  Matrix out(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mx = x(0, j);
    for (std::size_t i = 1; i < x.rows; ++i) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double e = std::exp(x(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < x.rows; ++i) out(i, j) *= inv;
  }
  return out;
}

// log softmax computed directly from logits: (x - max) - log(sum exp(x - max)).
// Keeps NLL finite even when the probability underflows.
inline Matrix log_softmax_columns(const Matrix& x) {
  Matrix out(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mx = x(0, j);
    for (std::size_t i = 1; i < x.rows; ++i) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sum += std::exp(x(i, j) - mx);
    const double lse = std::log(sum);
    for (std::size_t i = 0; i < x.rows; ++i) out(i, j) = x(i, j) - mx - lse;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Column gather/scatter. Embedding lookups and latent factor lookups are the
// same operation on different tables.

inline void check_column_index(const Matrix& table, std::size_t index, const char* what) {
  if (index >= table.cols) {
    throw IndexError(std::string(what) + ": index " + std::to_string(index) +
                     " out of range for table " + table.shape_str());
  }
}

inline Matrix gather_columns(const Matrix& table, std::span<const int> indices) {
  Matrix out(table.rows, indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    check_column_index(table, static_cast<std::size_t>(indices[j]), "gather_columns");
    for (std::size_t i = 0; i < table.rows; ++i) out(i, j) = table(i, static_cast<std::size_t>(indices[j]));
  }
  return out;
}

// grad(:, indices[j]) += d(:, j). Duplicate indices sum their contributions.
inline void scatter_add_columns(Matrix& grad, std::span<const int> indices, const Matrix& d) {
  require(grad.rows == d.rows && d.cols == indices.size(),
          "scatter_add_columns: " + grad.shape_str() + " vs " + d.shape_str());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    check_column_index(grad, static_cast<std::size_t>(indices[j]), "scatter_add_columns");
    for (std::size_t i = 0; i < grad.rows; ++i) grad(i, static_cast<std::size_t>(indices[j])) += d(i, j);
  }
}

// Single-token views of the same thing, matching the embedding table layout
// (one column per vocabulary entry).
inline Matrix embed_lookup(const Matrix& table, int index) {
  const int idx[1] = {index};
  return gather_columns(table, idx);
}

inline void embed_scatter_grad(Matrix& grad, int index, const Matrix& dvec) {
  const int idx[1] = {index};
  scatter_add_columns(grad, idx, dvec);
}

// ---------------------------------------------------------------------------
// Column argmax with ties broken toward the lowest row index.

inline std::size_t argmax_column(const Matrix& m, std::size_t col) {
  std::size_t best = 0;
  double best_v = m(0, col);
  for (std::size_t i = 1; i < m.rows; ++i) {
    if (m(i, col) > best_v) {
      best_v = m(i, col);
      best = i;
    }
  }
  return best;
}

}  // namespace nrt
