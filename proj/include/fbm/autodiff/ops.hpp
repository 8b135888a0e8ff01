#pragma once

#include <fbm/autodiff/tape.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace fbm::ad {

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  require(a.valid() && b.valid(), std::string(op) + ": invalid variable");
  require(a.tape() == b.tape(), std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.rows(),
          "matmul: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Matrix out = av * bv;
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.tracked(a)) t.grad_buffer(a).noalias() += g * t.value(b).transpose();
    if (t.tracked(b)) t.grad_buffer(b).noalias() += t.value(a).transpose() * g;
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  detail::require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.tracked(a)) t.grad_buffer(a) += g;
    if (t.tracked(b)) t.grad_buffer(b) += g;
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "sub");
  detail::require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.tracked(a)) t.grad_buffer(a) += g;
    if (t.tracked(b)) t.grad_buffer(b) -= g;
  });
}

// Adds a 1 x c row to every row of a (bias broadcast).
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row, "add_row");
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(),
          "add_row: shape mismatch " + shape_str(av) + " vs " + shape_str(rv));
  Matrix out = av.rowwise() + rv.row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    if (t.tracked(a)) t.grad_buffer(a) += g;
    if (t.tracked(row)) t.grad_buffer(row) += g.colwise().sum();
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  detail::require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.tracked(a)) t.grad_buffer(a) += g.cwiseProduct(t.value(b));
    if (t.tracked(b)) t.grad_buffer(b) += g.cwiseProduct(t.value(a));
  });
}

// Multiplies every row of a elementwise by a 1 x c row (gain broadcast).
inline Var mul_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row, "mul_row");
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(),
          "mul_row: shape mismatch " + shape_str(av) + " vs " + shape_str(rv));
  Matrix out = av.array().rowwise() * rv.row(0).array();
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    if (t.tracked(a)) {
      t.grad_buffer(a).array() += g.array().rowwise() * t.value(row).row(0).array();
    }
    if (t.tracked(row)) t.grad_buffer(row) += g.cwiseProduct(t.value(a)).colwise().sum();
  });
}

// Multiplies row i of a by col(i, 0) (per-sample weights or masks).
inline Var mul_col(Var a, Var col) {
  Tape& t = detail::same_tape(a, col, "mul_col");
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  require(cv.cols() == 1 && cv.rows() == av.rows(),
          "mul_col: shape mismatch " + shape_str(av) + " vs " + shape_str(cv));
  Matrix out = av.array().colwise() * cv.col(0).array();
  return t.record(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g) {
    if (t.tracked(a)) {
      t.grad_buffer(a).array() += g.array().colwise() * t.value(col).col(0).array();
    }
    if (t.tracked(col)) t.grad_buffer(col) += g.cwiseProduct(t.value(a)).rowwise().sum();
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value() * s;
  return t.record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) {
    t.grad_buffer(a) += g * s;
  });
}

inline Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value().array() + s;
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.grad_buffer(a) += g; });
}

// Column-wise concatenation; all parts must share the row count.
inline Var concat(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat: no inputs");
  Tape& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require(p.tape() == &t, "concat: operands live on different tapes");
    require(p.rows() == rows, "concat: shape mismatch " + shape_str(parts.front().value()) +
                                  " vs " + shape_str(p.value()));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const Var& p : parts) {
      const Index c = t.value(p).cols();
      if (t.tracked(p)) t.grad_buffer(p) += g.middleCols(off, c);
      off += c;
    }
  });
}

inline Var slice(Var a, Index col_begin, Index col_count) {
  const Matrix& av = a.value();
  require(col_begin >= 0 && col_count >= 0 && col_begin + col_count <= av.cols(),
          "slice: columns [" + std::to_string(col_begin) + ", " +
              std::to_string(col_begin + col_count) + ") out of range for shape " + shape_str(av));
  Tape& t = *a.tape();
  Matrix out = av.middleCols(col_begin, col_count);
  return t.record(std::move(out), {a}, [a, col_begin, col_count](Tape& t, const Matrix& g) {
    t.grad_buffer(a).middleCols(col_begin, col_count) += g;
  });
}

inline Var slice_rows(Var a, Index row_begin, Index row_count) {
  const Matrix& av = a.value();
  require(row_begin >= 0 && row_count >= 0 && row_begin + row_count <= av.rows(),
          "slice_rows: rows [" + std::to_string(row_begin) + ", " +
              std::to_string(row_begin + row_count) + ") out of range for shape " + shape_str(av));
  Tape& t = *a.tape();
  Matrix out = av.middleRows(row_begin, row_count);
  return t.record(std::move(out), {a}, [a, row_begin, row_count](Tape& t, const Matrix& g) {
    t.grad_buffer(a).middleRows(row_begin, row_count) += g;
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().transpose();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_buffer(a) += g.transpose();
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh();
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value_at(self);
    t.grad_buffer(a).array() += g.array() * (1.0 - y.array().square());
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return detail::sigmoid(x); });
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value_at(self);
    t.grad_buffer(a).array() += g.array() * s.array() * (1.0 - s.array());
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_buffer(a).array() += (t.value(a).array() > 0.0).select(g.array(), 0.0);
  });
}

inline Var square(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().square();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_buffer(a).array() += 2.0 * g.array() * t.value(a).array();
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_buffer(a).array() += g(0, 0);
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

// Sum over columns: [n x c] -> [n x 1].
inline Var row_sum(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.grad_buffer(a).colwise() += g.col(0);
  });
}

// Row-wise inner product: [n x c], [n x c] -> [n x 1].
inline Var row_dot(Var a, Var b) { return row_sum(mul(a, b)); }

// Projects each row onto the sphere of radius target_norm.
inline Var l2_normalize(Var a, double target_norm) {
  const Matrix& av = a.value();
  const Vector norms = av.rowwise().norm();
  require((norms.array() > 0.0).all(), "l2_normalize: zero row cannot be normalised");
  Tape& t = *a.tape();
  Matrix out = (av.array().colwise() / norms.array()) * target_norm;
  return t.record(std::move(out), {a}, [a, target_norm](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    const Vector n = x.rowwise().norm();
    const Matrix unit = x.array().colwise() / n.array();
    const Vector along = g.cwiseProduct(unit).rowwise().sum();
    Matrix proj = g - (unit.array().colwise() * along.array()).matrix();
    t.grad_buffer(a).array() += (proj.array().colwise() / n.array()) * target_norm;
  });
}

// Row-wise RMS normalisation without gain: x / sqrt(mean(x^2) + eps).
inline Var rms_norm(Var a, double eps = 1e-5) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  const double c = static_cast<double>(x.cols());
  const Vector r = ((x.array().square().rowwise().sum() / c) + eps).sqrt();
  Matrix out = x.array().colwise() / r.array();
  return t.record(std::move(out), {a}, [a, eps](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    const double c = static_cast<double>(x.cols());
    const Vector r = ((x.array().square().rowwise().sum() / c) + eps).sqrt();
    const Matrix y = x.array().colwise() / r.array();
    const Vector gy = g.cwiseProduct(y).rowwise().sum() / c;
    Matrix dx = g - (y.array().colwise() * gy.array()).matrix();
    t.grad_buffer(a).array() += dx.array().colwise() / r.array();
  });
}

// Row-wise standardisation: (x - mean) / sqrt(var + eps).
inline Var layer_norm(Var a, double eps = 1e-5) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  const double c = static_cast<double>(x.cols());
  const Vector mu = x.rowwise().sum() / c;
  const Matrix xc = x.colwise() - mu;
  const Vector sd = ((xc.array().square().rowwise().sum() / c) + eps).sqrt();
  Matrix out = xc.array().colwise() / sd.array();
  return t.record(std::move(out), {a}, [a, eps](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    const double c = static_cast<double>(x.cols());
    const Vector mu = x.rowwise().sum() / c;
    const Matrix xc = x.colwise() - mu;
    const Vector sd = ((xc.array().square().rowwise().sum() / c) + eps).sqrt();
    const Matrix y = xc.array().colwise() / sd.array();
    const Vector gm = g.rowwise().sum() / c;
    const Vector gy = g.cwiseProduct(y).rowwise().sum() / c;
    Matrix dx = (g.colwise() - gm) - (y.array().colwise() * gy.array()).matrix();
    t.grad_buffer(a).array() += dx.array().colwise() / sd.array();
  });
}

// Value copy that blocks gradient flow.
inline Var detach(Var a) { return a.tape()->constant(a.value()); }

}  // namespace fbm::ad
