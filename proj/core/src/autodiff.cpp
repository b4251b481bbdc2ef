#include "sivcast/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sivcast/error.hpp"
#include "kernels.hpp"

namespace sivcast::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MatMap(data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

ConstMatMap as_matrix(std::span<const double> data, std::size_t rows,
                      std::size_t cols) {
  return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

void require_rank(const DArray& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " operand, got shape " + to_string(a.shape()));
  }
}

void require_same_shape(const DArray& a, const DArray& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

// Rows/cols of a rank-1 or rank-2 array, viewing rank 1 as a single row.
std::pair<std::size_t, std::size_t> as_rows_cols(const DArray& a, const char* op) {
  if (a.rank() == 1) return {1, a.dim(0)};
  if (a.rank() == 2) return {a.dim(0), a.dim(1)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got shape " +
                       to_string(a.shape()));
}

template <typename Forward, typename Derivative>
DArray unary(Tape& tape, const DArray& a, Forward f, Derivative df) {
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output(a.shape(), track);
  auto in = a.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  if (track) {
    tape.record(out, [a, out, df]() mutable {
      auto x = a.values();
      auto y = out.values();
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// DArray ------------------------------------------------------------------

DArray DArray::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

DArray DArray::filled(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("array dimensions must be positive: " + to_string(shape));
  }
  auto s = std::make_shared<detail::Storage>();
  const auto n = element_count(shape);
  s->shape = std::move(shape);
  s->value.assign(n, value);
  s->requires_grad = requires_grad;
  if (requires_grad) s->grad.assign(n, 0.0);
  return DArray(std::move(s));
}

DArray DArray::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (element_count(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  DArray out = zeros(std::move(shape), requires_grad);
  out.s_->value.assign(values.begin(), values.end());
  return out;
}

DArray DArray::scalar(double value, bool requires_grad) {
  return filled({}, value, requires_grad);
}

double DArray::item() const {
  if (size() != 1) {
    throw DimensionError("item() on non-scalar array of shape " + to_string(shape()));
  }
  return s_->value[0];
}

void DArray::zero_grad() const { std::fill(s_->grad.begin(), s_->grad.end(), 0.0); }

DArray DArray::clone() const {
  DArray out = zeros(s_->shape, s_->requires_grad);
  out.s_->value = s_->value;
  return out;
}

// Tape --------------------------------------------------------------------

DArray Tape::make_output(Shape shape, bool differentiable) const {
  auto s = std::make_shared<detail::Storage>();
  const auto n = element_count(shape);
  s->shape = std::move(shape);
  s->value.assign(n, 0.0);
  s->requires_grad = differentiable;
  return DArray(std::move(s));
}

bool Tape::tracks(std::initializer_list<const DArray*> inputs) const {
  if (!record_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const DArray* a) { return a->requires_grad(); });
}

void Tape::record(DArray output, std::function<void()> backward) {
  entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const DArray& loss) {
  if (!loss.valid() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.valid() ? to_string(loss.shape()) : std::string("<null>")));
  }
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.output.same_storage(loss); });
  if (it == entries_.rend()) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  for (auto& e : entries_) e.output.s_->grad.assign(e.output.size(), 0.0);
  DArray seed = loss;
  seed.mutable_grad()[0] = 1.0;
  for (; it != entries_.rend(); ++it) it->backward();
}

// Linear algebra ----------------------------------------------------------

DArray matmul(Tape& tape, const DArray& a, const DArray& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) +
                         " · " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output({m, n}, track);
  as_matrix(out.mutable_values(), m, n).noalias() =
      as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  if (track) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto gc = as_matrix(out.grad(), m, n);
      if (a.requires_grad()) {
        as_matrix(a.mutable_grad(), m, k).noalias() +=
            gc * as_matrix(b.values(), k, n).transpose();
      }
      if (b.requires_grad()) {
        as_matrix(b.mutable_grad(), k, n).noalias() +=
            as_matrix(a.values(), m, k).transpose() * gc;
      }
    });
  }
  return out;
}

DArray matmul_transposed(Tape& tape, const DArray& a, const DArray& b) {
  require_rank(a, 2, "matmul_transposed");
  require_rank(b, 2, "matmul_transposed");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_transposed: inner dimensions differ, " +
                         to_string(a.shape()) + " · " + to_string(b.shape()) + "ᵀ");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output({m, n}, track);
  as_matrix(out.mutable_values(), m, n).noalias() =
      as_matrix(a.values(), m, k) * as_matrix(b.values(), n, k).transpose();
  if (track) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto gc = as_matrix(out.grad(), m, n);
      if (a.requires_grad()) {
        as_matrix(a.mutable_grad(), m, k).noalias() += gc * as_matrix(b.values(), n, k);
      }
      if (b.requires_grad()) {
        as_matrix(b.mutable_grad(), n, k).noalias() +=
            gc.transpose() * as_matrix(a.values(), m, k);
      }
    });
  }
  return out;
}

// Elementwise -------------------------------------------------------------

DArray add(Tape& tape, const DArray& a, const DArray& b) {
  require_same_shape(a, b, "add");
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output(a.shape(), track);
  auto o = out.mutable_values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (track) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

DArray sub(Tape& tape, const DArray& a, const DArray& b) {
  require_same_shape(a, b, "sub");
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output(a.shape(), track);
  auto o = out.mutable_values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (track) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

DArray mul(Tape& tape, const DArray& a, const DArray& b) {
  require_same_shape(a, b, "mul");
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output(a.shape(), track);
  auto o = out.mutable_values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (track) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto y = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto x = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

namespace {

template <typename Kernel, typename Derivative>
DArray activation(Tape& tape, const DArray& a, Kernel kernel, Derivative df) {
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output(a.shape(), track);
  kernel(a.values().data(), out.mutable_values().data(), a.size());
  if (track) {
    tape.record(out, [a, out, df]() mutable {
      auto y = out.values();
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(y[i]);
    });
  }
  return out;
}

}  // namespace

DArray sigmoid(Tape& tape, const DArray& a) {
  return activation(tape, a, kernels::sigmoid, [](double y) { return y * (1.0 - y); });
}

DArray tanh(Tape& tape, const DArray& a) {
  return activation(tape, a, kernels::tanh, [](double y) { return 1.0 - y * y; });
}

DArray relu(Tape& tape, const DArray& a) {
  return unary(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

DArray scale(Tape& tape, const DArray& a, double c) {
  return unary(
      tape, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

DArray mul_scalar(Tape& tape, const DArray& s, const DArray& a) {
  if (s.size() != 1) {
    throw DimensionError("mul_scalar: first operand must be scalar, got shape " +
                         to_string(s.shape()));
  }
  const bool track = tape.tracks({&s, &a});
  DArray out = tape.make_output(a.shape(), track);
  const double c = s[0];
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * x[i];
  if (track) {
    tape.record(out, [s, a, out]() mutable {
      auto g = out.grad();
      auto x = a.values();
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
        s.mutable_grad()[0] += acc;
      }
      if (a.requires_grad()) {
        const double c = s[0];
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
      }
    });
  }
  return out;
}

DArray add_row_vector(Tape& tape, const DArray& a, const DArray& b) {
  require_rank(a, 2, "add_row_vector");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (b.size() != n || b.rank() > 2 || (b.rank() == 2 && b.dim(0) != 1)) {
    throw DimensionError("add_row_vector: cannot add " + to_string(b.shape()) +
                         " to each row of " + to_string(a.shape()));
  }
  const bool track = tape.tracks({&a, &b});
  DArray out = tape.make_output(a.shape(), track);
  auto o = out.mutable_values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = x[r * n + j] + y[j];
  }
  if (track) {
    tape.record(out, [a, b, out, m, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
      }
    });
  }
  return out;
}

DArray scale_rows(Tape& tape, const DArray& a, const DArray& s) {
  require_rank(a, 2, "scale_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (s.size() != m || s.rank() > 2 || (s.rank() == 2 && s.dim(1) != 1)) {
    throw DimensionError("scale_rows: factors " + to_string(s.shape()) +
                         " do not match rows of " + to_string(a.shape()));
  }
  const bool track = tape.tracks({&a, &s});
  DArray out = tape.make_output(a.shape(), track);
  auto o = out.mutable_values();
  auto x = a.values();
  auto f = s.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = x[r * n + j] * f[r];
  }
  if (track) {
    tape.record(out, [a, s, out, m, n]() mutable {
      auto g = out.grad();
      auto x = a.values();
      auto f = s.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[r * n + j] * f[r];
        }
      }
      if (s.requires_grad()) {
        auto gs = s.mutable_grad();
        for (std::size_t r = 0; r < m; ++r) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[r * n + j] * x[r * n + j];
          gs[r] += acc;
        }
      }
    });
  }
  return out;
}

DArray row_mean(Tape& tape, const DArray& a) {
  require_rank(a, 2, "row_mean");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output({m, 1}, track);
  auto o = out.mutable_values();
  auto x = a.values();
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x[r * n + j];
    o[r] = acc * inv;
  }
  if (track) {
    tape.record(out, [a, out, m, n, inv]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t r = 0; r < m; ++r) {
        const double gr = g[r] * inv;
        for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += gr;
      }
    });
  }
  return out;
}

// Structure ---------------------------------------------------------------

DArray concat(Tape& tape, std::span<const DArray> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const std::size_t rank = parts[0].rank();
  if (rank != 1 && rank != 2) {
    throw DimensionError("concat: expected rank 1 or 2, got shape " +
                         to_string(parts[0].shape()));
  }
  if (axis >= rank) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  // Work in a rows×cols view; rank-1 concat along axis 0 is a column concat
  // of single-row matrices.
  const bool along_cols = (rank == 1) || axis == 1;
  std::size_t rows = 0, cols = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rank() != rank) {
      throw DimensionError("concat: rank mismatch " + to_string(parts[0].shape()) + " vs " +
                           to_string(p.shape()));
    }
    auto [r, c] = as_rows_cols(p, "concat");
    if (along_cols) {
      if (rows != 0 && r != rows) {
        throw DimensionError("concat: row mismatch " + to_string(parts[0].shape()) +
                             " vs " + to_string(p.shape()));
      }
      rows = r;
      cols += c;
    } else {
      if (cols != 0 && c != cols) {
        throw DimensionError("concat: column mismatch " + to_string(parts[0].shape()) +
                             " vs " + to_string(p.shape()));
      }
      cols = c;
      rows += r;
    }
    track = track || p.requires_grad();
  }
  track = track && tape.recording();
  Shape shape = rank == 1 ? Shape{cols} : Shape{rows, cols};
  DArray out = tape.make_output(shape, track);
  auto o = out.mutable_values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto [r, c] = as_rows_cols(p, "concat");
    auto x = p.values();
    if (along_cols) {
      for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(x.begin() + i * c, c, o.begin() + i * cols + offset);
      }
      offset += c;
    } else {
      std::copy(x.begin(), x.end(), o.begin() + offset * cols);
      offset += r;
    }
  }
  if (track) {
    std::vector<DArray> inputs(parts.begin(), parts.end());
    tape.record(out, [inputs, out, along_cols, cols]() mutable {
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t r = p.rank() == 1 ? 1 : p.dim(0);
        const std::size_t c = p.rank() == 1 ? p.dim(0) : p.dim(1);
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          if (along_cols) {
            for (std::size_t i = 0; i < r; ++i) {
              for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * cols + offset + j];
            }
          } else {
            for (std::size_t i = 0; i < r * c; ++i) gp[i] += g[offset * cols + i];
          }
        }
        offset += along_cols ? c : r;
      }
    });
  }
  return out;
}

DArray concat(Tape& tape, std::initializer_list<DArray> parts, std::size_t axis) {
  return concat(tape, std::span<const DArray>(parts.begin(), parts.size()), axis);
}

DArray slice(Tape& tape, const DArray& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  auto [rows, cols] = as_rows_cols(a, "slice");
  if (axis >= a.rank()) {
    throw DimensionError("slice: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(a.shape()));
  }
  const bool along_cols = a.rank() == 1 || axis == 1;
  const std::size_t extent = along_cols ? cols : rows;
  if (begin >= end || end > extent) {
    throw BoundsError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") out of bounds for axis of length " + std::to_string(extent) +
                      " in shape " + to_string(a.shape()));
  }
  const std::size_t len = end - begin;
  Shape shape = a.rank() == 1 ? Shape{len}
                              : (axis == 1 ? Shape{rows, len} : Shape{len, cols});
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output(shape, track);
  auto o = out.mutable_values();
  auto x = a.values();
  if (along_cols) {
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(x.begin() + i * cols + begin, len, o.begin() + i * len);
    }
  } else {
    std::copy_n(x.begin() + begin * cols, len * cols, o.begin());
  }
  if (track) {
    tape.record(out, [a, out, along_cols, rows, cols, begin, len]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      if (along_cols) {
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < len; ++j) ga[i * cols + begin + j] += g[i * len + j];
        }
      } else {
        for (std::size_t i = 0; i < len * cols; ++i) ga[begin * cols + i] += g[i];
      }
    });
  }
  return out;
}

DArray gather_rows(Tape& tape, const DArray& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty row selection");
  for (auto r : rows) {
    if (r >= m) {
      throw BoundsError("gather_rows: row " + std::to_string(r) + " out of bounds for shape " +
                        to_string(a.shape()));
    }
  }
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output({rows.size(), n}, track);
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.begin() + rows[i] * n, n, o.begin() + i * n);
  }
  if (track) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape.record(out, [a, out, idx, n]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[idx[i] * n + j] += g[i * n + j];
      }
    });
  }
  return out;
}

DArray scatter_rows(Tape& tape, const DArray& a, std::span<const std::size_t> rows,
                    std::size_t total) {
  require_rank(a, 2, "scatter_rows");
  if (a.dim(0) != rows.size()) {
    throw DimensionError("scatter_rows: " + std::to_string(rows.size()) +
                         " target rows for operand " + to_string(a.shape()));
  }
  const std::size_t n = a.dim(1);
  for (auto r : rows) {
    if (r >= total) {
      throw BoundsError("scatter_rows: row " + std::to_string(r) + " out of bounds for " +
                        std::to_string(total) + " rows");
    }
  }
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output({total, n}, track);
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) o[rows[i] * n + j] += x[i * n + j];
  }
  if (track) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape.record(out, [a, out, idx, n]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[idx[i] * n + j];
      }
    });
  }
  return out;
}

// Reductions and losses ---------------------------------------------------

DArray sum(Tape& tape, const DArray& a) {
  const bool track = tape.tracks({&a});
  DArray out = tape.make_output({}, track);
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out.mutable_values()[0] = acc;
  if (track) {
    tape.record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (auto& ga : a.mutable_grad()) ga += g;
    });
  }
  return out;
}

DArray mean(Tape& tape, const DArray& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

DArray mse(Tape& tape, const DArray& pred, const DArray& label) {
  if (pred.size() != label.size() || pred.shape() != label.shape()) {
    throw DimensionError("mse: prediction " + to_string(pred.shape()) + " vs label " +
                         to_string(label.shape()));
  }
  const bool track = tape.tracks({&pred});
  DArray out = tape.make_output({}, track);
  auto p = pred.values();
  auto y = label.values();
  const double inv = 1.0 / static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - y[i];
    acc += d * d;
  }
  out.mutable_values()[0] = acc * inv;
  if (track) {
    tape.record(out, [pred, label, out, inv]() mutable {
      const double g = out.grad()[0] * 2.0 * inv;
      auto p = pred.values();
      auto y = label.values();
      auto gp = pred.mutable_grad();
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * (p[i] - y[i]);
    });
  }
  return out;
}

}  // namespace sivcast::ad
