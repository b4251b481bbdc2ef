#pragma once

// Reverse-mode differentiation over dense row-major double arrays.
//
// Every operation takes the Tape it records onto. Arrays created with
// requires_grad=true are leaves (parameters); their gradients accumulate
// across backward passes until zero_grad() is called. Intermediate arrays
// live on the tape and are re-zeroed at the start of each backward pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sivcast::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

namespace detail {

// Fixed 64-byte alignment keeps vectorized kernels on the same code path
// regardless of where the allocator places a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Storage {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
};
}  // namespace detail

/// Handle to a dense array. Copies share storage; use clone() for a deep copy.
class DArray {
 public:
  DArray() = default;

  static DArray zeros(Shape shape, bool requires_grad = false);
  static DArray filled(Shape shape, double value, bool requires_grad = false);
  static DArray from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static DArray scalar(double value, bool requires_grad = false);

  bool valid() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t size() const { return s_->value.size(); }

  std::span<const double> values() const { return s_->value; }
  std::span<double> mutable_values() const { return s_->value; }
  double operator[](std::size_t i) const { return s_->value[i]; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  /// Empty until a gradient has been written (leaves: from creation).
  std::span<const double> grad() const { return s_->grad; }
  /// Allocates a zeroed buffer on first use.
  std::span<double> mutable_grad() const {
    if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), 0.0);
    return s_->grad;
  }
  void zero_grad() const;

  /// Deep copy of values; gradient buffer (if any) starts at zero.
  DArray clone() const;
  bool same_storage(const DArray& other) const { return s_ == other.s_; }

 private:
  explicit DArray(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}
  std::shared_ptr<detail::Storage> s_;

  friend class Tape;
};

/// Ordered record of executed operations.
class Tape {
 public:
  /// With record=false operations still compute values but nothing is
  /// stored, so the tape cannot be differentiated (inference mode).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return entries_.size(); }

  /// Allocates an operation output. When `differentiable` the output gets a
  /// gradient buffer and is expected to be passed to record().
  DArray make_output(Shape shape, bool differentiable) const;
  bool tracks(std::initializer_list<const DArray*> inputs) const;
  void record(DArray output, std::function<void()> backward);

  /// Populates dLoss/dLeaf for every requires_grad leaf reachable from loss.
  void backward(const DArray& loss);

 private:
  struct Entry {
    DArray output;
    std::function<void()> backward;
  };
  bool record_;
  std::vector<Entry> entries_;
};

// Linear algebra ----------------------------------------------------------

/// a[m×k] · b[k×n]
DArray matmul(Tape& tape, const DArray& a, const DArray& b);
/// a[m×k] · b[n×k]ᵀ
DArray matmul_transposed(Tape& tape, const DArray& a, const DArray& b);

// Elementwise -------------------------------------------------------------

DArray add(Tape& tape, const DArray& a, const DArray& b);
DArray sub(Tape& tape, const DArray& a, const DArray& b);
DArray mul(Tape& tape, const DArray& a, const DArray& b);
DArray sigmoid(Tape& tape, const DArray& a);
DArray tanh(Tape& tape, const DArray& a);
DArray relu(Tape& tape, const DArray& a);

/// a · c for a compile-time-known constant c (no gradient to c).
DArray scale(Tape& tape, const DArray& a, double c);
/// s · a where s is a rank-0 (or single element) array.
DArray mul_scalar(Tape& tape, const DArray& s, const DArray& a);
/// Row broadcast: out[r, j] = a[r, j] + b[j] for a[m×n], b[n].
DArray add_row_vector(Tape& tape, const DArray& a, const DArray& b);
/// Per-row scaling: out[r, j] = a[r, j] · s[r] for a[m×n], s[m] or s[m×1].
DArray scale_rows(Tape& tape, const DArray& a, const DArray& s);
/// Row means of a[m×n] as an [m×1] array.
DArray row_mean(Tape& tape, const DArray& a);

// Structure ---------------------------------------------------------------

/// Concatenate along axis 0 or 1 (rank 1 or 2 inputs).
DArray concat(Tape& tape, std::span<const DArray> parts, std::size_t axis);
DArray concat(Tape& tape, std::initializer_list<DArray> parts, std::size_t axis);
/// Half-open range [begin, end) along axis.
DArray slice(Tape& tape, const DArray& a, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Selects rows of a[m×n].
DArray gather_rows(Tape& tape, const DArray& a, std::span<const std::size_t> rows);
/// Inverse of gather_rows: a[k×n] written into rows of a zero [total×n] array.
DArray scatter_rows(Tape& tape, const DArray& a, std::span<const std::size_t> rows,
                    std::size_t total);

// Reductions and losses ---------------------------------------------------

DArray sum(Tape& tape, const DArray& a);
DArray mean(Tape& tape, const DArray& a);
/// Mean squared error over all elements. `label` is treated as a constant.
DArray mse(Tape& tape, const DArray& pred, const DArray& label);

}  // namespace sivcast::ad
