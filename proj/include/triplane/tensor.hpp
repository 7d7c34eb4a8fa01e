#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "triplane/error.hpp"

namespace triplane {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// ---------------------------------------------------------------------------
// Engine-wide switches and counters
// ---------------------------------------------------------------------------

/// In check mode every op scans its inputs and throws NumericError on
/// NaN/Inf instead of propagating them.
void set_check_mode(bool enabled);
bool check_mode();

/// Sets the worker count used by op kernels (OpenMP + Eigen). 0 keeps the
/// runtime default.
void set_num_threads(int threads);
int num_threads();

/// Counts floating-point operations executed by forward kernels while at
/// least one counter is alive. Counts are global across threads.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t total() const;

 private:
  std::uint64_t start_;
};

void add_flops(std::uint64_t flops);

/// Storage statistics of the pooled tensor allocator. A "fresh" allocation
/// is a request the pool could not satisfy from recycled buffers.
struct AllocationStats {
  std::uint64_t requests = 0;
  std::uint64_t fresh = 0;
};
AllocationStats allocation_stats();
/// Drops all pooled buffers (they are reallocated on demand).
void release_pooled_buffers();

namespace detail {

/// Move-only buffer backed by the shared pool.
template <typename Real>
class Storage {
 public:
  Storage() = default;
  explicit Storage(std::size_t n);
  Storage(std::size_t n, Real fill);
  ~Storage();
  Storage(Storage&& other) noexcept;
  Storage& operator=(Storage&& other) noexcept;
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  Real* data() { return v_.data(); }
  const Real* data() const { return v_.data(); }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

 private:
  void release();
  std::vector<Real> v_;
};

template <typename Real>
struct Node {
  Shape shape;
  Storage<Real> value;
  Storage<Real> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  // Propagates this node's grad into its parents. Captures parents and any
  // saved activations; reset when the tape is cleared.
  std::function<void(Node&)> backward;

  // Zero-initialised on first use.
  Real* grad_buffer();
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

/// Dense row-major tensor handle. Copies share the underlying node; values
/// are immutable once an op has produced them (only leaves may be edited in
/// place, which is what optimizers do).
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node<Real>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Real value);
  static Tensor from(const Shape& shape, std::span<const Real> values);
  static Tensor from(const Shape& shape, std::initializer_list<Real> values);
  static Tensor scalar(Real value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  /// Leaf tensors only.
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;
  std::vector<Real> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<Real> grad() const;
  std::span<const Real> grad_span() const;
  void zero_grad();

  /// New leaf holding a copy of the values.
  Tensor clone() const;
  /// Shares nothing with the tape; same as clone() with requires_grad off.
  Tensor detach() const;
  template <typename Other>
  Tensor<Other> cast() const;

  const std::shared_ptr<detail::Node<Real>>& node() const { return node_; }

 private:
  detail::Node<Real>& checked() const;
  std::shared_ptr<detail::Node<Real>> node_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

/// Ordered record of differentiable ops executed while the tape is active on
/// the current thread. Ops are recorded only if at least one input requires
/// a gradient.
template <typename Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::shared_ptr<detail::Node<Real>> node);
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Seeds d(loss)/d(loss) = 1, replays the record in reverse and consumes
  /// the tape. Throws ShapeError for non-scalar losses and Error for an
  /// empty tape.
  void backward(const Tensor<Real>& loss);
  /// Frees saved activations and forgets every record.
  void clear();

  static Tape* active();

 private:
  std::vector<std::shared_ptr<detail::Node<Real>>> nodes_;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* previous_;
};

/// Backward through the active tape of this thread.
template <typename Real>
void backward(const Tensor<Real>& loss);

}  // namespace triplane
