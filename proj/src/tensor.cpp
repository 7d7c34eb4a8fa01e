#include "triplane/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <Eigen/Core>

namespace triplane {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::atomic<bool> g_check_mode{false};
std::atomic<int> g_threads{0};
std::atomic<std::uint64_t> g_flops{0};
std::atomic<int> g_flop_counters{0};
std::atomic<std::uint64_t> g_alloc_requests{0};
std::atomic<std::uint64_t> g_alloc_fresh{0};

constexpr std::size_t kPoolCapBytes = std::size_t(1) << 30;
constexpr std::size_t kPoolMaxPerSize = 64;

template <typename Real>
class BufferPool {
 public:
  std::vector<Real> acquire(std::size_t n) {
    g_alloc_requests.fetch_add(1, std::memory_order_relaxed);
    {
      std::lock_guard lock(mutex_);
      auto it = free_.find(n);
      if (it != free_.end() && !it->second.empty()) {
        std::vector<Real> v = std::move(it->second.back());
        it->second.pop_back();
        pooled_bytes_ -= n * sizeof(Real);
        return v;
      }
    }
    g_alloc_fresh.fetch_add(1, std::memory_order_relaxed);
    return std::vector<Real>(n);
  }

  void release(std::vector<Real>&& v) {
    const std::size_t n = v.size();
    if (n == 0) return;
    std::lock_guard lock(mutex_);
    if (pooled_bytes_ + n * sizeof(Real) > kPoolCapBytes) return;
    auto& list = free_[n];
    if (list.size() >= kPoolMaxPerSize) return;
    pooled_bytes_ += n * sizeof(Real);
    list.push_back(std::move(v));
  }

  void clear() {
    std::lock_guard lock(mutex_);
    free_.clear();
    pooled_bytes_ = 0;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::size_t, std::vector<std::vector<Real>>> free_;
  std::size_t pooled_bytes_ = 0;
};

// Leaked so that buffers released during static destruction stay valid.
template <typename Real>
BufferPool<Real>& pool() {
  static auto* p = new BufferPool<Real>();
  return *p;
}

}  // namespace

void set_check_mode(bool enabled) { g_check_mode.store(enabled); }
bool check_mode() { return g_check_mode.load(std::memory_order_relaxed); }

void set_num_threads(int threads) {
  g_threads.store(threads);
  if (threads <= 0) return;
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  Eigen::setNbThreads(threads);
}

int num_threads() {
  const int t = g_threads.load();
  if (t > 0) return t;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

FlopCounter::FlopCounter() : start_(g_flops.load()) { g_flop_counters.fetch_add(1); }
FlopCounter::~FlopCounter() { g_flop_counters.fetch_sub(1); }
std::uint64_t FlopCounter::total() const { return g_flops.load() - start_; }

void add_flops(std::uint64_t flops) {
  if (g_flop_counters.load(std::memory_order_relaxed) > 0) {
    g_flops.fetch_add(flops, std::memory_order_relaxed);
  }
}

AllocationStats allocation_stats() {
  return AllocationStats{g_alloc_requests.load(), g_alloc_fresh.load()};
}

void release_pooled_buffers() {
  pool<float>().clear();
  pool<double>().clear();
}

namespace detail {

template <typename Real>
Storage<Real>::Storage(std::size_t n) {
  if (n) v_ = pool<Real>().acquire(n);
}

template <typename Real>
Storage<Real>::Storage(std::size_t n, Real fill) : Storage(n) {
  std::fill(v_.begin(), v_.end(), fill);
}

template <typename Real>
Storage<Real>::~Storage() {
  release();
}

template <typename Real>
Storage<Real>::Storage(Storage&& other) noexcept : v_(std::move(other.v_)) {
  other.v_.clear();
}

template <typename Real>
Storage<Real>& Storage<Real>::operator=(Storage&& other) noexcept {
  if (this != &other) {
    release();
    v_ = std::move(other.v_);
    other.v_ = {};
  }
  return *this;
}

template <typename Real>
void Storage<Real>::release() {
  if (!v_.empty()) pool<Real>().release(std::move(v_));
  v_ = {};
}

template <typename Real>
Real* Node<Real>::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Storage<Real>(value.size(), Real(0));
  return grad.data();
}

template class Storage<float>;
template class Storage<double>;
template struct Node<float>;
template struct Node<double>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <typename Real>
detail::Node<Real>& Tensor<Real>::checked() const {
  if (!node_) throw ShapeError("use of an undefined tensor");
  return *node_;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(const Shape& shape) {
  return full(shape, Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(const Shape& shape, Real value) {
  auto node = std::make_shared<detail::Node<Real>>();
  node->shape = shape;
  node->value = detail::Storage<Real>(shape_numel(shape), value);
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(const Shape& shape, std::span<const Real> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node<Real>>();
  node->shape = shape;
  node->value = detail::Storage<Real>(values.size());
  std::copy(values.begin(), values.end(), node->value.data());
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(const Shape& shape, std::initializer_list<Real> values) {
  return from(shape, std::span<const Real>(values.begin(), values.size()));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return full(Shape{}, value);
}

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  return checked().shape;
}

template <typename Real>
std::size_t Tensor<Real>::size(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

template <typename Real>
std::size_t Tensor<Real>::numel() const {
  return checked().value.size();
}

template <typename Real>
std::span<const Real> Tensor<Real>::data() const {
  const auto& n = checked();
  return {n.value.data(), n.value.size()};
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_data() {
  auto& n = checked();
  if (n.backward) throw Error("mutable_data: tensor is a recorded op result");
  return {n.value.data(), n.value.size()};
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return data()[0];
}

template <typename Real>
Real Tensor<Real>::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw ShapeError("at: index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw ShapeError("at: index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return data()[flat];
}

template <typename Real>
std::vector<Real> Tensor<Real>::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

template <typename Real>
bool Tensor<Real>::requires_grad() const {
  return checked().requires_grad;
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool value) {
  checked().requires_grad = value;
  return *this;
}

template <typename Real>
bool Tensor<Real>::has_grad() const {
  return !checked().grad.empty();
}

template <typename Real>
std::vector<Real> Tensor<Real>::grad() const {
  const auto& n = checked();
  if (n.grad.empty()) return std::vector<Real>(n.value.size(), Real(0));
  return {n.grad.data(), n.grad.data() + n.grad.size()};
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad_span() const {
  const auto& n = checked();
  return {n.grad.data(), n.grad.size()};
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  auto& n = checked();
  n.grad = detail::Storage<Real>();
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  Tensor out = from(shape(), data());
  out.set_requires_grad(requires_grad());
  return out;
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(shape(), data());
}

template <typename Real>
template <typename Other>
Tensor<Other> Tensor<Real>::cast() const {
  auto src = data();
  std::vector<Other> converted(src.begin(), src.end());
  Tensor<Other> out = Tensor<Other>::from(shape(), std::span<const Other>(converted));
  out.set_requires_grad(requires_grad());
  return out;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
template <typename Real>
Tape<Real>*& active_tape() {
  thread_local Tape<Real>* tape = nullptr;
  return tape;
}
}  // namespace

template <typename Real>
Tape<Real>::~Tape() {
  clear();
  if (active_tape<Real>() == this) active_tape<Real>() = nullptr;
}

template <typename Real>
void Tape<Real>::record(std::shared_ptr<detail::Node<Real>> node) {
  nodes_.push_back(std::move(node));
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  if (nodes_.empty()) throw Error("backward: the tape is empty");
  if (!loss.requires_grad()) throw Error("backward: loss does not depend on any parameter");
  detail::Node<Real>& root = *loss.node();
  root.grad_buffer()[0] += Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<Real>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
  clear();
}

template <typename Real>
void Tape<Real>::clear() {
  for (auto& node : nodes_) node->backward = nullptr;
  nodes_.clear();
}

template <typename Real>
Tape<Real>* Tape<Real>::active() {
  return active_tape<Real>();
}

template <typename Real>
TapeScope<Real>::TapeScope(Tape<Real>& tape) : previous_(active_tape<Real>()) {
  active_tape<Real>() = &tape;
}

template <typename Real>
TapeScope<Real>::~TapeScope() {
  active_tape<Real>() = previous_;
}

template <typename Real>
void backward(const Tensor<Real>& loss) {
  Tape<Real>* tape = Tape<Real>::active();
  if (tape == nullptr) throw Error("backward: no active tape on this thread");
  tape->backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace triplane
