#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hetsr {

enum class DType : std::uint8_t { f32, f64 };

const char* dtype_name(DType dtype);
DType parse_dtype(const std::string& name);

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DTypeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Node;
class Rng;

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl {
  Shape shape;
  std::shared_ptr<Buffer> buffer;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;
  std::shared_ptr<Node> grad_fn;
};

// Handle to a dense row-major array. Copies share storage and graph identity;
// use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor empty(Shape shape, DType dtype = DType::f64);
  static Tensor zeros(Shape shape, DType dtype = DType::f64);
  static Tensor ones(Shape shape, DType dtype = DType::f64);
  static Tensor full(Shape shape, double value, DType dtype = DType::f64);
  static Tensor scalar(double value, DType dtype = DType::f64);
  static Tensor from(Shape shape, std::span<const double> values, DType dtype = DType::f64);
  static Tensor from(Shape shape, std::initializer_list<double> values, DType dtype = DType::f64);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, DType dtype = DType::f64);
  static Tensor normal(Shape shape, double mean, double stddev, Rng& rng, DType dtype = DType::f64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;
  // Overwrites values in place; no graph is recorded.
  void assign(std::span<const double> values);
  void assign(const Tensor& other);
  void fill(double value);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag = true);
  bool is_leaf() const;
  const std::shared_ptr<Node>& grad_fn() const;
  Tensor grad() const;
  void set_grad(const Tensor& grad);
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  void backward(bool retain_graph = false) const;

  const TensorImpl* id() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  TensorImpl& checked() const;
  std::shared_ptr<TensorImpl> impl_;
};

extern template std::span<float> Tensor::data<float>();
extern template std::span<double> Tensor::data<double>();
extern template std::span<const float> Tensor::data<float>() const;
extern template std::span<const double> Tensor::data<double>() const;

// Calls f.template operator()<T>() with T matching the dtype.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) {
    return f.template operator()<float>();
  }
  return f.template operator()<double>();
}

// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set(bool enabled);
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(GradMode::enabled()) { GradMode::set(enabled); }
  ~GradModeGuard() { GradMode::set(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

}  // namespace hetsr
