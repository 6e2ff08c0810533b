#include "hetsr/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "hetsr/autograd.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/random.hpp"

namespace hetsr {

namespace {

thread_local bool grad_mode_enabled = true;

Buffer make_buffer(DType dtype, std::size_t n) {
  if (dtype == DType::f32) {
    return std::vector<float>(n, 0.0f);
  }
  return std::vector<double>(n, 0.0);
}

std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dtype) {
  for (auto extent : shape) {
    if (extent < 0) {
      throw ShapeError("negative extent in shape " + shape_str(shape));
    }
  }
  auto impl = std::make_shared<TensorImpl>();
  const auto n = static_cast<std::size_t>(numel(shape));
  impl->shape = std::move(shape);
  impl->buffer = std::make_shared<Buffer>(make_buffer(dtype, n));
  return impl;
}

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32" || name == "float32") return DType::f32;
  if (name == "f64" || name == "float64") return DType::f64;
  throw DTypeError("unknown dtype '" + name + "'");
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set(bool enabled) { grad_mode_enabled = enabled; }

Tensor Tensor::empty(Shape shape, DType dtype) { return Tensor(make_impl(std::move(shape), dtype)); }

Tensor Tensor::zeros(Shape shape, DType dtype) { return empty(std::move(shape), dtype); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != hetsr::numel(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  Tensor t = empty(std::move(shape), dtype);
  t.assign(values);
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(hetsr::numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from(std::move(shape), v, dtype);
}

Tensor Tensor::normal(Shape shape, double mean, double stddev, Rng& rng, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(hetsr::numel(shape)));
  for (auto& x : v) x = mean + stddev * rng.normal();
  return from(std::move(shape), v, dtype);
}

TensorImpl& Tensor::checked() const {
  if (!impl_) {
    throw std::logic_error("operation on an undefined tensor");
  }
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return hetsr::numel(shape()); }

DType Tensor::dtype() const {
  return checked().buffer->index() == 0 ? DType::f32 : DType::f64;
}

template <class T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(checked().buffer.get());
  if (!v) {
    throw DTypeError(std::string("tensor holds ") + dtype_name(dtype()) + " data");
  }
  return {v->data(), v->size()};
}

template <class T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(checked().buffer.get());
  if (!v) {
    throw DTypeError(std::string("tensor holds ") + dtype_name(dtype()) + " data");
  }
  return {v->data(), v->size()};
}

template std::span<float> Tensor::data<float>();
template std::span<double> Tensor::data<double>();
template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
  }
  return at(0);
}

double Tensor::at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= numel()) {
    throw std::out_of_range("flat index out of range");
  }
  return std::visit([&](const auto& v) { return static_cast<double>(v[flat_index]); },
                    *checked().buffer);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, *checked().buffer);
}

void Tensor::assign(std::span<const double> values) {
  if (static_cast<std::int64_t>(values.size()) != numel()) {
    throw ShapeError("assign: value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape()));
  }
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::transform(values.begin(), values.end(), v.begin(),
                       [](double x) { return static_cast<T>(x); });
      },
      *checked().buffer);
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape()) {
    throw ShapeError("assign: shape " + shape_str(other.shape()) + " does not match " +
                     shape_str(shape()));
  }
  if (other.dtype() == dtype()) {
    *checked().buffer = *other.checked().buffer;
  } else {
    assign(other.to_vector());
  }
}

void Tensor::fill(double value) {
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::fill(v.begin(), v.end(), static_cast<T>(value));
      },
      *checked().buffer);
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& impl = checked();
  if (impl.grad_fn) {
    throw AutogradError("requires_grad can only be set on leaf tensors");
  }
  impl.requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return checked().grad_fn == nullptr; }

const std::shared_ptr<Node>& Tensor::grad_fn() const { return checked().grad_fn; }

Tensor Tensor::grad() const { return Tensor(checked().grad); }

void Tensor::set_grad(const Tensor& grad) {
  if (grad.defined() && grad.shape() != shape()) {
    throw ShapeError("gradient shape " + shape_str(grad.shape()) + " does not match " +
                     shape_str(shape()));
  }
  checked().grad = grad.impl_;
}

void Tensor::zero_grad() { checked().grad.reset(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = checked().shape;
  impl->buffer = impl_->buffer;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = checked().shape;
  impl->buffer = std::make_shared<Buffer>(*impl_->buffer);
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) {
    return detach();
  }
  Tensor out = empty(shape(), target);
  out.assign(to_vector());
  return out;
}

void Tensor::backward(bool retain_graph) const { hetsr::backward(*this, retain_graph); }

}  // namespace hetsr
