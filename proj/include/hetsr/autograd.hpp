#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hetsr/tensor.hpp"

namespace hetsr {

// One recorded op. The backward function maps the gradient of the op's output
// to one gradient per input (undefined where no gradient flows). Backward
// functions are written with differentiable ops so that running them with
// graph recording enabled yields higher-order derivatives.
struct BackwardArgs {
  const Tensor& grad;
  const std::vector<Tensor>& inputs;
  // Whether the engine wants a gradient for input i.
  std::vector<bool> needs;

  const Tensor& in(std::size_t i) const { return inputs[i]; }
  bool need(std::size_t i) const { return needs[i]; }
};

class Node {
 public:
  using Backward = std::function<std::vector<Tensor>(const BackwardArgs& args)>;

  Node(std::string name, std::vector<Tensor> inputs, Backward fn)
      : name_(std::move(name)), inputs_(std::move(inputs)), fn_(std::move(fn)) {}

  const std::string& name() const { return name_; }
  const std::vector<Tensor>& inputs() const { return inputs_; }
  bool released() const { return released_; }

  std::vector<Tensor> apply(const Tensor& grad, std::vector<bool> needs) const;
  void release();

 private:
  std::string name_;
  std::vector<Tensor> inputs_;
  Backward fn_;
  bool released_ = false;
};

// Attaches a node to `out` when recording is on and any input requires grad.
Tensor record(Tensor out, const char* name, std::vector<Tensor> inputs, Node::Backward fn);

bool any_requires_grad(const std::vector<Tensor>& tensors);

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// Without retain_graph the graph is consumed; a second call throws.
void backward(const Tensor& loss, bool retain_graph = false);

// Returns d(output)/d(inputs) without touching any .grad field. With
// create_graph the results are themselves differentiable.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph = false);
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph, bool retain_graph);

// Largest relative discrepancy between the analytic gradient of a scalar
// function and its central finite difference, taken over every coordinate:
// |a - d| / max(|a|, |d|, 1e-12).
double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                       double eps = 1e-5);

// Same check against the gradient of an existing parameter tensor; `f` must
// read the parameter's current storage (it is perturbed in place and restored).
double check_parameter_gradients(const std::function<Tensor()>& f, Tensor& parameter,
                                 double eps = 1e-5);

}  // namespace hetsr
