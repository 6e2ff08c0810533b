#include "hetsr/autograd.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "hetsr/ops.hpp"

namespace hetsr {

std::vector<Tensor> Node::apply(const Tensor& grad, std::vector<bool> needs) const {
  if (released_) {
    throw AutogradError("backward through a graph that was already consumed (node '" + name_ +
                        "'); run a new forward pass or pass retain_graph");
  }
  BackwardArgs args{grad, inputs_, std::move(needs)};
  auto grads = fn_(args);
  grads.resize(inputs_.size());
  return grads;
}

void Node::release() {
  inputs_.clear();
  fn_ = nullptr;
  released_ = true;
}

bool any_requires_grad(const std::vector<Tensor>& tensors) {
  for (const auto& t : tensors) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

Tensor record(Tensor out, const char* name, std::vector<Tensor> inputs, Node::Backward fn) {
  if (!GradMode::enabled() || !any_requires_grad(inputs)) {
    return out;
  }
  out.impl()->grad_fn = std::make_shared<Node>(name, std::move(inputs), std::move(fn));
  out.impl()->requires_grad = true;
  return out;
}

namespace {

// Nodes reachable from `root`, ordered so every node precedes its inputs.
// The list owns the nodes: releasing one drops its inputs, which may hold the
// last reference to nodes further down.
std::vector<std::shared_ptr<Node>> topological_order(const std::shared_ptr<Node>& root) {
  std::vector<std::shared_ptr<Node>> post;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    Node* node = stack.back().first.get();
    if (node->released()) {
      throw AutogradError("backward through a graph that was already consumed (node '" +
                          node->name() + "'); run a new forward pass or pass retain_graph");
    }
    const auto& inputs = node->inputs();
    std::shared_ptr<Node> child;
    while (!child && stack.back().second < inputs.size()) {
      const auto& fn = inputs[stack.back().second++].grad_fn();
      if (fn && visited.insert(fn.get()).second) child = fn;
    }
    if (child) {
      stack.emplace_back(std::move(child), 0);
    } else {
      post.push_back(std::move(stack.back().first));
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

Tensor accumulate(const Tensor& acc, const Tensor& g) { return acc.defined() ? add(acc, g) : g; }

struct EngineRequest {
  const Tensor& root;
  bool create_graph = false;
  bool retain_graph = false;
  // Empty: accumulate into every leaf's .grad.
  const std::vector<Tensor>* targets = nullptr;
};

std::vector<Tensor> run_engine(const EngineRequest& req) {
  const Tensor& root = req.root;
  if (!root.requires_grad()) {
    throw AutogradError("backward: tensor does not require grad");
  }
  if (root.numel() != 1) {
    throw AutogradError("backward: expected a scalar, got shape " + shape_str(root.shape()));
  }
  const bool to_targets = req.targets != nullptr;
  std::unordered_map<const TensorImpl*, std::size_t> target_leaf;
  std::unordered_map<const Node*, std::size_t> target_node;
  std::vector<Tensor> results;
  if (to_targets) {
    results.resize(req.targets->size());
    for (std::size_t i = 0; i < req.targets->size(); ++i) {
      const Tensor& t = (*req.targets)[i];
      if (t.grad_fn()) {
        target_node[t.grad_fn().get()] = i;
      } else {
        target_leaf[t.id()] = i;
      }
    }
  }

  const Tensor seed = Tensor::ones(root.shape(), root.dtype());
  if (!root.grad_fn()) {
    // The root is itself a leaf.
    if (to_targets) {
      auto it = target_leaf.find(root.id());
      if (it != target_leaf.end()) results[it->second] = seed;
    } else {
      Tensor r = root;
      r.set_grad(accumulate(root.grad(), seed));
    }
    return results;
  }

  const auto order = topological_order(root.grad_fn());

  // In target mode only nodes on a path to a target do any work.
  std::unordered_set<const Node*> useful;
  if (to_targets) {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Node* node = it->get();
      bool u = target_node.count(node) > 0;
      for (const auto& in : node->inputs()) {
        if (!in.requires_grad()) continue;
        if (in.grad_fn() ? useful.count(in.grad_fn().get()) > 0 : target_leaf.count(in.id()) > 0) {
          u = true;
        }
      }
      if (u) useful.insert(node);
    }
  }

  GradModeGuard mode(req.create_graph);
  std::unordered_map<const Node*, Tensor> node_grads;
  std::unordered_map<const TensorImpl*, std::pair<Tensor, Tensor>> leaf_grads;
  node_grads[order.front().get()] = seed;

  for (const auto& owned : order) {
    Node* node = owned.get();
    auto it = node_grads.find(node);
    if (it == node_grads.end() || (to_targets && !useful.count(node))) {
      if (!req.retain_graph) node->release();
      continue;
    }
    Tensor g = std::move(it->second);
    node_grads.erase(it);
    if (to_targets) {
      auto tn = target_node.find(node);
      if (tn != target_node.end()) results[tn->second] = g;
    }

    const auto& inputs = node->inputs();
    std::vector<bool> needs(inputs.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto& in = inputs[i];
      if (!in.defined() || !in.requires_grad()) continue;
      if (to_targets) {
        needs[i] = in.grad_fn() ? useful.count(in.grad_fn().get()) > 0
                                : target_leaf.count(in.id()) > 0;
      } else {
        needs[i] = true;
      }
      any = any || needs[i];
    }
    if (any) {
      auto grads = node->apply(g, needs);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!needs[i] || !grads[i].defined()) continue;
        const auto& in = inputs[i];
        if (grads[i].shape() != in.shape()) {
          throw AutogradError("node '" + node->name() + "' produced gradient of shape " +
                              shape_str(grads[i].shape()) + " for input of shape " +
                              shape_str(in.shape()));
        }
        if (in.grad_fn()) {
          auto& slot = node_grads[in.grad_fn().get()];
          slot = accumulate(slot, grads[i]);
        } else {
          auto& slot = leaf_grads[in.id()];
          slot.first = in;
          slot.second = accumulate(slot.second, grads[i]);
        }
      }
    }
    if (!req.retain_graph) node->release();
  }

  for (auto& [impl, entry] : leaf_grads) {
    auto& [leaf, g] = entry;
    if (to_targets) {
      auto tl = target_leaf.find(impl);
      if (tl != target_leaf.end()) results[tl->second] = g;
    } else {
      leaf.set_grad(accumulate(leaf.grad(), g));
    }
  }
  if (to_targets) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i].defined()) {
        const Tensor& t = (*req.targets)[i];
        results[i] = Tensor::zeros(t.shape(), t.dtype());
      }
    }
  }
  return results;
}

}  // namespace

void backward(const Tensor& loss, bool retain_graph) {
  run_engine({loss, false, retain_graph, nullptr});
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph) {
  return grad(output, inputs, create_graph, create_graph);
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph, bool retain_graph) {
  return run_engine({output, create_graph, retain_graph, &inputs});
}

namespace {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / scale;
}

double evaluate(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v)) {
    throw std::domain_error("check_gradients: function value is not finite");
  }
  return v;
}

double compare_with_differences(const std::function<Tensor()>& f, Tensor& x,
                                const std::vector<double>& analytic, double eps) {
  auto values = x.data<double>();
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = evaluate(f);
    values[i] = saved - eps;
    const double down = evaluate(f);
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

}  // namespace

double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                       double eps) {
  Tensor probe = x.to(DType::f64).clone();
  probe.set_requires_grad(true);
  auto call = [&] { return f(probe); };
  Tensor y = call();
  if (!std::isfinite(y.item())) {
    throw std::domain_error("check_gradients: function value is not finite");
  }
  std::vector<double> analytic(static_cast<std::size_t>(probe.numel()), 0.0);
  if (y.requires_grad()) {
    backward(y);
    if (probe.grad().defined()) analytic = probe.grad().to_vector();
  }
  return compare_with_differences(call, probe, analytic, eps);
}

double check_parameter_gradients(const std::function<Tensor()>& f, Tensor& parameter,
                                 double eps) {
  if (parameter.dtype() != DType::f64) {
    throw DTypeError("check_parameter_gradients needs an f64 parameter");
  }
  parameter.zero_grad();
  Tensor y = f();
  if (!std::isfinite(y.item())) {
    throw std::domain_error("check_gradients: function value is not finite");
  }
  std::vector<double> analytic(static_cast<std::size_t>(parameter.numel()), 0.0);
  if (y.requires_grad()) {
    backward(y);
    if (parameter.grad().defined()) analytic = parameter.grad().to_vector();
  }
  parameter.zero_grad();
  return compare_with_differences(f, parameter, analytic, eps);
}

}  // namespace hetsr
