#include "oct1d/tape.hpp"

#include <mutex>

namespace oct1d {

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) fail(ErrorKind::Contract, "duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->grad = Tensor::zeros(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  p->name = name;
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::get(std::string_view name) {
  auto* p = find(name);
  if (!p) fail(ErrorKind::Contract, "unknown parameter '" + std::string(name) + "'");
  return *p;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size())
    fail(ErrorKind::Contract, "snapshot size does not match parameter store");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require_same_shape(params_[i]->value, values[i], "restore");
    params_[i]->value = values[i];
  }
}

Tape::Tape(Mode mode, Precision precision, std::uint64_t seed)
    : mode_(mode), precision_(precision), rng_(seed) {
  nodes_.reserve(256);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> parents,
                 BackwardFn backward) {
  if (!value.all_finite())
    fail(ErrorKind::NonFinite, std::string(op) + " produced a non-finite value");
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (auto p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) fail(ErrorKind::Contract, "variable does not belong to this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
bool Tape::has_grad(Var v) const { return node(v).has_grad; }

const Tensor& Tape::grad(Var v) const {
  const auto& n = node(v);
  if (!n.has_grad) fail(ErrorKind::Contract, "no gradient recorded for this variable");
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  node(v);
  auto& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  const auto& l = node(loss);
  if (l.value.size() != 1)
    fail(ErrorKind::Contract, "backward requires a scalar loss, got shape " +
                                  shape_str(l.value.shape()));
  if (backward_done_) fail(ErrorKind::Contract, "backward already ran on this tape");
  backward_done_ = true;
  grad_buffer(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& g = n.param->grad;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

namespace debug {
namespace {
std::mutex fault_mutex;
std::string fault_family;
}  // namespace

void set_backward_fault(std::string family) {
  std::lock_guard lock(fault_mutex);
  fault_family = std::move(family);
}

bool backward_fault(std::string_view family) {
  std::lock_guard lock(fault_mutex);
  return !fault_family.empty() && fault_family == family;
}
}  // namespace debug

}  // namespace oct1d
