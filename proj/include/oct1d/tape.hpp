#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "oct1d/tensor.hpp"

namespace oct1d {

/// A named tensor owned by a ParameterStore. Non-trainable entries hold
/// state such as batch-norm running statistics; they are serialized with the
/// model but never receive gradients.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& get(std::string_view name);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  /// Number of trainable scalars.
  std::size_t trainable_count() const;
  void zero_grad();

  /// Copies of every value, in registration order.
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Mode { Train, Infer };

/// Arithmetic used inside the matrix-multiply kernels. Tensors always store
/// doubles; Single rounds GEMM operands to float for speed.
enum class Precision { Double, Single };

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

/// Reverse-mode autodiff tape. Nodes are appended in execution order, so the
/// recorded order is already topological; backward() sweeps it in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(Mode mode = Mode::Train, Precision precision = Precision::Double,
                std::uint64_t seed = 0);

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::Train; }
  Precision precision() const noexcept { return precision_; }
  std::mt19937_64& rng() noexcept { return rng_; }

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is kept (used for input-gradient checks).
  Var input(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into Parameter::grad.
  Var param(Parameter& p);

  /// Appends an op result. Throws ErrorKind::NonFinite if `value` has NaN/Inf.
  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;
  const Tensor& grad(Var v) const;
  /// Gradient buffer of `v`, allocated as zeros on first access.
  Tensor& grad_buffer(Var v);
  /// Gradient of the node currently running its backward rule.
  const Tensor& upstream(std::size_t self) const { return nodes_[self].grad; }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(Var v) const { return nodes_.at(v.id).op; }

  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse order.
  /// Parameter leaves then add their gradient into Parameter::grad.
  void backward(Var loss);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<Var> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  const Node& node(Var v) const;

  Mode mode_;
  Precision precision_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

namespace debug {
/// Fault injection for gradient-check self tests: when set to an op family
/// name ("conv1d", "dense", ...) that family's backward rule is perturbed.
void set_backward_fault(std::string family);
bool backward_fault(std::string_view family);
}  // namespace debug

}  // namespace oct1d
