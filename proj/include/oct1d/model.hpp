#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oct1d/octconv.hpp"
#include "oct1d/ops.hpp"

namespace oct1d {

enum class Architecture {
  Fcn,
  OctFcn,
  ResNet,
  OctResNet,
  LstmFcn,
  LstmOctFcn,
  AlstmFcn,
  AlstmOctFcn,
};

inline constexpr Architecture kAllArchitectures[] = {
    Architecture::Fcn,     Architecture::OctFcn,     Architecture::ResNet,
    Architecture::OctResNet, Architecture::LstmFcn,  Architecture::LstmOctFcn,
    Architecture::AlstmFcn, Architecture::AlstmOctFcn,
};

std::string_view architecture_name(Architecture a) noexcept;
std::optional<Architecture> parse_architecture(std::string_view name) noexcept;
bool uses_octave(Architecture a) noexcept;
bool uses_lstm(Architecture a) noexcept;
bool uses_attention(Architecture a) noexcept;
bool uses_residual(Architecture a) noexcept;
/// The convolution-only counterpart (OctFcn for LstmOctFcn, ...).
Architecture base_architecture(Architecture a) noexcept;

struct ModelConfig {
  Architecture architecture = Architecture::Fcn;
  std::size_t num_classes = 2;
  std::size_t input_length = 0;  // Q; fixes the LSTM input width
  double alpha = 0.5;
  std::size_t lstm_units = 8;
  double dropout = 0.8;
  std::uint64_t seed = 0;
};

/// Named intermediate activations in forward order.
struct ForwardTrace {
  std::vector<std::pair<std::string, Var>> taps;
};

/// A built network with its parameter registry. Layer hyperparameters:
/// FCN stacks use filters {128, 256, 128} with kernels {8, 5, 3}; residual
/// stacks use three blocks of widths {64, 128, 128}, each block three stages
/// with kernels {8, 5, 3}.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  std::size_t param_count() const { return store_.trainable_count(); }

  /// Class logits (B, num_classes) for input (B, Q, 1).
  Var forward(Tape& tape, Var input, ForwardTrace* trace = nullptr) const;

  /// Output of the convolutional branch after global average pooling.
  Var features(Tape& tape, Var input, ForwardTrace* trace = nullptr) const;
  std::size_t feature_width() const noexcept;

 private:
  struct Impl;
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<Impl> impl_;
};

/// Softmax probabilities in inference mode, evaluated in chunks of `batch`.
Tensor predict_proba(const Model& model, const Tensor& x, std::size_t batch = 64);

/// Plain-conv block parameter counts for the FCN stack: k*Cin*Cout + Cout.
std::vector<std::size_t> fcn_block_param_counts(std::size_t in_channels = 1);

}  // namespace oct1d
