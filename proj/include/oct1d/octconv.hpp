#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "oct1d/tape.hpp"

namespace oct1d {

/// High/low frequency feature maps. `low` is absent for a plain (collapsed)
/// pair; otherwise its length is floor(T / 2) of the high branch.
struct OctPair {
  Tensor high;  // (B, T, C_h)
  Tensor low;   // (B, floor(T/2), C_l), empty when plain

  bool plain() const noexcept { return low.empty(); }
};

/// Tape-level counterpart of OctPair.
struct OctVar {
  Var high;
  Var low;  // invalid when plain

  bool plain() const noexcept { return !low.valid(); }
};

struct OctLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 1;
  double alpha = 0.5;
};

/// Channel layout of an OctPair: high and low widths (low == 0 means plain).
struct OctLayout {
  std::size_t high = 0;
  std::size_t low = 0;

  std::size_t total() const noexcept { return high + low; }
  bool operator==(const OctLayout&) const = default;
};

enum class OctBlock { Initial, Intermediate, Final };

/// round(x) with halves rounded up.
std::size_t round_half_up(double x);
bool degenerate_alpha(double alpha) noexcept;

/// Output layout of a block. Initial gives round(alpha*f) to the high branch,
/// intermediate gives round((1-alpha)*f) to the high branch, final is plain.
/// alpha in {0, 1} collapses every block to a plain f-channel output.
/// Throws ErrorKind::Config when 0 < alpha < 1 yields an empty branch.
OctLayout oct_output_layout(OctBlock kind, const OctLayerSpec& spec);

/// One octave convolution over up to four frequency paths:
///   H->H  conv(high)                 H->L  conv(avg_pool(high))
///   L->H  upsample(conv(low))        L->L  conv(low)
/// A path exists when its source and target branches are non-empty. With
/// `cross_paths` false, H->L and L->H are only kept when they are the sole
/// route out of (or into) a branch; residual projections use that mode.
class OctConv1d {
 public:
  OctConv1d() = default;
  OctConv1d(ParameterStore& store, const std::string& name, OctLayout in, OctLayout out,
            std::size_t kernel, std::mt19937_64& rng, bool cross_paths = true);

  OctVar forward(Tape& tape, const OctVar& x) const;

  OctLayout in_layout() const noexcept { return in_; }
  OctLayout out_layout() const noexcept { return out_; }
  std::size_t kernel() const noexcept { return kernel_; }

  struct Path {
    Parameter* weight = nullptr;  // (K, C_src, C_dst)
    Parameter* bias = nullptr;    // (C_dst)
    bool present() const noexcept { return weight != nullptr; }
  };
  const Path& hh() const noexcept { return hh_; }
  const Path& hl() const noexcept { return hl_; }
  const Path& lh() const noexcept { return lh_; }
  const Path& ll() const noexcept { return ll_; }

  std::size_t param_count() const;

 private:
  OctLayout in_;
  OctLayout out_;
  std::size_t kernel_ = 1;
  Path hh_, hl_, lh_, ll_;
};

/// Builds the block kinds directly from a spec.
OctConv1d make_oct_initial(ParameterStore& store, const std::string& name, std::size_t in_channels,
                           const OctLayerSpec& spec, std::mt19937_64& rng);
OctConv1d make_oct_intermediate(ParameterStore& store, const std::string& name, OctLayout in,
                                const OctLayerSpec& spec, std::mt19937_64& rng);
OctConv1d make_oct_final(ParameterStore& store, const std::string& name, OctLayout in,
                         const OctLayerSpec& spec, std::mt19937_64& rng);

/// Trainable parameters (k*Cin*Cout + Cout per present path).
std::size_t oct_param_count(OctBlock kind, const OctLayerSpec& spec, OctLayout in);
std::size_t conv1d_param_count(std::size_t kernel, std::size_t cin, std::size_t cout);

/// Glorot-uniform initializer, limit sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace oct1d
