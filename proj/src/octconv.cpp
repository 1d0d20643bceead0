#include "oct1d/octconv.hpp"

#include <cmath>

#include "oct1d/ops.hpp"

namespace oct1d {

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

bool degenerate_alpha(double alpha) noexcept { return alpha <= 0.0 || alpha >= 1.0; }

OctLayout oct_output_layout(OctBlock kind, const OctLayerSpec& spec) {
  if (spec.filters == 0) fail(ErrorKind::Config, "octconv: filters must be positive");
  if (spec.kernel == 0) fail(ErrorKind::Config, "octconv: kernel must be positive");
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0))
    fail(ErrorKind::Config, "octconv: alpha must lie in [0, 1]");
  if (kind == OctBlock::Final || degenerate_alpha(spec.alpha)) return {spec.filters, 0};
  const double high_share = kind == OctBlock::Initial ? spec.alpha : 1.0 - spec.alpha;
  const std::size_t high = round_half_up(high_share * static_cast<double>(spec.filters));
  if (high == 0 || high >= spec.filters)
    fail(ErrorKind::Config, "octconv: alpha=" + std::to_string(spec.alpha) + " with " +
                                std::to_string(spec.filters) +
                                " filters leaves a frequency branch without channels");
  return {high, spec.filters - high};
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

namespace {

OctConv1d::Path make_path(ParameterStore& store, const std::string& name, std::size_t kernel,
                          std::size_t cin, std::size_t cout, std::mt19937_64& rng) {
  OctConv1d::Path p;
  p.weight = &store.add(name + ".w", glorot_uniform({kernel, cin, cout}, kernel * cin,
                                                    kernel * cout, rng));
  p.bias = &store.add(name + ".b", Tensor::zeros({cout}));
  return p;
}

Var apply(Tape& tape, const OctConv1d::Path& p, Var x) {
  return ops::conv1d(tape, x, tape.param(*p.weight), tape.param(*p.bias));
}

Var accumulate(Tape& tape, Var acc, Var term) {
  return acc.valid() ? ops::add(tape, acc, term) : term;
}

}  // namespace

OctConv1d::OctConv1d(ParameterStore& store, const std::string& name, OctLayout in,
                     OctLayout out, std::size_t kernel, std::mt19937_64& rng, bool cross_paths)
    : in_(in), out_(out), kernel_(kernel) {
  if (in.high == 0 || out.high == 0)
    fail(ErrorKind::Config, name + ": the high-frequency branch cannot be empty");
  if (kernel == 0) fail(ErrorKind::Config, name + ": kernel must be positive");
  hh_ = make_path(store, name + ".hh", kernel, in.high, out.high, rng);
  if (out.low && (cross_paths || in.low == 0))
    hl_ = make_path(store, name + ".hl", kernel, in.high, out.low, rng);
  if (in.low && (cross_paths || out.low == 0))
    lh_ = make_path(store, name + ".lh", kernel, in.low, out.high, rng);
  if (in.low && out.low) ll_ = make_path(store, name + ".ll", kernel, in.low, out.low, rng);
}

OctVar OctConv1d::forward(Tape& tape, const OctVar& x) const {
  const Tensor& high = tape.value(x.high);
  require_rank(high, 3, "octconv high input");
  if (high.dim(2) != in_.high)
    fail(ErrorKind::Dimension, "octconv: high input has " + std::to_string(high.dim(2)) +
                                   " channels, layer expects " + std::to_string(in_.high));
  if (x.plain() != (in_.low == 0))
    fail(ErrorKind::Dimension, "octconv: input pair layout does not match the layer");
  const std::size_t len = high.dim(1);
  if (!x.plain()) {
    const Tensor& low = tape.value(x.low);
    require_rank(low, 3, "octconv low input");
    if (low.dim(1) != len / 2 || low.dim(2) != in_.low)
      fail(ErrorKind::Dimension, "octconv: low input " + shape_str(low.shape()) +
                                     " inconsistent with high " + shape_str(high.shape()));
  }

  Var out_high = apply(tape, hh_, x.high);
  if (lh_.present())
    out_high = accumulate(tape, out_high,
                          ops::upsample1d_nearest(tape, apply(tape, lh_, x.low), len));

  Var out_low;
  if (hl_.present()) out_low = apply(tape, hl_, ops::avg_pool1d(tape, x.high));
  if (ll_.present()) out_low = accumulate(tape, out_low, apply(tape, ll_, x.low));
  return {out_high, out_low};
}

std::size_t OctConv1d::param_count() const {
  std::size_t n = 0;
  for (const Path* p : {&hh_, &hl_, &lh_, &ll_})
    if (p->present()) n += p->weight->value.size() + p->bias->value.size();
  return n;
}

OctConv1d make_oct_initial(ParameterStore& store, const std::string& name,
                           std::size_t in_channels, const OctLayerSpec& spec,
                           std::mt19937_64& rng) {
  return OctConv1d(store, name, {in_channels, 0}, oct_output_layout(OctBlock::Initial, spec),
                   spec.kernel, rng);
}

OctConv1d make_oct_intermediate(ParameterStore& store, const std::string& name, OctLayout in,
                                const OctLayerSpec& spec, std::mt19937_64& rng) {
  return OctConv1d(store, name, in, oct_output_layout(OctBlock::Intermediate, spec), spec.kernel,
                   rng);
}

OctConv1d make_oct_final(ParameterStore& store, const std::string& name, OctLayout in,
                         const OctLayerSpec& spec, std::mt19937_64& rng) {
  return OctConv1d(store, name, in, oct_output_layout(OctBlock::Final, spec), spec.kernel, rng);
}

std::size_t conv1d_param_count(std::size_t kernel, std::size_t cin, std::size_t cout) {
  return kernel * cin * cout + cout;
}

std::size_t oct_param_count(OctBlock kind, const OctLayerSpec& spec, OctLayout in) {
  const OctLayout out = oct_output_layout(kind, spec);
  const std::size_t k = spec.kernel;
  std::size_t n = conv1d_param_count(k, in.high, out.high);
  if (out.low) n += conv1d_param_count(k, in.high, out.low);
  if (in.low) n += conv1d_param_count(k, in.low, out.high);
  if (in.low && out.low) n += conv1d_param_count(k, in.low, out.low);
  return n;
}

}  // namespace oct1d
