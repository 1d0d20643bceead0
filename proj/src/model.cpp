#include "oct1d/model.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace oct1d {

std::string_view architecture_name(Architecture a) noexcept {
  switch (a) {
    case Architecture::Fcn: return "fcn";
    case Architecture::OctFcn: return "octfcn";
    case Architecture::ResNet: return "resnet";
    case Architecture::OctResNet: return "octresnet";
    case Architecture::LstmFcn: return "lstmfcn";
    case Architecture::LstmOctFcn: return "lstm-octfcn";
    case Architecture::AlstmFcn: return "alstmfcn";
    case Architecture::AlstmOctFcn: return "alstm-octfcn";
  }
  return "unknown";
}

std::optional<Architecture> parse_architecture(std::string_view name) noexcept {
  for (auto a : kAllArchitectures)
    if (architecture_name(a) == name) return a;
  return std::nullopt;
}

bool uses_octave(Architecture a) noexcept {
  return a == Architecture::OctFcn || a == Architecture::OctResNet ||
         a == Architecture::LstmOctFcn || a == Architecture::AlstmOctFcn;
}

bool uses_lstm(Architecture a) noexcept {
  return a == Architecture::LstmFcn || a == Architecture::LstmOctFcn ||
         a == Architecture::AlstmFcn || a == Architecture::AlstmOctFcn;
}

bool uses_attention(Architecture a) noexcept {
  return a == Architecture::AlstmFcn || a == Architecture::AlstmOctFcn;
}

bool uses_residual(Architecture a) noexcept {
  return a == Architecture::ResNet || a == Architecture::OctResNet;
}

Architecture base_architecture(Architecture a) noexcept {
  switch (a) {
    case Architecture::LstmFcn:
    case Architecture::AlstmFcn: return Architecture::Fcn;
    case Architecture::LstmOctFcn:
    case Architecture::AlstmOctFcn: return Architecture::OctFcn;
    default: return a;
  }
}

namespace {

constexpr std::array<std::size_t, 3> kFcnFilters{128, 256, 128};
constexpr std::array<std::size_t, 3> kFcnKernels{8, 5, 3};
constexpr std::array<std::size_t, 3> kResWidths{64, 128, 128};
constexpr std::array<std::size_t, 3> kResKernels{8, 5, 3};

struct BatchNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* mean = nullptr;
  Parameter* var = nullptr;
  Parameter* steps = nullptr;

  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t ch)
      : gamma(&store.add(name + ".gamma", Tensor::ones({ch}))),
        beta(&store.add(name + ".beta", Tensor::zeros({ch}))),
        mean(&store.add(name + ".mean", Tensor::zeros({ch}), false)),
        var(&store.add(name + ".var", Tensor::ones({ch}), false)),
        steps(&store.add(name + ".steps", Tensor::zeros({1}), false)) {}

  Var operator()(Tape& tape, Var x) const {
    return ops::batch_norm1d(tape, x, tape.param(*gamma), tape.param(*beta),
                             {&mean->value, &var->value, &steps->value});
  }
};

struct Conv {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  Conv() = default;
  Conv(ParameterStore& store, const std::string& name, std::size_t k, std::size_t cin,
       std::size_t cout, std::mt19937_64& rng)
      : w(&store.add(name + ".w", glorot_uniform({k, cin, cout}, k * cin, k * cout, rng))),
        b(&store.add(name + ".b", Tensor::zeros({cout}))) {}

  Var operator()(Tape& tape, Var x) const {
    return ops::conv1d(tape, x, tape.param(*w), tape.param(*b));
  }
};

// conv -> BN
struct PlainStage {
  Conv conv;
  BatchNorm bn;

  Var operator()(Tape& tape, Var x) const { return bn(tape, conv(tape, x)); }
};

// octconv -> BN per branch
struct OctStage {
  OctConv1d conv;
  BatchNorm bn_high;
  std::optional<BatchNorm> bn_low;

  OctStage(ParameterStore& store, const std::string& name, OctConv1d c) : conv(std::move(c)) {
    bn_high = BatchNorm(store, name + ".bn_high", conv.out_layout().high);
    if (conv.out_layout().low) bn_low.emplace(store, name + ".bn_low", conv.out_layout().low);
  }

  OctVar operator()(Tape& tape, const OctVar& x) const {
    OctVar y = conv.forward(tape, x);
    y.high = bn_high(tape, y.high);
    if (bn_low) y.low = (*bn_low)(tape, y.low);
    return y;
  }
};

OctVar relu_pair(Tape& tape, OctVar x) {
  x.high = ops::relu(tape, x.high);
  if (!x.plain()) x.low = ops::relu(tape, x.low);
  return x;
}

OctVar add_pair(Tape& tape, const OctVar& a, const OctVar& b) {
  OctVar y{ops::add(tape, a.high, b.high), Var{}};
  if (!a.plain()) y.low = ops::add(tape, a.low, b.low);
  return y;
}

void tap_pair(ForwardTrace* trace, const std::string& name, const OctVar& v) {
  if (!trace) return;
  if (v.plain()) {
    trace->taps.emplace_back(name, v.high);
  } else {
    trace->taps.emplace_back(name + ".high", v.high);
    trace->taps.emplace_back(name + ".low", v.low);
  }
}

struct PlainResBlock {
  std::array<PlainStage, 3> stages;
  std::optional<Conv> proj;
};

struct OctResBlock {
  std::vector<OctStage> stages;
  std::optional<OctConv1d> proj;
};

}  // namespace

struct Model::Impl {
  std::vector<PlainStage> fcn;
  std::vector<OctStage> octfcn;
  std::vector<PlainResBlock> res;
  std::vector<OctResBlock> octres;

  Parameter* lstm_wih = nullptr;
  Parameter* lstm_whh = nullptr;
  Parameter* lstm_b = nullptr;
  Parameter* att_w = nullptr;
  Parameter* att_v = nullptr;
  Parameter* head_w = nullptr;
  Parameter* head_b = nullptr;
  std::size_t feature_width = 0;
};

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

Model::Model(const ModelConfig& config) : config_(config), impl_(std::make_unique<Impl>()) {
  const Architecture arch = config.architecture;
  if (config.num_classes < 2)
    fail(ErrorKind::Config, "num_classes must be >= 2, got " + std::to_string(config.num_classes));
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    fail(ErrorKind::Config, "alpha must lie in [0, 1]");
  if (uses_lstm(arch)) {
    if (config.lstm_units < 1) fail(ErrorKind::Config, "lstm_units must be >= 1");
    if (config.input_length < 1)
      fail(ErrorKind::Config, "input_length is required for LSTM architectures");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0))
      fail(ErrorKind::Config, "dropout must lie in [0, 1)");
  }

  std::mt19937_64 rng(config.seed);
  auto& im = *impl_;
  const Architecture base = base_architecture(arch);
  const std::string kNames[] = {"1", "2", "3"};

  if (base == Architecture::Fcn) {
    std::size_t cin = 1;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string name = "block" + kNames[i];
      PlainStage s;
      s.conv = Conv(store_, name + ".conv", kFcnKernels[i], cin, kFcnFilters[i], rng);
      s.bn = BatchNorm(store_, name + ".bn", kFcnFilters[i]);
      im.fcn.push_back(s);
      cin = kFcnFilters[i];
    }
    im.feature_width = cin;
  } else if (base == Architecture::OctFcn) {
    OctLayout layout{1, 0};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string name = "block" + kNames[i];
      const OctLayerSpec spec{kFcnFilters[i], kFcnKernels[i], config.alpha};
      OctConv1d conv = i == 0   ? make_oct_initial(store_, name + ".oct", 1, spec, rng)
                       : i == 1 ? make_oct_intermediate(store_, name + ".oct", layout, spec, rng)
                                : make_oct_final(store_, name + ".oct", layout, spec, rng);
      layout = conv.out_layout();
      im.octfcn.emplace_back(store_, name, std::move(conv));
    }
    im.feature_width = layout.total();
  } else if (base == Architecture::ResNet) {
    std::size_t cin = 1;
    for (std::size_t bi = 0; bi < 3; ++bi) {
      const std::string name = "res" + kNames[bi];
      const std::size_t width = kResWidths[bi];
      PlainResBlock block;
      std::size_t c = cin;
      for (std::size_t s = 0; s < 3; ++s) {
        const std::string sname = name + ".stage" + kNames[s];
        block.stages[s].conv = Conv(store_, sname + ".conv", kResKernels[s], c, width, rng);
        block.stages[s].bn = BatchNorm(store_, sname + ".bn", width);
        c = width;
      }
      if (cin != width) block.proj = Conv(store_, name + ".proj", 1, cin, width, rng);
      im.res.push_back(std::move(block));
      cin = width;
    }
    im.feature_width = cin;
  } else {  // OctResNet
    OctLayout layout{1, 0};
    for (std::size_t bi = 0; bi < 3; ++bi) {
      const std::string name = "res" + kNames[bi];
      const OctLayout block_in = layout;
      OctResBlock block;
      for (std::size_t s = 0; s < 3; ++s) {
        const std::string sname = name + ".stage" + kNames[s];
        const OctLayerSpec spec{kResWidths[bi], kResKernels[s], config.alpha};
        const bool first = bi == 0 && s == 0;
        const bool last = bi == 2 && s == 2;
        OctConv1d conv = first  ? make_oct_initial(store_, sname + ".oct", 1, spec, rng)
                         : last ? make_oct_final(store_, sname + ".oct", layout, spec, rng)
                                : make_oct_intermediate(store_, sname + ".oct", layout, spec, rng);
        layout = conv.out_layout();
        block.stages.emplace_back(store_, sname, std::move(conv));
      }
      if (!(block_in == layout))
        block.proj.emplace(store_, name + ".proj", block_in, layout, 1, rng, false);
      im.octres.push_back(std::move(block));
    }
    im.feature_width = layout.total();
  }

  std::size_t head_in = im.feature_width;
  if (uses_lstm(arch)) {
    const std::size_t h = config.lstm_units;
    const std::size_t q = config.input_length;
    im.lstm_wih = &store_.add("lstm.w_ih", glorot_uniform({q, 4 * h}, q, 4 * h, rng));
    im.lstm_whh = &store_.add("lstm.w_hh", glorot_uniform({h, 4 * h}, h, 4 * h, rng));
    Tensor bias = Tensor::zeros({4 * h});
    for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;  // forget gate
    im.lstm_b = &store_.add("lstm.b", std::move(bias));
    if (uses_attention(arch)) {
      im.att_w = &store_.add("attention.w", glorot_uniform({h, h}, h, h, rng));
      im.att_v = &store_.add("attention.v", glorot_uniform({h}, h, 1, rng));
    }
    head_in += h;
  }
  im.head_w = &store_.add("head.w", glorot_uniform({head_in, config.num_classes}, head_in,
                                                   config.num_classes, rng));
  im.head_b = &store_.add("head.b", Tensor::zeros({config.num_classes}));
}

std::size_t Model::feature_width() const noexcept { return impl_->feature_width; }

Var Model::features(Tape& tape, Var input, ForwardTrace* trace) const {
  const Tensor& x = tape.value(input);
  require_rank(x, 3, "model input");
  if (x.dim(2) != 1)
    fail(ErrorKind::Dimension, "model input must be univariate (B, Q, 1), got " +
                                   shape_str(x.shape()));
  const auto& im = *impl_;
  const std::string kNames[] = {"1", "2", "3"};
  Var out;
  if (!im.fcn.empty()) {
    Var h = input;
    for (std::size_t i = 0; i < im.fcn.size(); ++i) {
      h = ops::relu(tape, im.fcn[i](tape, h));
      if (trace) trace->taps.emplace_back("block" + kNames[i], h);
    }
    out = h;
  } else if (!im.octfcn.empty()) {
    OctVar h{input, Var{}};
    for (std::size_t i = 0; i < im.octfcn.size(); ++i) {
      h = relu_pair(tape, im.octfcn[i](tape, h));
      tap_pair(trace, "block" + kNames[i], h);
    }
    out = h.high;
  } else if (!im.res.empty()) {
    Var h = input;
    for (std::size_t bi = 0; bi < im.res.size(); ++bi) {
      const auto& block = im.res[bi];
      Var y = h;
      for (std::size_t s = 0; s < 3; ++s) {
        y = block.stages[s](tape, y);
        if (s < 2) y = ops::relu(tape, y);
      }
      Var skip = block.proj ? (*block.proj)(tape, h) : h;
      h = ops::relu(tape, ops::add(tape, y, skip));
      if (trace) trace->taps.emplace_back("res" + kNames[bi], h);
    }
    out = h;
  } else {
    OctVar h{input, Var{}};
    for (std::size_t bi = 0; bi < im.octres.size(); ++bi) {
      const auto& block = im.octres[bi];
      OctVar y = h;
      for (std::size_t s = 0; s < block.stages.size(); ++s) {
        y = block.stages[s](tape, y);
        if (s + 1 < block.stages.size()) y = relu_pair(tape, y);
      }
      OctVar skip = block.proj ? block.proj->forward(tape, h) : h;
      h = relu_pair(tape, add_pair(tape, y, skip));
      tap_pair(trace, "res" + kNames[bi], h);
    }
    out = h.high;
  }
  Var gap = ops::global_avg_pool(tape, out);
  if (trace) trace->taps.emplace_back("gap", gap);
  return gap;
}

Var Model::forward(Tape& tape, Var input, ForwardTrace* trace) const {
  const auto& im = *impl_;
  Var feats = features(tape, input, trace);
  if (uses_lstm(config_.architecture)) {
    const Tensor& x = tape.value(input);
    if (x.dim(1) != config_.input_length)
      fail(ErrorKind::Dimension, "input length " + std::to_string(x.dim(1)) +
                                     " differs from the LSTM input width " +
                                     std::to_string(config_.input_length));
    Var shuffled = ops::dimension_shuffle(tape, input);
    auto rnn = ops::lstm(tape, shuffled, tape.param(*im.lstm_wih), tape.param(*im.lstm_whh),
                         tape.param(*im.lstm_b));
    Var branch = rnn.last;
    if (im.att_w)
      branch = ops::attention_context(tape, rnn.sequence, tape.param(*im.att_w),
                                      tape.param(*im.att_v));
    branch = ops::dropout(tape, branch, config_.dropout);
    if (trace) trace->taps.emplace_back("rnn", branch);
    feats = ops::concat(tape, feats, branch);
  }
  return ops::dense(tape, feats, tape.param(*im.head_w), tape.param(*im.head_b));
}

Tensor predict_proba(const Model& model, const Tensor& x, std::size_t batch) {
  require_rank(x, 3, "predict_proba input");
  const std::size_t n = x.dim(0), len = x.dim(1);
  const std::size_t k = model.config().num_classes;
  Tensor out({n, k});
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    Tensor chunk({m, len, 1},
                 std::vector<double>(x.ptr() + start * len, x.ptr() + (start + m) * len));
    Tape tape(Mode::Infer);
    Var logits = model.forward(tape, tape.constant(std::move(chunk)));
    Tensor p = ops::softmax(tape.value(logits));
    std::copy(p.data().begin(), p.data().end(), out.ptr() + start * k);
  }
  return out;
}

std::vector<std::size_t> fcn_block_param_counts(std::size_t in_channels) {
  std::vector<std::size_t> counts;
  std::size_t cin = in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    counts.push_back(conv1d_param_count(kFcnKernels[i], cin, kFcnFilters[i]));
    cin = kFcnFilters[i];
  }
  return counts;
}

}  // namespace oct1d
