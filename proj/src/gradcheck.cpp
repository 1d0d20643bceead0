#include "oct1d/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "oct1d/error.hpp"
#include "oct1d/octconv.hpp"
#include "oct1d/ops.hpp"

namespace oct1d {

const std::vector<std::string>& gradcheck_families() {
  static const std::vector<std::string> f = {
      "conv1d",     "avg_pool1d", "upsample1d",  "batch_norm1d", "lstm",        "attention",
      "dense",      "octconv.hh", "octconv.hl",  "octconv.lh",   "octconv.ll",  "softmax_cross_entropy"};
  return f;
}

namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// A tensor the check perturbs: either a tape input or a model parameter.
struct Slot {
  std::string name;
  Tensor* value = nullptr;
  Parameter* param = nullptr;
};

// Builds the op output from tape inputs, one per non-parameter slot, in order.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Case {
  std::string label;
  std::vector<Slot> slots;
  Builder build;
  // Unit weights on the output, for ops that already return a scalar loss.
  bool scalar_output = false;
};

class Checker {
 public:
  Checker(const GradCheckOptions& opt, GradCheckResult& out) : opt_(opt), out_(out) {}

  void run(Case& c, Rng& rng) {
    Tensor weights;
    {
      Tape probe(Mode::Train);
      auto leaves = make_leaves(probe, c);
      const Tensor& y = probe.value(c.build(probe, leaves));
      weights = c.scalar_output ? Tensor::ones(y.shape()) : random_tensor(y.shape(), rng);
    }
    auto loss_of = [&](bool want_grad, std::vector<Tensor>* grads) {
      Tape tape(Mode::Train);
      for (auto& s : c.slots)
        if (s.param) s.param->grad.fill(0.0);
      auto leaves = make_leaves(tape, c);
      Var loss = ops::weighted_sum(tape, c.build(tape, leaves), weights);
      const double value = tape.value(loss)[0];
      if (want_grad) {
        tape.backward(loss);
        std::size_t k = 0;
        for (auto& s : c.slots) {
          if (s.param) {
            grads->push_back(s.param->grad);
          } else {
            Var v = leaves[k++];
            grads->push_back(tape.has_grad(v) ? tape.grad(v) : Tensor::zeros(s.value->shape()));
          }
        }
      }
      return value;
    };

    std::vector<Tensor> analytic;
    loss_of(true, &analytic);
    ++out_.shapes;
    for (std::size_t si = 0; si < c.slots.size(); ++si) {
      auto& s = c.slots[si];
      Tensor& v = *s.value;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double orig = v[i];
        v[i] = orig + opt_.step;
        const double up = loss_of(false, nullptr);
        v[i] = orig - opt_.step;
        const double down = loss_of(false, nullptr);
        v[i] = orig;
        const double numeric = (up - down) / (2.0 * opt_.step);
        const double a = analytic[si][i];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
        ++out_.entries;
        if (err > out_.max_rel_error || std::isnan(err)) {
          out_.max_rel_error = std::isnan(err) ? INFINITY : err;
          std::ostringstream w;
          w << c.label << ' ' << s.name << '[' << i << "] analytic=" << a << " numeric=" << numeric;
          out_.worst = w.str();
        }
      }
    }
  }

 private:
  static std::vector<Var> make_leaves(Tape& tape, Case& c) {
    std::vector<Var> leaves;
    for (auto& s : c.slots)
      if (!s.param) leaves.push_back(tape.input(*s.value));
    return leaves;
  }

  const GradCheckOptions& opt_;
  GradCheckResult& out_;
};

std::string shape_label(std::initializer_list<std::size_t> dims) {
  std::ostringstream os;
  os << '(';
  bool first = true;
  for (auto d : dims) {
    os << (first ? "" : ",") << d;
    first = false;
  }
  os << ')';
  return os.str();
}

void check_family(const std::string& family, const GradCheckOptions& opt, GradCheckResult& res, Rng& rng) {
  Checker checker(opt, res);
  for (std::size_t n = 0; n < opt.shapes; ++n) {
    const std::size_t b = pick(rng, 1, 3);
    if (family == "conv1d") {
      const std::size_t t = pick(rng, 1, 9), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 6);
      Tensor x = random_tensor({b, t, cin}, rng), w = random_tensor({k, cin, cout}, rng),
             bias = random_tensor({cout}, rng);
      Case c{"x" + shape_label({b, t, cin}) + " k=" + std::to_string(k),
             {{"x", &x}, {"w", &w}, {"b", &bias}},
             [](Tape& tp, const std::vector<Var>& in) { return ops::conv1d(tp, in[0], in[1], in[2]); }};
      checker.run(c, rng);
    } else if (family == "avg_pool1d") {
      const std::size_t t = pick(rng, 2, 11), ch = pick(rng, 1, 4);
      Tensor x = random_tensor({b, t, ch}, rng);
      Case c{"x" + shape_label({b, t, ch}), {{"x", &x}},
             [](Tape& tp, const std::vector<Var>& in) { return ops::avg_pool1d(tp, in[0]); }};
      checker.run(c, rng);
    } else if (family == "upsample1d") {
      const std::size_t t = pick(rng, 1, 7), ch = pick(rng, 1, 4), target = 2 * t + pick(rng, 0, 1);
      Tensor x = random_tensor({b, t, ch}, rng);
      Case c{"x" + shape_label({b, t, ch}) + " to " + std::to_string(target), {{"x", &x}},
             [target](Tape& tp, const std::vector<Var>& in) {
               return ops::upsample1d_nearest(tp, in[0], target);
             }};
      checker.run(c, rng);
    } else if (family == "batch_norm1d") {
      const std::size_t t = pick(rng, 2, 8), ch = pick(rng, 1, 4);
      Tensor x = random_tensor({b, t, ch}, rng), g = random_tensor({ch}, rng, 0.5, 1.5),
             beta = random_tensor({ch}, rng);
      auto rm = std::make_shared<Tensor>(Tensor::zeros({ch}));
      auto rv = std::make_shared<Tensor>(Tensor::ones({ch}));
      Case c{"x" + shape_label({b, t, ch}),
             {{"x", &x}, {"gamma", &g}, {"beta", &beta}},
             [rm, rv](Tape& tp, const std::vector<Var>& in) {
               return ops::batch_norm1d(tp, in[0], in[1], in[2], {rm.get(), rv.get()});
             }};
      checker.run(c, rng);
    } else if (family == "lstm") {
      const std::size_t t = pick(rng, 1, 5), d = pick(rng, 1, 4), h = pick(rng, 1, 4);
      Tensor x = random_tensor({b, t, d}, rng), wih = random_tensor({d, 4 * h}, rng),
             whh = random_tensor({h, 4 * h}, rng), bias = random_tensor({4 * h}, rng);
      const bool seq = n % 2 == 1;
      Case c{"x" + shape_label({b, t, d}) + " H=" + std::to_string(h) + (seq ? " sequence" : " last"),
             {{"x", &x}, {"w_ih", &wih}, {"w_hh", &whh}, {"b", &bias}},
             [seq](Tape& tp, const std::vector<Var>& in) {
               auto o = ops::lstm(tp, in[0], in[1], in[2], in[3]);
               return seq ? o.sequence : o.last;
             }};
      checker.run(c, rng);
    } else if (family == "attention") {
      const std::size_t t = pick(rng, 2, 6), h = pick(rng, 1, 4), a = pick(rng, 1, 4);
      Tensor s = random_tensor({b, t, h}, rng), w = random_tensor({h, a}, rng), v = random_tensor({a}, rng);
      Case c{"states" + shape_label({b, t, h}) + " A=" + std::to_string(a),
             {{"states", &s}, {"w", &w}, {"v", &v}},
             [](Tape& tp, const std::vector<Var>& in) {
               return ops::attention_context(tp, in[0], in[1], in[2]);
             }};
      checker.run(c, rng);
    } else if (family == "dense") {
      const std::size_t d = pick(rng, 1, 6), o = pick(rng, 1, 5);
      Tensor x = random_tensor({b, d}, rng), w = random_tensor({d, o}, rng), bias = random_tensor({o}, rng);
      Case c{"x" + shape_label({b, d}) + " O=" + std::to_string(o),
             {{"x", &x}, {"w", &w}, {"b", &bias}},
             [](Tape& tp, const std::vector<Var>& in) { return ops::dense(tp, in[0], in[1], in[2]); }};
      checker.run(c, rng);
    } else if (family.starts_with("octconv.")) {
      const std::string path = family.substr(8);
      const std::size_t t = pick(rng, 2, 9), k = pick(rng, 1, 5);
      const OctLayout in{pick(rng, 1, 3), pick(rng, 1, 3)}, out{pick(rng, 1, 3), pick(rng, 1, 3)};
      auto store = std::make_shared<ParameterStore>();
      Rng init(rng());
      auto layer = std::make_shared<OctConv1d>(*store, "oct", in, out, k, init);
      const OctConv1d::Path& p = path == "hh" ? layer->hh() : path == "hl" ? layer->hl()
                                 : path == "lh" ? layer->lh() : layer->ll();
      Tensor xh = random_tensor({b, t, in.high}, rng), xl = random_tensor({b, t / 2, in.low}, rng);
      Case c{"high" + shape_label({b, t, in.high}) + " low" + shape_label({b, t / 2, in.low}) + " out(" +
                 std::to_string(out.high) + "," + std::to_string(out.low) + ") k=" + std::to_string(k),
             {{"x_high", &xh}, {"x_low", &xl}, {"w", &p.weight->value, p.weight}, {"b", &p.bias->value, p.bias}},
             [layer, store](Tape& tp, const std::vector<Var>& xs) {
               OctVar y = layer->forward(tp, OctVar{xs[0], xs[1]});
               // Flatten both branches into one output so one functional covers them.
               Var lo = ops::upsample1d_nearest(tp, y.low, tp.value(y.high).dim(1));
               return ops::concat(tp, y.high, lo);
             }};
      checker.run(c, rng);
    } else if (family == "softmax_cross_entropy") {
      const std::size_t k = pick(rng, 2, 5), rows = pick(rng, 1, 4);
      Tensor logits = random_tensor({rows, k}, rng, -2.0, 2.0);
      std::vector<std::size_t> labels(rows);
      for (auto& l : labels) l = pick(rng, 0, k - 1);
      Case c{"logits" + shape_label({rows, k}), {{"logits", &logits}},
             [labels](Tape& tp, const std::vector<Var>& in) {
               return ops::softmax_cross_entropy(tp, in[0], labels);
             }};
      c.scalar_output = true;
      checker.run(c, rng);
    } else {
      fail(ErrorKind::Config, "unknown gradient-check family '" + family + "'");
    }
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opt) {
  if (opt.shapes < 1) fail(ErrorKind::Config, "gradcheck: shapes must be >= 1");
  const auto& families = opt.families.empty() ? gradcheck_families() : opt.families;
  std::vector<GradCheckResult> out;
  for (const auto& f : families) {
    const auto& all = gradcheck_families();
    const auto it = std::find(all.begin(), all.end(), f);
    if (it == all.end()) fail(ErrorKind::Config, "unknown gradient-check family '" + f + "'");
    GradCheckResult r;
    r.family = f;
    Rng rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(it - all.begin()));
    check_family(f, opt, r, rng);
    r.passed = r.max_rel_error < opt.tolerance;
    out.push_back(std::move(r));
  }
  return out;
}

std::string gradcheck_report(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %6s %8s %12s  %s\n", "family", "shapes", "entries", "max_rel_err", "status");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-24s %6zu %8zu %12.3e  %s\n", r.family.c_str(), r.shapes, r.entries,
                  r.max_rel_error, r.passed ? "PASS" : "FAIL");
    os << line;
    if (!r.passed) os << "    worst: " << r.worst << '\n';
  }
  return os.str();
}

}  // namespace oct1d
