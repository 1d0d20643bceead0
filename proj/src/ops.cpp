#include "oct1d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gemm.hpp"

namespace oct1d::ops {

using detail::dense_ref;
using detail::gemm;
using detail::MatRef;
using Eigen::Index;

namespace {

void perturb_if_faulty(std::string_view family, Tensor& g) {
  if (!debug::backward_fault(family)) return;
  for (auto& v : g.data()) v = v * 1.01 + 1e-3;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Var conv1d(Tape& tape, Var xv, Var wv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Tensor& b = tape.value(bv);
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  require_rank(b, 1, "conv1d bias");
  const std::size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2);
  const std::size_t k = w.dim(0), cout = w.dim(2);
  if (w.dim(1) != cin)
    fail(ErrorKind::Dimension, "conv1d: weight expects " + std::to_string(w.dim(1)) +
                                   " input channels, input has " + std::to_string(cin));
  if (b.dim(0) != cout) fail(ErrorKind::Dimension, "conv1d: bias width != output channels");

  const std::size_t pad_left = (k - 1) / 2;
  const std::size_t padded_len = len + k - 1;
  Tensor xpad({batch, padded_len, cin});
  for (std::size_t n = 0; n < batch; ++n)
    std::copy_n(&x.at(n, 0, 0), len * cin, &xpad.at(n, pad_left, 0));

  // Row r of the overlapping view is the receptive field starting at padded
  // position r; rows that straddle two samples are computed and discarded.
  const Index rows = static_cast<Index>(batch * padded_len - (k - 1));
  const MatRef cols{xpad.ptr(), rows, static_cast<Index>(k * cin), static_cast<Index>(cin)};
  std::vector<double> yext(static_cast<std::size_t>(rows) * cout);
  gemm(tape.precision(), cols, false, dense_ref(w.ptr(), k * cin, cout), false, yext.data(),
       false);

  Tensor y({batch, len, cout});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < len; ++t) {
      const double* src = &yext[(n * padded_len + t) * cout];
      double* dst = &y.at(n, t, 0);
      for (std::size_t c = 0; c < cout; ++c) dst[c] = src[c] + b[c];
    }

  return tape.record(
      "conv1d", std::move(y), {xv, wv, bv},
      [=, xpad = std::move(xpad)](Tape& tp, std::size_t self) {
        const Tensor& gy = tp.upstream(self);
        std::vector<double> gext(static_cast<std::size_t>(rows) * cout, 0.0);
        for (std::size_t n = 0; n < batch; ++n)
          std::copy_n(&gy.at(n, 0, 0), len * cout, &gext[n * padded_len * cout]);
        const MatRef gref = dense_ref(gext.data(), rows, cout);
        const MatRef colref{xpad.ptr(), rows, static_cast<Index>(k * cin),
                            static_cast<Index>(cin)};
        if (tp.requires_grad(wv)) {
          Tensor gw({k, cin, cout});
          gemm(tp.precision(), colref, true, gref, false, gw.ptr(), false);
          perturb_if_faulty("conv1d", gw);
          Tensor& acc = tp.grad_buffer(wv);
          for (std::size_t i = 0; i < gw.size(); ++i) acc[i] += gw[i];
        }
        if (tp.requires_grad(bv)) {
          Tensor& gb = tp.grad_buffer(bv);
          for (std::size_t r = 0; r < batch * len; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += gy[r * cout + c];
        }
        if (tp.requires_grad(xv)) {
          const Tensor& wt = tp.value(wv);
          std::vector<double> gcol(static_cast<std::size_t>(rows) * k * cin);
          gemm(tp.precision(), gref, false, dense_ref(wt.ptr(), k * cin, cout), true,
               gcol.data(), false);
          std::vector<double> gpad(batch * padded_len * cin, 0.0);
          const std::size_t width = k * cin;
          for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r) {
            const double* src = &gcol[r * width];
            double* dst = &gpad[r * cin];
            for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
          }
          Tensor& gx = tp.grad_buffer(xv);
          for (std::size_t n = 0; n < batch; ++n) {
            const double* src = &gpad[(n * padded_len + pad_left) * cin];
            double* dst = &gx.at(n, 0, 0);
            for (std::size_t i = 0; i < len * cin; ++i) dst[i] += src[i];
          }
        }
      });
}

Var avg_pool1d(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "avg_pool1d input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (len < 2)
    fail(ErrorKind::DegenerateLength, "avg_pool1d needs at least 2 time steps, got " +
                                          std::to_string(len));
  const std::size_t out_len = len / 2;
  Tensor y({batch, out_len, ch});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < out_len; ++t)
      for (std::size_t c = 0; c < ch; ++c)
        y.at(n, t, c) = (x.at(n, 2 * t, c) + x.at(n, 2 * t + 1, c)) / 2.0;
  return tape.record("avg_pool1d", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t t = 0; t < out_len; ++t)
        for (std::size_t c = 0; c < ch; ++c) {
          const double g = gy.at(n, t, c) / 2.0;
          gx.at(n, 2 * t, c) += g;
          gx.at(n, 2 * t + 1, c) += g;
        }
    if (debug::backward_fault("avg_pool1d")) gx[0] += 1e-3;
  });
}

Var upsample1d_nearest(Tape& tape, Var xv, std::size_t target_len) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "upsample1d input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (target_len != 2 * len && target_len != 2 * len + 1)
    fail(ErrorKind::Dimension, "upsample1d: target length " + std::to_string(target_len) +
                                   " is not 2T or 2T+1 for T=" + std::to_string(len));
  auto src_index = [len](std::size_t t) { return std::min(t / 2, len - 1); };
  Tensor y({batch, target_len, ch});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < target_len; ++t)
      std::copy_n(&x.at(n, src_index(t), 0), ch, &y.at(n, t, 0));
  return tape.record("upsample1d", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t t = 0; t < target_len; ++t)
        for (std::size_t c = 0; c < ch; ++c) gx.at(n, src_index(t), c) += gy.at(n, t, c);
    if (debug::backward_fault("upsample1d")) gx[0] += 1e-3;
  });
}

Var batch_norm1d(Tape& tape, Var xv, Var gv, Var bv, BatchNormState state) {
  const Tensor& x = tape.value(xv);
  const Tensor& gamma = tape.value(gv);
  const Tensor& beta = tape.value(bv);
  const std::size_t ch = x.shape().back();
  const std::size_t rows = x.size() / ch;
  if (gamma.size() != ch || beta.size() != ch)
    fail(ErrorKind::Dimension, "batch_norm1d: gamma/beta width != channels");
  if (!state.running_mean || !state.running_var ||
      state.running_mean->size() != ch || state.running_var->size() != ch)
    fail(ErrorKind::Dimension, "batch_norm1d: running statistics width != channels");

  std::vector<double> mean(ch, 0.0), var(ch, 0.0), inv_std(ch);
  const bool train = tape.training();
  if (train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mean[c] += x[r * ch + c];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = x[r * ch + c] - mean[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    const double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1) : 1.0;
    auto& rm = *state.running_mean;
    auto& rv = *state.running_var;
    const double m = state.momentum;
    double keep = m, take = 1.0 - m;
    if (state.steps) {
      const double t = (*state.steps)[0] + 1.0;
      const double prev = 1.0 - std::pow(m, t - 1.0);
      const double norm = 1.0 - std::pow(m, t);
      keep = m * prev / norm;
      take = (1.0 - m) / norm;
      (*state.steps)[0] = t;
    }
    for (std::size_t c = 0; c < ch; ++c) {
      rm[c] = keep * rm[c] + take * mean[c];
      rv[c] = keep * rv[c] + take * var[c] * unbias;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = (*state.running_mean)[c];
      var[c] = (*state.running_var)[c];
    }
  }
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);

  Tensor xhat(x.shape());
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      xhat[i] = (x[i] - mean[c]) * inv_std[c];
      y[i] = gamma[c] * xhat[i] + beta[c];
    }

  return tape.record(
      "batch_norm1d", std::move(y), {xv, gv, bv},
      [=, xhat = std::move(xhat)](Tape& tp, std::size_t self) {
        const Tensor& gy = tp.upstream(self);
        const Tensor& gam = tp.value(gv);
        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            sum_g[c] += gy[i];
            sum_gx[c] += gy[i] * xhat[i];
          }
        if (tp.requires_grad(gv)) {
          Tensor& gg = tp.grad_buffer(gv);
          for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
        }
        if (tp.requires_grad(bv)) {
          Tensor& gb = tp.grad_buffer(bv);
          for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
          if (debug::backward_fault("batch_norm1d")) gb[0] += 1e-3;
        }
        if (!tp.requires_grad(xv)) return;
        Tensor& gx = tp.grad_buffer(xv);
        const double n = static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            if (train)
              gx[i] += gam[c] * inv_std[c] / n * (n * gy[i] - sum_g[c] - xhat[i] * sum_gx[c]);
            else
              gx[i] += gy[i] * gam[c] * inv_std[c];
          }
      });
}

Var relu(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return tape.record("relu", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    const Tensor& xin = tp.value(xv);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xin[i] > 0.0) gx[i] += gy[i];
  });
}

Var dropout(Tape& tape, Var xv, double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    fail(ErrorKind::Config, "dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!tape.training() || rate == 0.0) return xv;
  const Tensor& x = tape.value(xv);
  const double scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.shape());
  for (auto& m : mask.data()) m = keep(tape.rng()) ? scale : 0.0;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return tape.record("dropout", std::move(y), {xv},
                     [=, mask = std::move(mask)](Tape& tp, std::size_t self) {
                       const Tensor& gy = tp.upstream(self);
                       Tensor& gx = tp.grad_buffer(xv);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
                     });
}

Var dense(Tape& tape, Var xv, Var wv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Tensor& b = tape.value(bv);
  require_rank(x, 2, "dense input");
  require_rank(w, 2, "dense weight");
  const std::size_t batch = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (w.dim(0) != din) fail(ErrorKind::Dimension, "dense: weight rows != input width");
  if (b.size() != dout) fail(ErrorKind::Dimension, "dense: bias width != output width");
  Tensor y({batch, dout});
  gemm(tape.precision(), dense_ref(x.ptr(), batch, din), false, dense_ref(w.ptr(), din, dout),
       false, y.ptr(), false);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < dout; ++o) y.at(n, o) += b[o];
  return tape.record("dense", std::move(y), {xv, wv, bv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    if (tp.requires_grad(wv)) {
      Tensor gw({din, dout});
      gemm(tp.precision(), dense_ref(tp.value(xv).ptr(), batch, din), true,
           dense_ref(gy.ptr(), batch, dout), false, gw.ptr(), false);
      perturb_if_faulty("dense", gw);
      Tensor& acc = tp.grad_buffer(wv);
      for (std::size_t i = 0; i < gw.size(); ++i) acc[i] += gw[i];
    }
    if (tp.requires_grad(bv)) {
      Tensor& gb = tp.grad_buffer(bv);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < dout; ++o) gb[o] += gy.at(n, o);
    }
    if (tp.requires_grad(xv)) {
      Tensor& gx = tp.grad_buffer(xv);
      gemm(tp.precision(), dense_ref(gy.ptr(), batch, dout), false,
           dense_ref(tp.value(wv).ptr(), din, dout), true, gx.ptr(), true);
    }
  });
}

Var global_avg_pool(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "global_avg_pool input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) y.at(n, c) += x.at(n, t, c);
    for (std::size_t c = 0; c < ch; ++c) y.at(n, c) /= static_cast<double>(len);
  }
  return tape.record("global_avg_pool", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c) gx.at(n, t, c) += gy.at(n, c) / static_cast<double>(len);
  });
}

Var dimension_shuffle(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "dimension_shuffle input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch, len});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) y.at(n, c, t) = x.at(n, t, c);
  return tape.record("dimension_shuffle", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c) gx.at(n, t, c) += gy.at(n, c, t);
  });
}

Var add(Tape& tape, Var av, Var bv) {
  const Tensor& a = tape.value(av);
  const Tensor& b = tape.value(bv);
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return tape.record("add", std::move(y), {av, bv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    for (Var v : {av, bv}) {
      if (!tp.requires_grad(v)) continue;
      Tensor& g = tp.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Var concat(Tape& tape, Var av, Var bv) {
  const Tensor& a = tape.value(av);
  const Tensor& b = tape.value(bv);
  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()))
    fail(ErrorKind::Dimension, "concat: leading axes differ " + shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()));
  const std::size_t wa = a.shape().back(), wb = b.shape().back();
  const std::size_t rows = a.size() / wa;
  Shape shape = a.shape();
  shape.back() = wa + wb;
  Tensor y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.ptr() + r * wa, wa, y.ptr() + r * (wa + wb));
    std::copy_n(b.ptr() + r * wb, wb, y.ptr() + r * (wa + wb) + wa);
  }
  return tape.record("concat", std::move(y), {av, bv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    if (tp.requires_grad(av)) {
      Tensor& ga = tp.grad_buffer(av);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < wa; ++i) ga[r * wa + i] += gy[r * (wa + wb) + i];
    }
    if (tp.requires_grad(bv)) {
      Tensor& gb = tp.grad_buffer(bv);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < wb; ++i) gb[r * wb + i] += gy[r * (wa + wb) + wa + i];
    }
  });
}

LstmOutput lstm(Tape& tape, Var xv, Var wihv, Var whhv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& wih = tape.value(wihv);
  const Tensor& whh = tape.value(whhv);
  const Tensor& b = tape.value(bv);
  require_rank(x, 3, "lstm input");
  require_rank(wih, 2, "lstm input weight");
  require_rank(whh, 2, "lstm recurrent weight");
  const std::size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2);
  const std::size_t hidden = whh.dim(0);
  const std::size_t g4 = 4 * hidden;
  if (wih.dim(0) != cin || wih.dim(1) != g4)
    fail(ErrorKind::Dimension, "lstm: input weight must be (C, 4H), got " + shape_str(wih.shape()));
  if (whh.dim(1) != g4) fail(ErrorKind::Dimension, "lstm: recurrent weight must be (H, 4H)");
  if (b.size() != g4) fail(ErrorKind::Dimension, "lstm: bias must be (4H)");

  // xw row n*len + t holds x[n, t, :] . W_ih
  std::vector<double> xw(batch * len * g4);
  gemm(tape.precision(), dense_ref(x.ptr(), batch * len, cin), false,
       dense_ref(wih.ptr(), cin, g4), false, xw.data(), false);

  Tensor gates({batch, len, g4});  // activated i, f, g, o
  Tensor cells({batch, len, hidden});
  Tensor tanh_cells({batch, len, hidden});
  Tensor seq({batch, len, hidden});
  std::vector<double> h(batch * hidden, 0.0), c(batch * hidden, 0.0), z(batch * g4);
  for (std::size_t t = 0; t < len; ++t) {
    gemm(tape.precision(), dense_ref(h.data(), batch, hidden), false,
         dense_ref(whh.ptr(), hidden, g4), false, z.data(), false);
    for (std::size_t n = 0; n < batch; ++n) {
      double* zn = &z[n * g4];
      const double* xn = &xw[(n * len + t) * g4];
      double* gn = &gates.at(n, t, 0);
      for (std::size_t j = 0; j < g4; ++j) zn[j] += xn[j] + b[j];
      for (std::size_t j = 0; j < hidden; ++j) {
        const double ig = sigmoid(zn[j]);
        const double fg = sigmoid(zn[hidden + j]);
        const double cg = std::tanh(zn[2 * hidden + j]);
        const double og = sigmoid(zn[3 * hidden + j]);
        gn[j] = ig;
        gn[hidden + j] = fg;
        gn[2 * hidden + j] = cg;
        gn[3 * hidden + j] = og;
        double& cell = c[n * hidden + j];
        cell = fg * cell + ig * cg;
        const double tc = std::tanh(cell);
        cells.at(n, t, j) = cell;
        tanh_cells.at(n, t, j) = tc;
        h[n * hidden + j] = og * tc;
        seq.at(n, t, j) = og * tc;
      }
    }
  }

  Var seq_var = tape.record(
      "lstm", seq, {xv, wihv, whhv, bv},
      [=, gates = std::move(gates), cells = std::move(cells),
       tanh_cells = std::move(tanh_cells)](Tape& tp, std::size_t self) {
        const Tensor& gseq = tp.upstream(self);
        const Tensor& hs = tp.value(Var{self});
        const Tensor& w_hh = tp.value(whhv);
        std::vector<double> dz_all(batch * len * g4);
        std::vector<double> dh_next(batch * hidden, 0.0), dc_next(batch * hidden, 0.0);
        std::vector<double> dz(batch * g4), hprev(batch * hidden);
        Tensor gwhh({hidden, g4});
        Tensor gb({g4});
        for (std::size_t t = len; t-- > 0;) {
          for (std::size_t n = 0; n < batch; ++n) {
            const double* gn = &gates.at(n, t, 0);
            double* dzn = &dz[n * g4];
            for (std::size_t j = 0; j < hidden; ++j) {
              const double ig = gn[j], fg = gn[hidden + j], cg = gn[2 * hidden + j],
                           og = gn[3 * hidden + j];
              const double tc = tanh_cells.at(n, t, j);
              const double cprev = t > 0 ? cells.at(n, t - 1, j) : 0.0;
              const double dh = gseq.at(n, t, j) + dh_next[n * hidden + j];
              const double dc = dh * og * (1.0 - tc * tc) + dc_next[n * hidden + j];
              dzn[j] = dc * cg * ig * (1.0 - ig);
              dzn[hidden + j] = dc * cprev * fg * (1.0 - fg);
              dzn[2 * hidden + j] = dc * ig * (1.0 - cg * cg);
              dzn[3 * hidden + j] = dh * tc * og * (1.0 - og);
              dc_next[n * hidden + j] = dc * fg;
              hprev[n * hidden + j] = t > 0 ? hs.at(n, t - 1, j) : 0.0;
            }
            std::copy_n(dzn, g4, &dz_all[(n * len + t) * g4]);
            for (std::size_t j = 0; j < g4; ++j) gb[j] += dzn[j];
          }
          if (t > 0)
            gemm(tp.precision(), dense_ref(hprev.data(), batch, hidden), true,
                 dense_ref(dz.data(), batch, g4), false, gwhh.ptr(), true);
          gemm(tp.precision(), dense_ref(dz.data(), batch, g4), false,
               dense_ref(w_hh.ptr(), hidden, g4), true, dh_next.data(), false);
        }
        if (tp.requires_grad(whhv)) {
          Tensor& acc = tp.grad_buffer(whhv);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gwhh[i];
        }
        if (tp.requires_grad(bv)) {
          perturb_if_faulty("lstm", gb);
          Tensor& acc = tp.grad_buffer(bv);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gb[i];
        }
        const MatRef dzref = dense_ref(dz_all.data(), batch * len, g4);
        if (tp.requires_grad(wihv))
          gemm(tp.precision(), dense_ref(tp.value(xv).ptr(), batch * len, cin), true, dzref,
               false, tp.grad_buffer(wihv).ptr(), true);
        if (tp.requires_grad(xv))
          gemm(tp.precision(), dzref, false, dense_ref(tp.value(wihv).ptr(), cin, g4), true,
               tp.grad_buffer(xv).ptr(), true);
      });
  return {last_step(tape, seq_var), seq_var};
}

Tensor attention_weights(const Tensor& states, const Tensor& w, const Tensor& v) {
  require_rank(states, 3, "attention states");
  const std::size_t batch = states.dim(0), len = states.dim(1), hidden = states.dim(2);
  const std::size_t att = w.dim(1);
  if (w.rank() != 2 || w.dim(0) != hidden)
    fail(ErrorKind::Dimension, "attention: W must be (H, A)");
  if (v.size() != att) fail(ErrorKind::Dimension, "attention: v must be (A)");
  std::vector<double> pre(batch * len * att);
  gemm(Precision::Double, dense_ref(states.ptr(), batch * len, hidden), false,
       dense_ref(w.ptr(), hidden, att), false, pre.data(), false);
  Tensor a({batch, len});
  for (std::size_t n = 0; n < batch; ++n) {
    double mx = -INFINITY;
    for (std::size_t t = 0; t < len; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < att; ++k) e += v[k] * std::tanh(pre[(n * len + t) * att + k]);
      a.at(n, t) = e;
      mx = std::max(mx, e);
    }
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) z += (a.at(n, t) = std::exp(a.at(n, t) - mx));
    for (std::size_t t = 0; t < len; ++t) a.at(n, t) /= z;
  }
  return a;
}

Var attention_context(Tape& tape, Var sv, Var wv, Var vv) {
  const Tensor& s = tape.value(sv);
  const Tensor& w = tape.value(wv);
  const Tensor& v = tape.value(vv);
  require_rank(s, 3, "attention states");
  const std::size_t batch = s.dim(0), len = s.dim(1), hidden = s.dim(2);
  if (w.rank() != 2 || w.dim(0) != hidden)
    fail(ErrorKind::Dimension, "attention: W must be (H, A)");
  const std::size_t att = w.dim(1);
  if (v.size() != att) fail(ErrorKind::Dimension, "attention: v must be (A)");

  Tensor u({batch * len, att});
  gemm(tape.precision(), dense_ref(s.ptr(), batch * len, hidden), false,
       dense_ref(w.ptr(), hidden, att), false, u.ptr(), false);
  for (auto& e : u.data()) e = std::tanh(e);
  Tensor a({batch, len});
  for (std::size_t n = 0; n < batch; ++n) {
    double mx = -INFINITY;
    for (std::size_t t = 0; t < len; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < att; ++k) e += v[k] * u.at(n * len + t, k);
      a.at(n, t) = e;
      mx = std::max(mx, e);
    }
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) z += (a.at(n, t) = std::exp(a.at(n, t) - mx));
    for (std::size_t t = 0; t < len; ++t) a.at(n, t) /= z;
  }
  Tensor ctx({batch, hidden});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < hidden; ++j) ctx.at(n, j) += a.at(n, t) * s.at(n, t, j);

  return tape.record(
      "attention", std::move(ctx), {sv, wv, vv},
      [=, u = std::move(u), a = std::move(a)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.upstream(self);
        const Tensor& st = tp.value(sv);
        const Tensor& vt = tp.value(vv);
        Tensor gs(st.shape());
        Tensor de({batch, len});
        for (std::size_t n = 0; n < batch; ++n) {
          double mean_da = 0.0;
          std::vector<double> da(len);
          for (std::size_t t = 0; t < len; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < hidden; ++j) {
              acc += g.at(n, j) * st.at(n, t, j);
              gs.at(n, t, j) += a.at(n, t) * g.at(n, j);
            }
            da[t] = acc;
            mean_da += a.at(n, t) * acc;
          }
          for (std::size_t t = 0; t < len; ++t) de.at(n, t) = a.at(n, t) * (da[t] - mean_da);
        }
        Tensor dpre({batch * len, att});
        Tensor gvv({att});
        for (std::size_t r = 0; r < batch * len; ++r) {
          const double d = de[r];
          for (std::size_t k = 0; k < att; ++k) {
            const double uk = u.at(r, k);
            gvv[k] += d * uk;
            dpre.at(r, k) = d * vt[k] * (1.0 - uk * uk);
          }
        }
        if (tp.requires_grad(vv)) {
          perturb_if_faulty("attention", gvv);
          Tensor& acc = tp.grad_buffer(vv);
          for (std::size_t k = 0; k < att; ++k) acc[k] += gvv[k];
        }
        if (tp.requires_grad(wv))
          gemm(tp.precision(), dense_ref(st.ptr(), batch * len, hidden), true,
               dense_ref(dpre.ptr(), batch * len, att), false, tp.grad_buffer(wv).ptr(), true);
        if (tp.requires_grad(sv)) {
          gemm(tp.precision(), dense_ref(dpre.ptr(), batch * len, att), false,
               dense_ref(tp.value(wv).ptr(), hidden, att), true, gs.ptr(), true);
          Tensor& acc = tp.grad_buffer(sv);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gs[i];
        }
      });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax input");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(n, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p.at(n, j) = std::exp(logits.at(n, j) - mx));
    for (std::size_t j = 0; j < k; ++j) p.at(n, j) /= z;
  }
  return p;
}

Var softmax_cross_entropy(Tape& tape, Var lv, const std::vector<std::size_t>& labels) {
  const Tensor& logits = tape.value(lv);
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (k < 2) fail(ErrorKind::Dimension, "softmax_cross_entropy needs at least 2 classes");
  if (labels.size() != batch)
    fail(ErrorKind::Dimension, "softmax_cross_entropy: label count != batch size");
  for (auto l : labels)
    if (l >= k)
      fail(ErrorKind::LabelRange, "label " + std::to_string(l) + " outside [0, " +
                                      std::to_string(k) + ")");
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(n, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(n, j) - mx);
    loss += mx + std::log(z) - logits.at(n, labels[n]);
  }
  loss /= static_cast<double>(batch);
  return tape.record("softmax_cross_entropy", Tensor::scalar(loss), {lv},
                     [=](Tape& tp, std::size_t self) {
                       const double g = tp.upstream(self)[0];
                       Tensor p = softmax(tp.value(lv));
                       Tensor& gl = tp.grad_buffer(lv);
                       for (std::size_t n = 0; n < batch; ++n)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = j == labels[n] ? 1.0 : 0.0;
                           gl.at(n, j) += g * (p.at(n, j) - onehot) / static_cast<double>(batch);
                         }
                       if (debug::backward_fault("softmax_cross_entropy")) gl[0] += 1e-3;
                     });
}

Var sum(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return tape.record("sum", Tensor::scalar(s), {xv}, [=](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    for (auto& v : tp.grad_buffer(xv).data()) v += g;
  });
}

Var weighted_sum(Tape& tape, Var xv, const Tensor& weights) {
  const Tensor& x = tape.value(xv);
  require_same_shape(x, weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
  return tape.record("weighted_sum", Tensor::scalar(s), {xv},
                     [=](Tape& tp, std::size_t self) {
                       const double g = tp.upstream(self)[0];
                       Tensor& gx = tp.grad_buffer(xv);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
                     });
}

Var half_squared_norm(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return tape.record("half_squared_norm", Tensor::scalar(0.5 * s), {xv},
                     [=](Tape& tp, std::size_t self) {
                       const double g = tp.upstream(self)[0];
                       const Tensor& xin = tp.value(xv);
                       Tensor& gx = tp.grad_buffer(xv);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * xin[i];
                     });
}

Var last_step(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "last_step input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch});
  for (std::size_t n = 0; n < batch; ++n) std::copy_n(&x.at(n, len - 1, 0), ch, &y.at(n, 0));
  return tape.record("last_step", std::move(y), {xv}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.upstream(self);
    Tensor& gx = tp.grad_buffer(xv);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < ch; ++c) gx.at(n, len - 1, c) += gy.at(n, c);
  });
}

}  // namespace oct1d::ops
