#include "mtlsed/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "mtlsed/errors.hpp"

namespace mtlsed::nn {
namespace {

struct ConvGeom {
  std::size_t cin, cout, freq, time, kf, kt;
  std::size_t kernel_size() const { return cout * cin * kf * kt; }
};

// y[o,f,:] = bias(f)[o] + sum_{c,df,dt} kernel(f)[o,c,df,dt] * x[c, f+df-kf/2, :+dt-kt/2]
template <typename T, typename KernelAt, typename BiasAt>
void conv_forward(const ConvGeom& g, const T* x, KernelAt kernel, BiasAt bias, T* y) {
  const auto pf = static_cast<std::ptrdiff_t>(g.kf / 2), pt = static_cast<std::ptrdiff_t>(g.kt / 2);
  const auto F = static_cast<std::ptrdiff_t>(g.freq), Tn = static_cast<std::ptrdiff_t>(g.time);
  for (std::ptrdiff_t f = 0; f < F; ++f) {
    const T* W = kernel(static_cast<std::size_t>(f));
    const T* B = bias(static_cast<std::size_t>(f));
    for (std::size_t o = 0; o < g.cout; ++o) {
      T* yrow = y + (o * g.freq + static_cast<std::size_t>(f)) * g.time;
      std::fill(yrow, yrow + g.time, B[o]);
      for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::ptrdiff_t df = 0; df < static_cast<std::ptrdiff_t>(g.kf); ++df) {
          const std::ptrdiff_t fi = f + df - pf;
          if (fi < 0 || fi >= F) continue;
          const T* xrow = x + (c * g.freq + static_cast<std::size_t>(fi)) * g.time;
          const T* wrow = W + ((o * g.cin + c) * g.kf + static_cast<std::size_t>(df)) * g.kt;
          for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(g.kt); ++dt) {
            const std::ptrdiff_t s = dt - pt;
            const T w = wrow[dt];
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -s), t1 = std::min(Tn, Tn - s);
            const T* xs = xrow + s;
            for (std::ptrdiff_t t = t0; t < t1; ++t) yrow[t] += w * xs[t];
          }
        }
      }
    }
  }
}

// For each output frequency f computes the kernel gradient G_f (as if the
// kernel at f were a free variable) and the bias gradient gb_f, hands them to
// `sink(f, G_f, gb_f)`, and accumulates dx through kernel(f) when dx != nullptr.
template <typename T, typename KernelAt, typename Sink>
void conv_backward(const ConvGeom& g, const T* x, const T* gy, KernelAt kernel, T* dx, bool want_kernel_grad,
                   Sink sink) {
  const auto pf = static_cast<std::ptrdiff_t>(g.kf / 2), pt = static_cast<std::ptrdiff_t>(g.kt / 2);
  const auto F = static_cast<std::ptrdiff_t>(g.freq), Tn = static_cast<std::ptrdiff_t>(g.time);
  std::vector<T> G(want_kernel_grad ? g.kernel_size() : 0);
  std::vector<T> gb(g.cout);
  for (std::ptrdiff_t f = 0; f < F; ++f) {
    const T* W = kernel(static_cast<std::size_t>(f));
    std::fill(G.begin(), G.end(), T{});
    for (std::size_t o = 0; o < g.cout; ++o) {
      const T* gyrow = gy + (o * g.freq + static_cast<std::size_t>(f)) * g.time;
      T sb{};
      for (std::size_t t = 0; t < g.time; ++t) sb += gyrow[t];
      gb[o] = sb;
      for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::ptrdiff_t df = 0; df < static_cast<std::ptrdiff_t>(g.kf); ++df) {
          const std::ptrdiff_t fi = f + df - pf;
          if (fi < 0 || fi >= F) continue;
          const std::size_t row = (c * g.freq + static_cast<std::size_t>(fi)) * g.time;
          const std::size_t widx = ((o * g.cin + c) * g.kf + static_cast<std::size_t>(df)) * g.kt;
          for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(g.kt); ++dt) {
            const std::ptrdiff_t s = dt - pt;
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -s), t1 = std::min(Tn, Tn - s);
            if (dx) {
              const T w = W[widx + static_cast<std::size_t>(dt)];
              T* dxs = dx + row + s;
              for (std::ptrdiff_t t = t0; t < t1; ++t) dxs[t] += w * gyrow[t];
            }
            if (want_kernel_grad) {
              const T* xs = x + row + s;
              T acc{};
              for (std::ptrdiff_t t = t0; t < t1; ++t) acc += gyrow[t] * xs[t];
              G[widx + static_cast<std::size_t>(dt)] = acc;
            }
          }
        }
      }
    }
    sink(static_cast<std::size_t>(f), G.data(), gb.data());
  }
}

void check(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ValidationError(std::string(op) + ": " + what);
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b) {
  const auto& X = tape.value(x);
  const auto& Wt = tape.value(w);
  const auto& Bt = tape.value(b);
  check(X.rank() == 3 && Wt.rank() == 4 && Wt.dim(1) == X.dim(0) && Bt.size() == Wt.dim(0), "conv2d",
        "shape mismatch x" + shape_string(X.shape) + " w" + shape_string(Wt.shape));
  check(Wt.dim(2) % 2 == 1 && Wt.dim(3) % 2 == 1, "conv2d", "kernel sizes must be odd");
  const ConvGeom g{X.dim(0), Wt.dim(0), X.dim(1), X.dim(2), Wt.dim(2), Wt.dim(3)};
  Tensor<T> y({g.cout, g.freq, g.time});
  const T* wp = Wt.ptr();
  const T* bp = Bt.ptr();
  conv_forward(g, X.ptr(), [wp](std::size_t) { return wp; }, [bp](std::size_t) { return bp; }, y.ptr());
  return tape.record(std::move(y), {x, w, b}, [x, w, b, g](Tape<T>& tp, Var self) {
    const T* gy = tp.grad(self);
    T* dx = tp.requires_grad(x) ? tp.grad(x) : nullptr;
    const bool want_w = tp.requires_grad(w);
    T* dw = want_w ? tp.grad(w) : nullptr;
    T* db = tp.requires_grad(b) ? tp.grad(b) : nullptr;
    const T* wp = tp.value(w).ptr();
    conv_backward(g, tp.value(x).ptr(), gy, [wp](std::size_t) { return wp; }, dx, want_w,
                  [&](std::size_t, const T* G, const T* gb) {
                    if (dw)
                      for (std::size_t i = 0; i < g.kernel_size(); ++i) dw[i] += G[i];
                    if (db)
                      for (std::size_t o = 0; o < g.cout; ++o) db[o] += gb[o];
                  });
  });
}

template <typename T>
Tensor<T> fdy_attention(const Tensor<T>& x, const Tensor<T>& attn_w, const Tensor<T>& attn_b, T temperature) {
  const std::size_t cin = x.dim(0), F = x.dim(1), Tn = x.dim(2), K = attn_w.dim(0);
  check(attn_w.dim(1) == cin && attn_b.size() == K, "fdy_attention", "attention parameter shape mismatch");
  check(temperature > T{0}, "fdy_attention", "temperature must be positive");
  Tensor<T> a({K, F});
  std::vector<T> pooled(cin * F);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t f = 0; f < F; ++f) {
      const T* row = x.ptr() + (c * F + f) * Tn;
      T s{};
      for (std::size_t t = 0; t < Tn; ++t) s += row[t];
      pooled[c * F + f] = s / static_cast<T>(Tn);
    }
  for (std::size_t f = 0; f < F; ++f) {
    T zmax = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      T z = attn_b.data[k];
      for (std::size_t c = 0; c < cin; ++c) z += attn_w.data[k * cin + c] * pooled[c * F + f];
      z /= temperature;
      a.data[k * F + f] = z;
      zmax = std::max(zmax, z);
    }
    T sum{};
    for (std::size_t k = 0; k < K; ++k) sum += a.data[k * F + f] = std::exp(a.data[k * F + f] - zmax);
    for (std::size_t k = 0; k < K; ++k) a.data[k * F + f] /= sum;
  }
  return a;
}

template <typename T>
Var fdy_conv(Tape<T>& tape, Var x, const FdyVars& p, T temperature, bool uniform_attention) {
  const auto& X = tape.value(x);
  const auto& Wb = tape.value(p.basis);
  const auto& Bb = tape.value(p.basis_bias);
  check(X.rank() == 3 && Wb.rank() == 5 && Wb.dim(2) == X.dim(0), "fdy_conv",
        "shape mismatch x" + shape_string(X.shape) + " basis" + shape_string(Wb.shape));
  check(Wb.dim(0) >= 1, "fdy_conv", "basis count K must be >= 1");
  check(Wb.dim(3) % 2 == 1 && Wb.dim(4) % 2 == 1, "fdy_conv", "kernel sizes must be odd");
  const std::size_t K = Wb.dim(0);
  check(Bb.rank() == 2 && Bb.dim(0) == K && Bb.dim(1) == Wb.dim(1), "fdy_conv", "basis bias shape mismatch");
  const ConvGeom g{X.dim(0), Wb.dim(1), X.dim(1), X.dim(2), Wb.dim(3), Wb.dim(4)};
  const std::size_t F = g.freq, ks = g.kernel_size();

  auto attn = std::make_shared<Tensor<T>>(
      uniform_attention ? Tensor<T>({K, F}, T{1} / static_cast<T>(K))
                        : fdy_attention(X, tape.value(p.attn_w), tape.value(p.attn_b), temperature));
  // Effective per-frequency kernels and biases.
  auto weff = std::make_shared<std::vector<T>>(F * ks, T{});
  std::vector<T> beff(F * g.cout, T{});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t k = 0; k < K; ++k) {
      const T a = attn->data[k * F + f];
      const T* Wk = Wb.ptr() + k * ks;
      T* dst = weff->data() + f * ks;
      for (std::size_t i = 0; i < ks; ++i) dst[i] += a * Wk[i];
      for (std::size_t o = 0; o < g.cout; ++o) beff[f * g.cout + o] += a * Bb.data[k * g.cout + o];
    }
  Tensor<T> y({g.cout, g.freq, g.time});
  const T* wp = weff->data();
  const T* bp = beff.data();
  conv_forward(
      g, X.ptr(), [wp, ks](std::size_t f) { return wp + f * ks; },
      [bp, &g](std::size_t f) { return bp + f * g.cout; }, y.ptr());

  return tape.record(
      std::move(y), {x, p.basis, p.basis_bias, p.attn_w, p.attn_b},
      [x, p, g, K, attn, weff, temperature, uniform_attention](Tape<T>& tp, Var self) {
        const std::size_t F = g.freq, ks = g.kernel_size(), cin = g.cin, Tn = g.time;
        const T* gy = tp.grad(self);
        const auto& X = tp.value(x);
        const auto& Wb = tp.value(p.basis);
        const auto& Bb = tp.value(p.basis_bias);
        T* dx = tp.requires_grad(x) ? tp.grad(x) : nullptr;
        T* dW = tp.requires_grad(p.basis) ? tp.grad(p.basis) : nullptr;
        T* dB = tp.requires_grad(p.basis_bias) ? tp.grad(p.basis_bias) : nullptr;
        const bool want_attn = !uniform_attention && (tp.requires_grad(p.attn_w) || tp.requires_grad(p.attn_b) || dx);
        std::vector<T> da(want_attn ? K * F : 0, T{});
        const T* wp = weff->data();
        conv_backward(g, X.ptr(), gy, [wp, ks](std::size_t f) { return wp + f * ks; }, dx,
                      dW != nullptr || want_attn, [&](std::size_t f, const T* G, const T* gb) {
                        for (std::size_t k = 0; k < K; ++k) {
                          const T a = attn->data[k * F + f];
                          const T* Wk = Wb.ptr() + k * ks;
                          const T* bk = Bb.ptr() + k * g.cout;
                          T dot{};
                          if (dW) {
                            T* dWk = dW + k * ks;
                            for (std::size_t i = 0; i < ks; ++i) dWk[i] += a * G[i];
                          }
                          if (want_attn)
                            for (std::size_t i = 0; i < ks; ++i) dot += Wk[i] * G[i];
                          for (std::size_t o = 0; o < g.cout; ++o) {
                            if (dB) dB[k * g.cout + o] += a * gb[o];
                            dot += bk[o] * gb[o];
                          }
                          if (want_attn) da[k * F + f] = dot;
                        }
                      });
        if (!want_attn) return;
        // Softmax backward (with temperature), then the linear map and time-average.
        const auto& Aw = tp.value(p.attn_w);
        T* dAw = tp.requires_grad(p.attn_w) ? tp.grad(p.attn_w) : nullptr;
        T* dAb = tp.requires_grad(p.attn_b) ? tp.grad(p.attn_b) : nullptr;
        std::vector<T> pooled(cin * F);
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t f = 0; f < F; ++f) {
            const T* row = X.ptr() + (c * F + f) * Tn;
            T s{};
            for (std::size_t t = 0; t < Tn; ++t) s += row[t];
            pooled[c * F + f] = s / static_cast<T>(Tn);
          }
        for (std::size_t f = 0; f < F; ++f) {
          T inner{};
          for (std::size_t k = 0; k < K; ++k) inner += attn->data[k * F + f] * da[k * F + f];
          for (std::size_t k = 0; k < K; ++k) {
            const T dz = attn->data[k * F + f] * (da[k * F + f] - inner) / temperature;
            if (dAb) dAb[k] += dz;
            for (std::size_t c = 0; c < cin; ++c) {
              if (dAw) dAw[k * cin + c] += dz * pooled[c * F + f];
              if (dx) {
                const T dp = Aw.data[k * cin + c] * dz / static_cast<T>(Tn);
                T* row = dx + (c * F + f) * Tn;
                for (std::size_t t = 0; t < Tn; ++t) row[t] += dp;
              }
            }
          }
        }
      });
}

template <typename T>
Var avg_pool(Tape<T>& tape, Var x, std::size_t pool_freq, std::size_t pool_time) {
  const auto& X = tape.value(x);
  check(X.rank() == 3 && pool_freq >= 1 && pool_time >= 1, "avg_pool", "expects [C,F,T] and pool sizes >= 1");
  const std::size_t C = X.dim(0), F = X.dim(1), Tn = X.dim(2);
  const std::size_t Fo = (F + pool_freq - 1) / pool_freq, To = (Tn + pool_time - 1) / pool_time;
  Tensor<T> y({C, Fo, To});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t fo = 0; fo < Fo; ++fo) {
      const std::size_t f0 = fo * pool_freq, f1 = std::min(F, f0 + pool_freq);
      for (std::size_t to = 0; to < To; ++to) {
        const std::size_t t0 = to * pool_time, t1 = std::min(Tn, t0 + pool_time);
        T s{};
        for (std::size_t f = f0; f < f1; ++f)
          for (std::size_t t = t0; t < t1; ++t) s += X.data[(c * F + f) * Tn + t];
        y.data[(c * Fo + fo) * To + to] = s / static_cast<T>((f1 - f0) * (t1 - t0));
      }
    }
  return tape.record(std::move(y), {x}, [x, C, F, Tn, Fo, To, pool_freq, pool_time](Tape<T>& tp, Var self) {
    const T* gy = tp.grad(self);
    T* dx = tp.grad(x);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t fo = 0; fo < Fo; ++fo) {
        const std::size_t f0 = fo * pool_freq, f1 = std::min(F, f0 + pool_freq);
        for (std::size_t to = 0; to < To; ++to) {
          const std::size_t t0 = to * pool_time, t1 = std::min(Tn, t0 + pool_time);
          const T gv = gy[(c * Fo + fo) * To + to] / static_cast<T>((f1 - f0) * (t1 - t0));
          for (std::size_t f = f0; f < f1; ++f)
            for (std::size_t t = t0; t < t1; ++t) dx[(c * F + f) * Tn + t] += gv;
        }
      }
  });
}

template <typename T>
Var silu(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  Tensor<T> y(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) y.data[i] = X.data[i] * sigmoid_scalar(X.data[i]);
  return tape.record(std::move(y), {x}, [x](Tape<T>& tp, Var self) {
    const auto& X = tp.value(x);
    const T* gy = tp.grad(self);
    T* dx = tp.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const T s = sigmoid_scalar(X.data[i]);
      dx[i] += gy[i] * (s + X.data[i] * s * (T{1} - s));
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  Tensor<T> y(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) y.data[i] = sigmoid_scalar(X.data[i]);
  return tape.record(std::move(y), {x}, [x](Tape<T>& tp, Var self) {
    const auto& Y = tp.value(self);
    const T* gy = tp.grad(self);
    T* dx = tp.grad(x);
    for (std::size_t i = 0; i < Y.size(); ++i) dx[i] += gy[i] * Y.data[i] * (T{1} - Y.data[i]);
  });
}

template <typename T>
Var to_sequence(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  check(X.rank() == 3, "to_sequence", "expects [C,F,T]");
  const std::size_t C = X.dim(0), F = X.dim(1), Tn = X.dim(2), D = C * F;
  Tensor<T> y({Tn, D});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t t = 0; t < Tn; ++t) y.data[t * D + c * F + f] = X.data[(c * F + f) * Tn + t];
  return tape.record(std::move(y), {x}, [x, C, F, Tn, D](Tape<T>& tp, Var self) {
    const T* gy = tp.grad(self);
    T* dx = tp.grad(x);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < Tn; ++t) dx[(c * F + f) * Tn + t] += gy[t * D + c * F + f];
  });
}

namespace {
template <typename T>
struct GruTrace {
  std::vector<T> r, z, n, hn, h;  // per step (T x H); h holds h_t, hn = W_hn h_{t-1} + b_hn
};
}  // namespace

template <typename T>
Var gru(Tape<T>& tape, Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh, bool reverse) {
  const auto& X = tape.value(x);
  const auto& Wi = tape.value(w_ih);
  const auto& Wh = tape.value(w_hh);
  const std::size_t Tn = X.dim(0), D = X.dim(1), H = Wh.dim(1);
  check(X.rank() == 2 && Wi.dim(0) == 3 * H && Wi.dim(1) == D && Wh.dim(0) == 3 * H, "gru",
        "shape mismatch x" + shape_string(X.shape) + " w_ih" + shape_string(Wi.shape));
  const T* bi = tape.value(b_ih).ptr();
  const T* bh = tape.value(b_hh).ptr();
  auto tr = std::make_shared<GruTrace<T>>();
  tr->r.resize(Tn * H);
  tr->z.resize(Tn * H);
  tr->n.resize(Tn * H);
  tr->hn.resize(Tn * H);
  tr->h.resize(Tn * H);
  std::vector<T> gi(3 * H), gh(3 * H), hprev(H, T{});
  for (std::size_t s = 0; s < Tn; ++s) {
    const std::size_t t = reverse ? Tn - 1 - s : s;
    const T* xt = X.ptr() + t * D;
    for (std::size_t j = 0; j < 3 * H; ++j) {
      T a = bi[j];
      const T* wr = Wi.ptr() + j * D;
      for (std::size_t d = 0; d < D; ++d) a += wr[d] * xt[d];
      gi[j] = a;
      T b = bh[j];
      const T* hr = Wh.ptr() + j * H;
      for (std::size_t k = 0; k < H; ++k) b += hr[k] * hprev[k];
      gh[j] = b;
    }
    for (std::size_t k = 0; k < H; ++k) {
      const T r = sigmoid_scalar(gi[k] + gh[k]);
      const T z = sigmoid_scalar(gi[H + k] + gh[H + k]);
      const T n = std::tanh(gi[2 * H + k] + r * gh[2 * H + k]);
      const T h = (T{1} - z) * n + z * hprev[k];
      tr->r[t * H + k] = r;
      tr->z[t * H + k] = z;
      tr->n[t * H + k] = n;
      tr->hn[t * H + k] = gh[2 * H + k];
      tr->h[t * H + k] = h;
    }
    std::copy(tr->h.begin() + static_cast<std::ptrdiff_t>(t * H), tr->h.begin() + static_cast<std::ptrdiff_t>((t + 1) * H),
              hprev.begin());
  }
  Tensor<T> y({Tn, H}, tr->h);
  return tape.record(std::move(y), {x, w_ih, w_hh, b_ih, b_hh},
                     [x, w_ih, w_hh, b_ih, b_hh, reverse, tr, Tn, D, H](Tape<T>& tp, Var self) {
                       const T* gy = tp.grad(self);
                       const auto& X = tp.value(x);
                       const auto& Wi = tp.value(w_ih);
                       const auto& Wh = tp.value(w_hh);
                       T* dx = tp.requires_grad(x) ? tp.grad(x) : nullptr;
                       T* dWi = tp.requires_grad(w_ih) ? tp.grad(w_ih) : nullptr;
                       T* dWh = tp.requires_grad(w_hh) ? tp.grad(w_hh) : nullptr;
                       T* dbi = tp.requires_grad(b_ih) ? tp.grad(b_ih) : nullptr;
                       T* dbh = tp.requires_grad(b_hh) ? tp.grad(b_hh) : nullptr;
                       std::vector<T> dh_next(H, T{}), dgi(3 * H), dgh(3 * H), zero(H, T{});
                       for (std::size_t s = Tn; s-- > 0;) {
                         const std::size_t t = reverse ? Tn - 1 - s : s;
                         const T* hprev = s == 0 ? zero.data() : tr->h.data() + (reverse ? t + 1 : t - 1) * H;
                         for (std::size_t k = 0; k < H; ++k) {
                           const std::size_t i = t * H + k;
                           const T r = tr->r[i], z = tr->z[i], n = tr->n[i];
                           const T dh = gy[i] + dh_next[k];
                           const T dn_pre = dh * (T{1} - z) * (T{1} - n * n);
                           const T dz_pre = dh * (hprev[k] - n) * z * (T{1} - z);
                           const T dr_pre = dn_pre * tr->hn[i] * r * (T{1} - r);
                           dgi[k] = dr_pre;
                           dgi[H + k] = dz_pre;
                           dgi[2 * H + k] = dn_pre;
                           dgh[k] = dr_pre;
                           dgh[H + k] = dz_pre;
                           dgh[2 * H + k] = dn_pre * r;
                           dh_next[k] = dh * z;
                         }
                         for (std::size_t j = 0; j < 3 * H; ++j) {
                           const T* hr = Wh.ptr() + j * H;
                           for (std::size_t k = 0; k < H; ++k) dh_next[k] += hr[k] * dgh[j];
                           if (dWh) {
                             T* dr = dWh + j * H;
                             for (std::size_t k = 0; k < H; ++k) dr[k] += dgh[j] * hprev[k];
                           }
                           if (dbh) dbh[j] += dgh[j];
                           if (dbi) dbi[j] += dgi[j];
                           const T* xt = X.ptr() + t * D;
                           if (dWi) {
                             T* dr = dWi + j * D;
                             for (std::size_t d = 0; d < D; ++d) dr[d] += dgi[j] * xt[d];
                           }
                           if (dx) {
                             const T* wr = Wi.ptr() + j * D;
                             T* dxt = dx + t * D;
                             for (std::size_t d = 0; d < D; ++d) dxt[d] += wr[d] * dgi[j];
                           }
                         }
                       }
                     });
}

template <typename T>
Var concat_features(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  check(A.rank() == 2 && B.rank() == 2 && A.dim(0) == B.dim(0), "concat_features", "row counts differ");
  const std::size_t N = A.dim(0), da = A.dim(1), db = B.dim(1);
  Tensor<T> y({N, da + db});
  for (std::size_t i = 0; i < N; ++i) {
    std::copy_n(A.ptr() + i * da, da, y.ptr() + i * (da + db));
    std::copy_n(B.ptr() + i * db, db, y.ptr() + i * (da + db) + da);
  }
  return tape.record(std::move(y), {a, b}, [a, b, N, da, db](Tape<T>& tp, Var self) {
    const T* gy = tp.grad(self);
    if (tp.requires_grad(a)) {
      T* ga = tp.grad(a);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += gy[i * (da + db) + j];
    }
    if (tp.requires_grad(b)) {
      T* gb = tp.grad(b);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += gy[i * (da + db) + da + j];
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const auto& X = tape.value(x);
  const auto& W = tape.value(w);
  const auto& B = tape.value(b);
  check(X.rank() == 2 && W.rank() == 2 && W.dim(1) == X.dim(1) && B.size() == W.dim(0), "linear",
        "shape mismatch x" + shape_string(X.shape) + " w" + shape_string(W.shape));
  const std::size_t N = X.dim(0), D = X.dim(1), O = W.dim(0);
  Tensor<T> y({N, O});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t o = 0; o < O; ++o) {
      T acc = B.data[o];
      const T* xr = X.ptr() + i * D;
      const T* wr = W.ptr() + o * D;
      for (std::size_t d = 0; d < D; ++d) acc += wr[d] * xr[d];
      y.data[i * O + o] = acc;
    }
  return tape.record(std::move(y), {x, w, b}, [x, w, b, N, D, O](Tape<T>& tp, Var self) {
    const T* gy = tp.grad(self);
    const auto& X = tp.value(x);
    const auto& W = tp.value(w);
    T* dx = tp.requires_grad(x) ? tp.grad(x) : nullptr;
    T* dw = tp.requires_grad(w) ? tp.grad(w) : nullptr;
    T* db = tp.requires_grad(b) ? tp.grad(b) : nullptr;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t o = 0; o < O; ++o) {
        const T g = gy[i * O + o];
        if (db) db[o] += g;
        if (dw) {
          T* dr = dw + o * D;
          const T* xr = X.ptr() + i * D;
          for (std::size_t d = 0; d < D; ++d) dr[d] += g * xr[d];
        }
        if (dx) {
          T* dr = dx + i * D;
          const T* wr = W.ptr() + o * D;
          for (std::size_t d = 0; d < D; ++d) dr[d] += g * wr[d];
        }
      }
  });
}

template <typename T>
Var linear_softmax_pool(Tape<T>& tape, Var p) {
  const auto& P = tape.value(p);
  check(P.rank() == 2, "linear_softmax_pool", "expects [T,C]");
  const std::size_t Tn = P.dim(0), C = P.dim(1);
  Tensor<T> y({C});
  for (std::size_t c = 0; c < C; ++c) {
    T s1{}, s2{};
    for (std::size_t t = 0; t < Tn; ++t) {
      const T v = P.data[t * C + c];
      s1 += v;
      s2 += v * v;
    }
    y.data[c] = s2 / s1;
  }
  return tape.record(std::move(y), {p}, [p, Tn, C](Tape<T>& tp, Var self) {
    const auto& P = tp.value(p);
    const T* gy = tp.grad(self);
    T* dp = tp.grad(p);
    for (std::size_t c = 0; c < C; ++c) {
      T s1{}, s2{};
      for (std::size_t t = 0; t < Tn; ++t) {
        const T v = P.data[t * C + c];
        s1 += v;
        s2 += v * v;
      }
      for (std::size_t t = 0; t < Tn; ++t)
        dp[t * C + c] += gy[c] * (T{2} * P.data[t * C + c] * s1 - s2) / (s1 * s1);
    }
  });
}

template <typename T>
Var bce_sum(Tape<T>& tape, Var p, const std::vector<T>& targets) {
  const auto& P = tape.value(p);
  check(P.size() == targets.size(), "bce_sum", "prediction/target size mismatch");
  const T lo = static_cast<T>(kBceClamp), hi = T{1} - static_cast<T>(kBceClamp);
  T loss{};
  for (std::size_t i = 0; i < P.size(); ++i) {
    const T q = std::clamp(P.data[i], lo, hi);
    loss -= targets[i] * std::log(q) + (T{1} - targets[i]) * std::log(T{1} - q);
  }
  return tape.record(Tensor<T>({1}, loss), {p}, [p, targets, lo, hi](Tape<T>& tp, Var self) {
    const auto& P = tp.value(p);
    const T g = tp.grad(self)[0];
    T* dp = tp.grad(p);
    for (std::size_t i = 0; i < P.size(); ++i) {
      const T q = P.data[i];
      if (q <= lo || q >= hi) continue;
      dp[i] += g * (q - targets[i]) / (q * (T{1} - q));
    }
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, std::span<const Var> terms, std::span<const T> weights) {
  check(terms.size() == weights.size(), "weighted_sum", "term/weight count mismatch");
  T acc{};
  for (std::size_t i = 0; i < terms.size(); ++i) acc += weights[i] * tape.scalar(terms[i]);
  std::vector<Var> ins(terms.begin(), terms.end());
  std::vector<T> w(weights.begin(), weights.end());
  return tape.record(Tensor<T>({1}, acc), ins, [ins, w](Tape<T>& tp, Var self) {
    const T g = tp.grad(self)[0];
    for (std::size_t i = 0; i < ins.size(); ++i)
      if (tp.requires_grad(ins[i])) tp.grad(ins[i])[0] += w[i] * g;
  });
}

template <typename T>
Var squared_error(Tape<T>& tape, Var x, const std::vector<T>& targets) {
  const auto& X = tape.value(x);
  check(X.size() == targets.size(), "squared_error", "size mismatch");
  T acc{};
  for (std::size_t i = 0; i < X.size(); ++i) acc += T{0.5} * (X.data[i] - targets[i]) * (X.data[i] - targets[i]);
  return tape.record(Tensor<T>({1}, acc), {x}, [x, targets](Tape<T>& tp, Var self) {
    const auto& X = tp.value(x);
    const T g = tp.grad(self)[0];
    T* dx = tp.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) dx[i] += g * (X.data[i] - targets[i]);
  });
}

#define MTLSED_INSTANTIATE_OPS(T)                                                                      \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var);                                                     \
  template Tensor<T> fdy_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Var fdy_conv<T>(Tape<T>&, Var, const FdyVars&, T, bool);                                    \
  template Var avg_pool<T>(Tape<T>&, Var, std::size_t, std::size_t);                                   \
  template Var silu<T>(Tape<T>&, Var);                                                                 \
  template Var sigmoid<T>(Tape<T>&, Var);                                                              \
  template Var to_sequence<T>(Tape<T>&, Var);                                                          \
  template Var gru<T>(Tape<T>&, Var, Var, Var, Var, Var, bool);                                        \
  template Var concat_features<T>(Tape<T>&, Var, Var);                                                 \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                     \
  template Var linear_softmax_pool<T>(Tape<T>&, Var);                                                  \
  template Var bce_sum<T>(Tape<T>&, Var, const std::vector<T>&);                                       \
  template Var weighted_sum<T>(Tape<T>&, std::span<const Var>, std::span<const T>);                    \
  template Var squared_error<T>(Tape<T>&, Var, const std::vector<T>&);

MTLSED_INSTANTIATE_OPS(float)
MTLSED_INSTANTIATE_OPS(double)

}  // namespace mtlsed::nn
