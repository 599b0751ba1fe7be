#include "swpc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swpc/error.hpp"

namespace swpc::ad {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// 1-D "same" correlation kernels shared by the temporal and depthwise
// convolutions: out[t] = sum_k w[k] x[t + k - left], zero outside [0, T).
// Each works on a zero-padded copy so the inner loops are branch-free axpys.
const double* padded(const double* x, std::size_t T, std::size_t K, std::size_t left, std::vector<double>& buf) {
  buf.assign(T + K - 1, 0.0);
  std::copy(x, x + T, buf.begin() + static_cast<std::ptrdiff_t>(left));
  return buf.data();
}

constexpr std::size_t kBlock = 8;

// Outputs are produced kBlock at a time so the partial sums stay in registers.
void correlate_add(const double* x, const double* w, std::size_t T, std::size_t K, std::size_t left, double* out,
                   std::vector<double>& buf) {
  const double* xp = padded(x, T, K, left, buf);
  std::size_t t = 0;
  for (; t + kBlock <= T; t += kBlock) {
    double acc[kBlock] = {};
    for (std::size_t k = 0; k < K; ++k) {
      const double wk = w[k];
      const double* xs = xp + t + k;
      for (std::size_t j = 0; j < kBlock; ++j) acc[j] += wk * xs[j];
    }
    for (std::size_t j = 0; j < kBlock; ++j) out[t + j] += acc[j];
  }
  for (; t < T; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += w[k] * xp[t + k];
    out[t] += acc;
  }
}

// dw[k] += sum_t g[t] x[t + k - left]
void kernel_grad_add(const double* g, const double* x, std::size_t T, std::size_t K, std::size_t left, double* dw,
                     std::vector<double>& buf) {
  const double* xp = padded(x, T, K, left, buf);
  std::size_t k = 0;
  for (; k + kBlock <= K; k += kBlock) {
    double acc[kBlock] = {};
    for (std::size_t t = 0; t < T; ++t) {
      const double gt = g[t];
      const double* xs = xp + t + k;
      for (std::size_t j = 0; j < kBlock; ++j) acc[j] += gt * xs[j];
    }
    for (std::size_t j = 0; j < kBlock; ++j) dw[k + j] += acc[j];
  }
  for (; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += g[t] * xp[t + k];
    dw[k] += acc;
  }
}

// dx[t + k - left] += w[k] g[t], dropping indices outside [0, T)
void input_grad_add(const double* g, const double* w, std::size_t T, std::size_t K, std::size_t left, double* dx,
                    std::vector<double>& buf) {
  buf.assign(T + K - 1, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double wk = w[k];
    double* ds = buf.data() + k;
    for (std::size_t t = 0; t < T; ++t) ds[t] += wk * g[t];
  }
  for (std::size_t t = 0; t < T; ++t) dx[t] += buf[t + left];
}

}  // namespace

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [this](Var p) { return nodes_.at(p.id()).requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var(nodes_.size() - 1);
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) throw InvalidArgument("variable not on this tape");
  return nodes_[v.id()];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id());
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

Var conv2d_temporal(Tape& tape, Var x, Var w) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  require_rank(xv, 4, "conv2d_temporal");
  require_rank(wv, 3, "conv2d_temporal");
  const std::size_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), T = xv.dim(3);
  const std::size_t Cout = wv.dim(0), K = wv.dim(2);
  if (wv.dim(1) != Cin) throw ShapeError("conv2d_temporal: input channels do not match kernel");
  const std::size_t left = (K - 1) / 2;

  Tensor out({B, Cout, H, T}, 0.0);
  std::vector<double> buf;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t ci = 0; ci < Cin; ++ci)
        for (std::size_t h = 0; h < H; ++h) {
          const double* xr = xv.data().data() + ((b * Cin + ci) * H + h) * T;
          double* orow = out.data().data() + ((b * Cout + co) * H + h) * T;
          const double* wr = wv.data().data() + (co * Cin + ci) * K;
          correlate_add(xr, wr, T, K, left, orow, buf);
        }

  return tape.record(std::move(out), {x, w}, [x, w, B, Cin, Cout, H, T, K, left](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const bool gx = tp.requires_grad(x), gw = tp.requires_grad(w);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    double* dx = gx ? tp.grad_buffer(x).data().data() : nullptr;
    double* dw = gw ? tp.grad_buffer(w).data().data() : nullptr;
    std::vector<double> buf;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t co = 0; co < Cout; ++co)
        for (std::size_t ci = 0; ci < Cin; ++ci)
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t xoff = ((b * Cin + ci) * H + h) * T;
            const double* gr = g.data().data() + ((b * Cout + co) * H + h) * T;
            const double* wr = wv.data().data() + (co * Cin + ci) * K;
            if (dw) kernel_grad_add(gr, xv.data().data() + xoff, T, K, left, dw + (co * Cin + ci) * K, buf);
            if (dx) input_grad_add(gr, wr, T, K, left, dx + xoff, buf);
          }
  });
}

Var conv2d_depthwise(Tape& tape, Var x, Var w, std::size_t depth) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  require_rank(xv, 4, "conv2d_depthwise");
  require_rank(wv, 3, "conv2d_depthwise");
  const std::size_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), T = xv.dim(3);
  const std::size_t Cout = wv.dim(0), K = wv.dim(2);
  if (depth == 0 || Cout != C * depth) throw ShapeError("conv2d_depthwise: kernel count must be channels * depth");
  if (wv.dim(1) != H) throw ShapeError("conv2d_depthwise: kernel height must equal input height");
  const std::size_t left = (K - 1) / 2;

  Tensor out({B, Cout, 1, T}, 0.0);
  std::vector<double> buf;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Cout; ++o) {
      const std::size_t c = o / depth;
      double* orow = out.data().data() + (b * Cout + o) * T;
      for (std::size_t h = 0; h < H; ++h) {
        const double* xr = xv.data().data() + ((b * C + c) * H + h) * T;
        correlate_add(xr, wv.data().data() + (o * H + h) * K, T, K, left, orow, buf);
      }
    }

  return tape.record(std::move(out), {x, w}, [x, w, B, C, H, T, Cout, K, depth, left](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    double* dx = tp.requires_grad(x) ? tp.grad_buffer(x).data().data() : nullptr;
    double* dw = tp.requires_grad(w) ? tp.grad_buffer(w).data().data() : nullptr;
    std::vector<double> buf;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < Cout; ++o) {
        const std::size_t c = o / depth;
        const double* gr = g.data().data() + (b * Cout + o) * T;
        for (std::size_t h = 0; h < H; ++h) {
          const std::size_t xoff = ((b * C + c) * H + h) * T;
          const std::size_t woff = (o * H + h) * K;
          if (dw) kernel_grad_add(gr, xv.data().data() + xoff, T, K, left, dw + woff, buf);
          if (dx) input_grad_add(gr, wv.data().data() + woff, T, K, left, dx + xoff, buf);
        }
      }
  });
}

Var conv2d_pointwise(Tape& tape, Var x, Var w) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  require_rank(xv, 4, "conv2d_pointwise");
  require_rank(wv, 2, "conv2d_pointwise");
  const std::size_t B = xv.dim(0), Cin = xv.dim(1), HT = xv.dim(2) * xv.dim(3);
  const std::size_t Cout = wv.dim(0);
  if (wv.dim(1) != Cin) throw ShapeError("conv2d_pointwise: input channels do not match kernel");

  Tensor out({B, Cout, xv.dim(2), xv.dim(3)}, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      double* orow = out.data().data() + (b * Cout + co) * HT;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double wk = wv[co * Cin + ci];
        const double* xr = xv.data().data() + (b * Cin + ci) * HT;
        for (std::size_t t = 0; t < HT; ++t) orow[t] += wk * xr[t];
      }
    }

  return tape.record(std::move(out), {x, w}, [x, w, B, Cin, Cout, HT](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    double* dx = tp.requires_grad(x) ? tp.grad_buffer(x).data().data() : nullptr;
    double* dw = tp.requires_grad(w) ? tp.grad_buffer(w).data().data() : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* gr = g.data().data() + (b * Cout + co) * HT;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const std::size_t xoff = (b * Cin + ci) * HT;
          if (dw) {
            double acc = 0.0;
            const double* xr = xv.data().data() + xoff;
            for (std::size_t t = 0; t < HT; ++t) acc += gr[t] * xr[t];
            dw[co * Cin + ci] += acc;
          }
          if (dx) {
            const double wk = wv[co * Cin + ci];
            double* dxr = dx + xoff;
            for (std::size_t t = 0; t < HT; ++t) dxr[t] += wk * gr[t];
          }
        }
      }
  });
}

Var batchnorm(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, BatchNormMode mode,
              double momentum, double eps) {
  const Tensor& xv = tape.value(x);
  require_rank(xv, 4, "batchnorm");
  const std::size_t B = xv.dim(0), C = xv.dim(1), HT = xv.dim(2) * xv.dim(3);
  if (tape.value(gamma).size() != C || tape.value(beta).size() != C) {
    throw ShapeError("batchnorm: affine parameters must have one entry per channel");
  }
  if (state.running_mean.size() != C || state.running_var.size() != C) {
    throw ShapeError("batchnorm: running statistics do not match channel count");
  }
  const bool use_batch = mode != BatchNormMode::eval;
  if (use_batch && B < 2) throw ShapeError("batchnorm: training mode needs a batch of at least 2");

  const std::size_t n = B * HT;
  std::vector<double> mean(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (use_batch) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* xr = xv.data().data() + (b * C + c) * HT;
        for (std::size_t t = 0; t < HT; ++t) s += xr[t];
      }
      const double m = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* xr = xv.data().data() + (b * C + c) * HT;
        for (std::size_t t = 0; t < HT; ++t) ss += (xr[t] - m) * (xr[t] - m);
      }
      const double var = ss / static_cast<double>(n);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      if (mode == BatchNormMode::train) {
        const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
        state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * m;
        state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
      }
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }

  const Tensor& gv = tape.value(gamma);
  const Tensor& bv = tape.value(beta);
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * HT;
      for (std::size_t t = 0; t < HT; ++t) {
        const double h = (xv[off + t] - mean[c]) * inv_std[c];
        xhat[off + t] = h;
        out[off + t] = gv[c] * h + bv[c];
      }
    }

  return tape.record(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, B, C, HT, n, use_batch, inv_std, xhat = std::move(xhat)](Tape& tp,
                                                                                              std::size_t self) {
                       const Tensor& g = tp.upstream(self);
                       const Tensor& gv = tp.value(gamma);
                       double* dgamma = tp.requires_grad(gamma) ? tp.grad_buffer(gamma).data().data() : nullptr;
                       double* dbeta = tp.requires_grad(beta) ? tp.grad_buffer(beta).data().data() : nullptr;
                       double* dx = tp.requires_grad(x) ? tp.grad_buffer(x).data().data() : nullptr;
                       for (std::size_t c = 0; c < C; ++c) {
                         double sum_g = 0.0, sum_gx = 0.0;
                         for (std::size_t b = 0; b < B; ++b) {
                           const std::size_t off = (b * C + c) * HT;
                           for (std::size_t t = 0; t < HT; ++t) {
                             sum_g += g[off + t];
                             sum_gx += g[off + t] * xhat[off + t];
                           }
                         }
                         if (dgamma) dgamma[c] += sum_gx;
                         if (dbeta) dbeta[c] += sum_g;
                         if (!dx) continue;
                         const double scale = gv[c] * inv_std[c];
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t b = 0; b < B; ++b) {
                           const std::size_t off = (b * C + c) * HT;
                           for (std::size_t t = 0; t < HT; ++t) {
                             if (use_batch) {
                               dx[off + t] += scale * (g[off + t] - inv_n * sum_g - xhat[off + t] * inv_n * sum_gx);
                             } else {
                               dx[off + t] += scale * g[off + t];
                             }
                           }
                         }
                       }
                     });
}

Var elu(Tape& tape, Var x, double alpha) {
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : alpha * std::expm1(xv[i]);
  return tape.record(std::move(out), {x}, [x, alpha](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(x);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : alpha * std::exp(xv[i]));
  });
}

Var avgpool_time(Tape& tape, Var x, std::size_t factor) {
  const Tensor& xv = tape.value(x);
  require_rank(xv, 4, "avgpool_time");
  if (factor == 0) throw InvalidArgument("avgpool_time: factor must be positive");
  const std::size_t rows = xv.dim(0) * xv.dim(1) * xv.dim(2), T = xv.dim(3), To = T / factor;
  if (To == 0) throw ShapeError("avgpool_time: input shorter than pooling factor");
  Tensor out({xv.dim(0), xv.dim(1), xv.dim(2), To});
  const double inv = 1.0 / static_cast<double>(factor);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < To; ++o) {
      double s = 0.0;
      for (std::size_t k = 0; k < factor; ++k) s += xv[r * T + o * factor + k];
      out[r * To + o] = s * inv;
    }
  return tape.record(std::move(out), {x}, [x, rows, T, To, factor, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < To; ++o)
        for (std::size_t k = 0; k < factor; ++k) dx[r * T + o * factor + k] += g[r * To + o] * inv;
  });
}

Var dropout(Tape& tape, Var x, double rate, std::mt19937_64* rng) {
  if (rate < 0.0 || rate >= 1.0) throw InvalidArgument("dropout: rate must be in [0, 1)");
  if (rng == nullptr || rate == 0.0) return x;
  const Tensor& xv = tape.value(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(xv.size());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = keep(*rng) ? keep_scale : 0.0;
    out[i] = xv[i] * mask[i];
  }
  return tape.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var flatten(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t B = xv.dim(0);
  return tape.record(xv.reshaped({B, xv.size() / std::max<std::size_t>(B, 1)}), {x},
                     [x](Tape& tp, std::size_t self) {
                       const Tensor& g = tp.upstream(self);
                       Tensor& dx = tp.grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                     });
}

Var dense(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  require_rank(xv, 2, "dense");
  require_rank(wv, 2, "dense");
  const std::size_t B = xv.dim(0), N = xv.dim(1), O = wv.dim(0);
  if (wv.dim(1) != N || bv.size() != O) {
    throw ShapeError("dense: input " + shape_string(xv.shape()) + " incompatible with weight " +
                     shape_string(wv.shape()));
  }
  Tensor out({B, O});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      double s = bv[o];
      for (std::size_t i = 0; i < N; ++i) s += xv[b * N + i] * wv[o * N + i];
      out[b * O + o] = s;
    }
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, B, N, O](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(weight);
    double* dx = tp.requires_grad(x) ? tp.grad_buffer(x).data().data() : nullptr;
    double* dw = tp.requires_grad(weight) ? tp.grad_buffer(weight).data().data() : nullptr;
    double* db = tp.requires_grad(bias) ? tp.grad_buffer(bias).data().data() : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) {
        const double go = g[b * O + o];
        if (db) db[o] += go;
        for (std::size_t i = 0; i < N; ++i) {
          if (dw) dw[o * N + i] += go * xv[b * N + i];
          if (dx) dx[b * N + i] += go * wv[o * N + i];
        }
      }
  });
}

std::vector<double> softmax_row(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    s += out[k];
  }
  for (double& v : out) v /= s;
  return out;
}

Var softmax(Tape& tape, Var logits) {
  const Tensor& lv = tape.value(logits);
  require_rank(lv, 2, "softmax");
  const std::size_t B = lv.dim(0), K = lv.dim(1);
  Tensor out({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = softmax_row(lv.data().subspan(b * K, K));
    std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * K));
  }
  return tape.record(std::move(out), {logits}, [logits, B, K](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& y = tp.output(self);
    Tensor& dx = tp.grad_buffer(logits);
    for (std::size_t b = 0; b < B; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += g[b * K + k] * y[b * K + k];
      for (std::size_t k = 0; k < K; ++k) dx[b * K + k] += y[b * K + k] * (g[b * K + k] - dot);
    }
  });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> targets) {
  const Tensor& lv = tape.value(logits);
  require_rank(lv, 2, "cross_entropy");
  const std::size_t B = lv.dim(0), K = lv.dim(1);
  if (targets.size() != B) throw ShapeError("cross_entropy: one target per row required");
  Tensor probs({B, K});
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b] >= K) throw InvalidArgument("cross_entropy: target class out of range");
    const auto row = lv.data().subspan(b * K, K);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    loss += mx + std::log(s) - row[targets[b]];
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(row[k] - mx) / s;
  }
  loss /= static_cast<double>(B);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return tape.record(Tensor({1}, {loss}), {logits},
                     [logits, B, K, probs = std::move(probs), tgt = std::move(tgt)](Tape& tp, std::size_t self) {
                       const double g = tp.upstream(self)[0] / static_cast<double>(B);
                       Tensor& dx = tp.grad_buffer(logits);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t k = 0; k < K; ++k)
                           dx[b * K + k] += g * (probs[b * K + k] - (k == tgt[b] ? 1.0 : 0.0));
                     });
}

Var l2_normalize(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require_rank(xv, 2, "l2_normalize");
  const std::size_t B = xv.dim(0), N = xv.dim(1);
  Tensor out(xv.shape());
  std::vector<double> norms(B);
  for (std::size_t b = 0; b < B; ++b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < N; ++i) ss += xv[b * N + i] * xv[b * N + i];
    const double n = std::sqrt(ss);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InvalidArgument("l2_normalize: degenerate embedding with zero norm in row " + std::to_string(b));
    }
    norms[b] = n;
    for (std::size_t i = 0; i < N; ++i) out[b * N + i] = xv[b * N + i] / n;
  }
  return tape.record(std::move(out), {x}, [x, B, N, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& y = tp.output(self);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t b = 0; b < B; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < N; ++i) dot += y[b * N + i] * g[b * N + i];
      for (std::size_t i = 0; i < N; ++i) dx[b * N + i] += (g[b * N + i] - y[b * N + i] * dot) / norms[b];
    }
  });
}

Var gaussian_kernel_similarity(Tape& tape, Var a, Var b, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_kernel_similarity: sigma must be positive");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "gaussian_kernel_similarity");
  double dist = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) dist += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double y = std::exp(-dist * inv);
  return tape.record(Tensor({1}, {y}), {a, b}, [a, b, y, inv](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0] * y * (-2.0 * inv);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    double* da = tp.requires_grad(a) ? tp.grad_buffer(a).data().data() : nullptr;
    double* db = tp.requires_grad(b) ? tp.grad_buffer(b).data().data() : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = g * (av[i] - bv[i]);
      if (da) da[i] += d;
      if (db) db[i] -= d;
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      Tensor& d = tp.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor& d = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& d = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  });
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return tape.record(Tensor({1}, {s}), {x}, [x](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    Tensor& dx = tp.grad_buffer(x);
    for (double& v : dx.data()) v += g;
  });
}

AdamState make_adam(double lr, const std::vector<Tensor>& params) {
  AdamState state;
  state.lr = lr;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.shape(), 0.0);
    state.second_moment.emplace_back(p.shape(), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (params[j].shape() != grads[j].shape() || params[j].shape() != state.first_moment[j].shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(j));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t j = 0; j < params.size(); ++j) {
    Tensor& p = params[j];
    Tensor& m = state.first_moment[j];
    Tensor& v = state.second_moment[j];
    const Tensor& g = grads[j];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace swpc::ad
