#include "pathweaver/numcore/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pathweaver/error.hpp"
#include "pathweaver/numcore/kernels.hpp"

namespace pathweaver::num {

using detail::make_result;

namespace {

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + shape_str(a.value()) + " * " + shape_str(b.value()) + ")");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  kernels::matmul_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) kernels::matmul_nt(self.grad.data(), pb.value.data(), pa.grad_buffer().data(), m, n, k, true);
    if (pb.requires_grad) kernels::matmul_tn(pa.value.data(), self.grad.data(), pb.grad_buffer().data(), k, m, n, true);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("linear: x " + shape_str(x.value()) + ", w " + shape_str(w.value()) + ", b " +
                         shape_str(b.value()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  Tensor out(m, n);
  const Real* bias = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    Real* row = out.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] = bias[j];
  }
  kernels::matmul_nn(x.value().data(), w.value().data(), out.data(), m, k, n, true);
  return make_result(std::move(out), {x, w, b}, [m, k, n](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    if (px.requires_grad) kernels::matmul_nt(self.grad.data(), pw.value.data(), px.grad_buffer().data(), m, n, k, true);
    if (pw.requires_grad) kernels::matmul_tn(px.value.data(), self.grad.data(), pw.grad_buffer().data(), k, m, n, true);
    if (pb.requires_grad) {
      Real* gb = pb.grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        const Real* g = self.grad.row(i);
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[j];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out.accumulate(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (parent(self, p).requires_grad) parent(self, p).grad_buffer().accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Real* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer().accumulate(self.grad);
    if (parent(self, 1).requires_grad) {
      Tensor& g = parent(self, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Real* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row " + shape_str(row.value()) + " against " + shape_str(a.value()));
  }
  Tensor out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    Real* r = out.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += row.value()[j];
  }
  return make_result(std::move(out), {a, row}, [n](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer().accumulate(self.grad);
    if (parent(self, 1).requires_grad) {
      Real* g = parent(self, 1).grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.rows(); ++i) {
        const Real* gr = self.grad.row(i);
        for (std::size_t j = 0; j < n; ++j) g[j] += gr[j];
      }
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = a.value();
  for (auto& x : out.values()) x *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var one_minus(const Var& a) {
  Tensor out = a.value();
  for (auto& x : out.values()) x = Real(1) - x;
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) {
    // Branches keep exp() from overflowing for large |v|.
    v = v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real s = self.value[i];
      g[i] += self.grad[i] * s * (Real(1) - s);
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0 ? v : Real(0);
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    Tensor& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (px.value[i] > 0) g[i] += self.grad[i];
    }
  });
}

Var gelu(const Var& x) {
  constexpr Real kC = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real kA = Real(0.044715);
  Tensor out = x.value();
  for (auto& v : out.values()) v = Real(0.5) * v * (Real(1) + std::tanh(kC * (v + kA * v * v * v)));
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    Tensor& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real v = px.value[i];
      const Real t = std::tanh(kC * (v + kA * v * v * v));
      const Real dt = (Real(1) - t * t) * kC * (Real(1) + Real(3) * kA * v * v);
      g[i] += self.grad[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * v * dt);
    }
  });
}

Var softmax(const Var& x) {
  Tensor out(x.rows(), x.cols());
  kernels::softmax_rows(x.value().data(), out.data(), x.rows(), x.cols());
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    const std::size_t cols = self.value.cols();
    for (std::size_t i = 0; i < self.value.rows(); ++i) {
      const Real* y = self.value.row(i);
      const Real* dy = self.grad.row(i);
      Real dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += y[j] * dy[j];
      Real* gx = g.row(i);
      for (std::size_t j = 0; j < cols; ++j) gx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.rows() != 1 || gain.cols() != cols || !gain.value().same_shape(bias.value())) {
    throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(cols));
  }
  Tensor out(rows, cols);
  Tensor xhat(rows, cols);
  std::vector<Real> inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* xr = x.value().row(i);
    Real mu = 0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= Real(cols);
    Real var = 0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= Real(cols);
    inv_std[i] = Real(1) / std::sqrt(var + eps);
    Real* hr = xhat.row(i);
    Real* orow = out.row(i);
    for (std::size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mu) * inv_std[i];
      orow[j] = hr[j] * gain.value()[j] + bias.value()[j];
    }
  }
  return make_result(std::move(out), {x, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pg = parent(self, 1);
                       Node& pb = parent(self, 2);
                       if (pg.requires_grad || pb.requires_grad) {
                         Real* gg = pg.requires_grad ? pg.grad_buffer().data() : nullptr;
                         Real* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
                         for (std::size_t i = 0; i < rows; ++i) {
                           const Real* dy = self.grad.row(i);
                           const Real* hr = xhat.row(i);
                           for (std::size_t j = 0; j < cols; ++j) {
                             if (gg) gg[j] += dy[j] * hr[j];
                             if (gb) gb[j] += dy[j];
                           }
                         }
                       }
                       if (px.requires_grad) {
                         Tensor& gx = px.grad_buffer();
                         const Real* gain_v = pg.value.data();
                         std::vector<Real> dh(cols);
                         for (std::size_t i = 0; i < rows; ++i) {
                           const Real* dy = self.grad.row(i);
                           const Real* hr = xhat.row(i);
                           Real mean_dh = 0, mean_dh_h = 0;
                           for (std::size_t j = 0; j < cols; ++j) {
                             dh[j] = dy[j] * gain_v[j];
                             mean_dh += dh[j];
                             mean_dh_h += dh[j] * hr[j];
                           }
                           mean_dh /= Real(cols);
                           mean_dh_h /= Real(cols);
                           Real* gr = gx.row(i);
                           for (std::size_t j = 0; j < cols; ++j) {
                             gr[j] += inv_std[i] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                           }
                         }
                       }
                     });
}

Var sum(const Var& x) {
  Real total = 0;
  for (Real v : x.value().values()) total += v;
  return make_result(Tensor::scalar(total), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    const Real d = self.grad[0];
    for (auto& v : g.values()) v += d;
  });
}

Var mean(const Var& x) {
  if (x.value().empty()) throw ContractError("mean of an empty tensor");
  return scale(sum(x), Real(1) / Real(x.value().size()));
}

Var row_norm(const Var& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* r = x.value().row(i);
    Real ss = 0;
    for (std::size_t j = 0; j < cols; ++j) ss += r[j] * r[j];
    out(i, 0) = std::sqrt(ss);
  }
  return make_result(std::move(out), {x}, [rows, cols](Node& self) {
    Node& px = parent(self, 0);
    Tensor& g = px.grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      const Real norm = self.value(i, 0);
      if (norm == Real(0)) continue;
      const Real coef = self.grad(i, 0) / norm;
      const Real* r = px.value.row(i);
      Real* gr = g.row(i);
      for (std::size_t j = 0; j < cols; ++j) gr[j] += coef * r[j];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& pp : self.parents) {
      const std::size_t n = pp->value.size();
      if (pp->requires_grad) {
        Real* g = pp->grad_buffer().data();
        const Real* src = self.grad.data() + offset;
        for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
      }
      offset += n;
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out(rows, ca + cb);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy(a.value().row(i), a.value().row(i) + ca, out.row(i));
    std::copy(b.value().row(i), b.value().row(i) + cb, out.row(i) + ca);
  }
  return make_result(std::move(out), {a, b}, [rows, ca, cb](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    for (std::size_t i = 0; i < rows; ++i) {
      const Real* g = self.grad.row(i);
      if (pa.requires_grad) {
        Real* d = pa.grad_buffer().row(i);
        for (std::size_t j = 0; j < ca; ++j) d[j] += g[j];
      }
      if (pb.requires_grad) {
        Real* d = pb.grad_buffer().row(i);
        for (std::size_t j = 0; j < cb; ++j) d[j] += g[ca + j];
      }
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t cols = x.cols();
  Tensor out(end - begin, cols);
  std::copy(x.value().row(begin), x.value().row(begin) + out.size(), out.data());
  return make_result(std::move(out), {x}, [begin, cols](Node& self) {
    Real* g = parent(self, 0).grad_buffer().row(begin);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    (void)cols;
  });
}

Var gather_rows(const Var& x, const std::vector<std::int64_t>& index) {
  const std::size_t cols = x.cols();
  Tensor out(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy(x.value().row(index[i]), x.value().row(index[i]) + cols, out.row(i));
  }
  return make_result(std::move(out), {x}, [index, cols](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] < 0) continue;
      Real* d = g.row(static_cast<std::size_t>(index[i]));
      const Real* s = self.grad.row(i);
      for (std::size_t j = 0; j < cols; ++j) d[j] += s[j];
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<std::int64_t>& targets, std::int64_t ignore_index) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: target count differs from logit rows");
  Tensor probs(n, v);
  kernels::softmax_rows(logits.value().data(), probs.data(), n, v);
  std::size_t counted = 0;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore_index) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary");
    }
    // log-softmax computed directly for accuracy on saturated rows.
    const Real* row = logits.value().row(i);
    Real mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    total += static_cast<double>(std::log(z) + mx - row[targets[i]]);
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: every position is ignored; loss undefined");
  const Real inv = Real(1) / Real(counted);
  return make_result(Tensor::scalar(static_cast<Real>(total) * inv), {logits},
                     [probs = std::move(probs), targets, ignore_index, inv, v](Node& self) {
                       Tensor& g = parent(self, 0).grad_buffer();
                       const Real d = self.grad[0] * inv;
                       for (std::size_t i = 0; i < targets.size(); ++i) {
                         if (targets[i] == ignore_index) continue;
                         const Real* p = probs.row(i);
                         Real* gr = g.row(i);
                         for (std::size_t j = 0; j < v; ++j) gr[j] += d * p[j];
                         gr[targets[i]] -= d;
                       }
                     });
}

Var dropout(const Var& x, Real p, Rng& rng) {
  if (p <= 0) return x;
  if (p >= 1) throw ContractError("dropout probability must be < 1");
  Tensor mask(x.rows(), x.cols());
  const Real keep = Real(1) / (Real(1) - p);
  for (auto& m : mask.values()) m = rng.bernoulli(p) ? Real(0) : keep;
  return mul(x, constant(std::move(mask)));
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& opts) {
  const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols(), heads = opts.heads;
  if (k.cols() != d || v.cols() != d || v.rows() != lk) throw DimensionError("attention: q/k/v shapes disagree");
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: feature dim not divisible by heads");
  if (opts.key_mask && opts.key_mask->size() != lk) throw DimensionError("attention: key mask length != keys");
  if (opts.causal && lq != lk) throw DimensionError("attention: causal attention needs square scores");
  const std::size_t dh = d / heads;
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(dh));

  std::vector<std::uint8_t> visible(lq * lk, 1);
  for (std::size_t i = 0; i < lq; ++i) {
    for (std::size_t j = 0; j < lk; ++j) {
      bool ok = !opts.key_mask || (*opts.key_mask)[j];
      if (opts.causal && j > i) ok = false;
      visible[i * lk + j] = ok;
    }
  }

  auto split = [](const Tensor& src, std::size_t h, std::size_t dh_) {
    Tensor out(src.rows(), dh_);
    for (std::size_t i = 0; i < src.rows(); ++i) std::copy(src.row(i) + h * dh_, src.row(i) + (h + 1) * dh_, out.row(i));
    return out;
  };

  Tensor out(lq, d);
  std::vector<Tensor> probs(heads);
  std::vector<Tensor> qh(heads), kh(heads), vh(heads);
  Tensor scores(lq, lk), oh(lq, dh);
  for (std::size_t h = 0; h < heads; ++h) {
    qh[h] = split(q.value(), h, dh);
    kh[h] = split(k.value(), h, dh);
    vh[h] = split(v.value(), h, dh);
    kernels::matmul_nt(qh[h].data(), kh[h].data(), scores.data(), lq, dh, lk, false);
    Tensor& p = probs[h];
    p = Tensor(lq, lk);
    for (std::size_t i = 0; i < lq; ++i) {
      const Real* s = scores.row(i);
      const std::uint8_t* vis = visible.data() + i * lk;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < lk; ++j) {
        if (vis[j]) mx = std::max(mx, s[j] * scale_factor);
      }
      if (mx == -std::numeric_limits<Real>::infinity()) continue;  // nothing visible
      Real z = 0;
      Real* pr = p.row(i);
      for (std::size_t j = 0; j < lk; ++j) {
        pr[j] = vis[j] ? std::exp(s[j] * scale_factor - mx) : Real(0);
        z += pr[j];
      }
      const Real inv = Real(1) / z;
      for (std::size_t j = 0; j < lk; ++j) pr[j] *= inv;
    }
    kernels::matmul_nn(p.data(), vh[h].data(), oh.data(), lq, lk, dh, false);
    for (std::size_t i = 0; i < lq; ++i) std::copy(oh.row(i), oh.row(i) + dh, out.row(i) + h * dh);
  }
  if (opts.probe) *opts.probe = probs;

  return make_result(
      std::move(out), {q, k, v},
      [probs = std::move(probs), qh = std::move(qh), kh = std::move(kh), vh = std::move(vh), lq, lk, dh, heads,
       scale_factor](Node& self) {
        Node& pq = parent(self, 0);
        Node& pk = parent(self, 1);
        Node& pv = parent(self, 2);
        Tensor doh(lq, dh), dp(lq, lk), ds(lq, lk), dqh(lq, dh), dkh(lk, dh), dvh(lk, dh);
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < lq; ++i) {
            std::copy(self.grad.row(i) + h * dh, self.grad.row(i) + (h + 1) * dh, doh.row(i));
          }
          const Tensor& p = probs[h];
          if (pv.requires_grad) {
            kernels::matmul_tn(p.data(), doh.data(), dvh.data(), lk, lq, dh, false);
            Tensor& g = pv.grad_buffer();
            for (std::size_t j = 0; j < lk; ++j) {
              Real* gr = g.row(j) + h * dh;
              const Real* s = dvh.row(j);
              for (std::size_t c = 0; c < dh; ++c) gr[c] += s[c];
            }
          }
          if (!pq.requires_grad && !pk.requires_grad) continue;
          kernels::matmul_nt(doh.data(), vh[h].data(), dp.data(), lq, dh, lk, false);
          for (std::size_t i = 0; i < lq; ++i) {
            const Real* pr = p.row(i);
            const Real* dpr = dp.row(i);
            Real dot = 0;
            for (std::size_t j = 0; j < lk; ++j) dot += pr[j] * dpr[j];
            Real* dsr = ds.row(i);
            for (std::size_t j = 0; j < lk; ++j) dsr[j] = pr[j] * (dpr[j] - dot) * scale_factor;
          }
          if (pq.requires_grad) {
            kernels::matmul_nn(ds.data(), kh[h].data(), dqh.data(), lq, lk, dh, false);
            Tensor& g = pq.grad_buffer();
            for (std::size_t i = 0; i < lq; ++i) {
              Real* gr = g.row(i) + h * dh;
              const Real* s = dqh.row(i);
              for (std::size_t c = 0; c < dh; ++c) gr[c] += s[c];
            }
          }
          if (pk.requires_grad) {
            kernels::matmul_tn(ds.data(), qh[h].data(), dkh.data(), lk, lq, dh, false);
            Tensor& g = pk.grad_buffer();
            for (std::size_t j = 0; j < lk; ++j) {
              Real* gr = g.row(j) + h * dh;
              const Real* s = dkh.row(j);
              for (std::size_t c = 0; c < dh; ++c) gr[c] += s[c];
            }
          }
        }
      });
}

}  // namespace pathweaver::num
