#include <doctest.h>

#include <cmath>
#include <vector>

#include "pathweaver/error.hpp"
#include "pathweaver/numcore/kernels.hpp"
#include "pathweaver/numcore/nn.hpp"
#include "pathweaver/numcore/ops.hpp"

using namespace pathweaver;
using namespace pathweaver::num;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(r, c);
  for (auto& x : t.values()) x = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Triple loop in double.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  std::vector<double> c(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t p = 0; p < a.cols(); ++p) c[i * b.cols() + j] += double(a(i, p)) * double(b(p, j));
  return c;
}

Tensor transposed(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(Tensor::identity(3)(1, 1) == 1);
  CHECK(Tensor::identity(3)(0, 1) == 0);
  CHECK_THROWS_AS(t.item(), DimensionError);
  CHECK(Tensor::scalar(2.5).item() == doctest::Approx(2.5));
  Tensor u = t;
  u.accumulate(t);
  CHECK(u(0, 1) == 4);
  CHECK_THROWS_AS(u.accumulate(Tensor(3, 2)), DimensionError);
  u[0] = std::nanf("");
  CHECK_FALSE(u.all_finite());
}

TEST_CASE("rng is reproducible and below() stays in range") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng r(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    REQUIRE(v < 7);
    ++hist[v];
  }
  for (int h : hist) CHECK(h > 800);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("serial and parallel kernels agree bitwise with the naive product") {
  Rng rng(7);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 2}, {17, 33, 9}, {64, 64, 64}, {130, 70, 90}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    Tensor a = random_tensor(m, k, rng), b = random_tensor(k, n, rng);
    const auto ref = naive_matmul(a, b);
    Tensor cs(m, n), cp(m, n);
    kernels::serial::matmul_nn(a.data(), b.data(), cs.data(), m, k, n, false);
    kernels::parallel::matmul_nn(a.data(), b.data(), cp.data(), m, k, n, false);
    CHECK(cs == cp);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(double(cs[i]) == doctest::Approx(ref[i]).epsilon(1e-4));

    // A^T B with A stored k x m, and A B^T with B stored n x k.
    Tensor at = transposed(a), bt = transposed(b);
    Tensor ts(m, n), tp(m, n), ns(m, n), np(m, n);
    kernels::serial::matmul_tn(at.data(), b.data(), ts.data(), m, k, n, false);
    kernels::parallel::matmul_tn(at.data(), b.data(), tp.data(), m, k, n, false);
    kernels::serial::matmul_nt(a.data(), bt.data(), ns.data(), m, k, n, false);
    kernels::parallel::matmul_nt(a.data(), bt.data(), np.data(), m, k, n, false);
    CHECK(ts == tp);
    CHECK(ns == np);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(double(ts[i]) == doctest::Approx(ref[i]).epsilon(1e-4));
      CHECK(double(ns[i]) == doctest::Approx(ref[i]).epsilon(1e-4));
    }

    // accumulate adds onto the existing output
    Tensor acc = Tensor::filled(m, n, 1);
    kernels::parallel::matmul_nn(a.data(), b.data(), acc.data(), m, k, n, true);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(double(acc[i]) == doctest::Approx(ref[i] + 1).epsilon(1e-4));
  }
}

TEST_CASE("parallel kernels are thread-count invariant") {
  Rng rng(3);
  Tensor a = random_tensor(200, 150, rng), b = random_tensor(150, 120, rng);
  Tensor one(200, 120), many(200, 120);
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  kernels::parallel::matmul_nn(a.data(), b.data(), one.data(), 200, 150, 120, false);
  kernels::set_threads(4);
  kernels::parallel::matmul_nn(a.data(), b.data(), many.data(), 200, 150, 120, false);
  kernels::set_threads(saved);
  CHECK(one == many);
}

TEST_CASE("softmax rows are max-subtracted distributions") {
  Tensor x = Tensor::from_rows({{1000, 1001, 1002}, {-5, 0, 5}, {0, 0, 0}});
  Tensor ys(3, 3), yp(3, 3);
  kernels::serial::softmax_rows(x.data(), ys.data(), 3, 3);
  kernels::parallel::softmax_rows(x.data(), yp.data(), 3, 3);
  CHECK(ys == yp);
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0, ref_z = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      z += ys(r, c);
      ref_z += std::exp(double(x(r, c)) - double(x(r, 2)));
    }
    CHECK(z == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(double(ys(r, c)) == doctest::Approx(std::exp(double(x(r, c)) - double(x(r, 2))) / ref_z).epsilon(1e-5));
    }
  }
  CHECK(ys(2, 0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("elementwise ops and shape errors") {
  Var a = constant(Tensor::from_rows({{1, -2}, {3, 0}}));
  Var b = constant(Tensor::from_rows({{2, 2}, {-1, 4}}));
  CHECK(add(a, b).value() == Tensor::from_rows({{3, 0}, {2, 4}}));
  CHECK(sub(a, b).value() == Tensor::from_rows({{-1, -4}, {4, -4}}));
  CHECK(mul(a, b).value() == Tensor::from_rows({{2, -4}, {-3, 0}}));
  CHECK(relu(a).value() == Tensor::from_rows({{1, 0}, {3, 0}}));
  CHECK(one_minus(a).value() == Tensor::from_rows({{0, 3}, {-2, 1}}));
  CHECK(scale(a, 2).value() == Tensor::from_rows({{2, -4}, {6, 0}}));
  CHECK(sum(a).value().item() == doctest::Approx(2));
  CHECK(mean(a).value().item() == doctest::Approx(0.5));
  CHECK(sigmoid(constant(Tensor::scalar(0))).value().item() == doctest::Approx(0.5));
  CHECK_THROWS_AS(add(a, constant(Tensor(1, 2))), DimensionError);
  CHECK_THROWS_AS(matmul(a, constant(Tensor(3, 2))), DimensionError);
  CHECK_THROWS_AS(concat_cols(a, constant(Tensor(3, 2))), DimensionError);
  Var r = row_norm(constant(Tensor::from_rows({{3, 4}, {0, 0}})));
  CHECK(r.value()(0, 0) == doctest::Approx(5));
  CHECK(r.value()(1, 0) == 0);
}

TEST_CASE("gelu follows the tanh approximation") {
  Tensor x = Tensor::from_rows({{-3, -1, 0, 0.5, 2}});
  Tensor y = gelu(constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double ref = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
    CHECK(double(y[i]) == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm normalizes each row with biased variance") {
  Rng rng(5);
  Tensor x = random_tensor(4, 6, rng, -3, 3);
  Tensor g = random_tensor(1, 6, rng), b = random_tensor(1, 6, rng);
  Tensor y = layer_norm(constant(x), constant(g), constant(b)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 6; ++c) mu += x(r, c);
    mu /= 6;
    for (std::size_t c = 0; c < 6; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= 6;
    for (std::size_t c = 0; c < 6; ++c) {
      const double ref = (x(r, c) - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
      CHECK(double(y(r, c)) == doctest::Approx(ref).epsilon(1e-5));
    }
  }
}

TEST_CASE("cross_entropy is the mean NLL over non-ignored rows") {
  Tensor logits = Tensor::from_rows({{1, 2, 3}, {0, 0, 0}, {5, -1, 2}});
  const std::vector<std::int64_t> targets{2, -1, 0};
  const double l = cross_entropy(constant(logits), targets, -1).value().item();
  auto nll = [&](std::size_t r, std::size_t t) {
    double z = 0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(double(logits(r, c)));
    return std::log(z) - logits(r, t);
  };
  CHECK(l == doctest::Approx((nll(0, 2) + nll(2, 0)) / 2).epsilon(1e-6));
  CHECK_THROWS_AS(cross_entropy(constant(logits), {-1, -1, -1}, -1), ContractError);
}

TEST_CASE("gather_rows, slicing and concatenation") {
  Var x = constant(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  Tensor g = gather_rows(x, {2, -1, 0}).value();
  CHECK(g == Tensor::from_rows({{5, 6}, {0, 0}, {1, 2}}));
  CHECK(slice_rows(x, 1, 3).value() == Tensor::from_rows({{3, 4}, {5, 6}}));
  CHECK(concat_rows({x, slice_rows(x, 0, 1)}).value().rows() == 4);
  CHECK(concat_cols(x, x).value().cols() == 4);
  CHECK_THROWS_AS(gather_rows(x, {3}), DimensionError);
}

TEST_CASE("attention matches a naive reference and honours masks") {
  Rng rng(11);
  const std::size_t lq = 4, lk = 6, d = 8, heads = 2, dh = d / heads;
  Tensor q = random_tensor(lq, d, rng), k = random_tensor(lk, d, rng), v = random_tensor(lk, d, rng);
  std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
  std::vector<Tensor> probe;
  AttentionOptions o;
  o.heads = heads;
  o.key_mask = &mask;
  o.probe = &probe;
  Tensor out = attention(constant(q), constant(k), constant(v), o).value();
  REQUIRE(probe.size() == heads);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> s(lk);
      double mx = -1e300, z = 0;
      for (std::size_t j = 0; j < lk; ++j) {
        double a = 0;
        for (std::size_t c = 0; c < dh; ++c) a += double(q(i, h * dh + c)) * k(j, h * dh + c);
        s[j] = a / std::sqrt(double(dh));
        if (mask[j]) mx = std::max(mx, s[j]);
      }
      for (std::size_t j = 0; j < lk; ++j) z += mask[j] ? std::exp(s[j] - mx) : 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        const double p = mask[j] ? std::exp(s[j] - mx) / z : 0.0;
        CHECK(double(probe[h](i, j)) == doctest::Approx(p).epsilon(1e-5));
      }
      for (std::size_t c = 0; c < dh; ++c) {
        double ref = 0;
        for (std::size_t j = 0; j < lk; ++j) {
          if (mask[j]) ref += std::exp(s[j] - mx) / z * v(j, h * dh + c);
        }
        CHECK(double(out(i, h * dh + c)) == doctest::Approx(ref).epsilon(1e-5));
      }
    }
  }
  // Masked keys get exactly zero weight.
  for (const auto& p : probe) {
    for (std::size_t i = 0; i < lq; ++i) {
      CHECK(p(i, 1) == 0);
      CHECK(p(i, 4) == 0);
    }
  }
}

TEST_CASE("causal attention never looks ahead; fully masked queries output zeros") {
  Rng rng(2);
  Tensor x = random_tensor(5, 4, rng);
  std::vector<Tensor> probe;
  AttentionOptions o;
  o.causal = true;
  o.probe = &probe;
  (void)attention(constant(x), constant(x), constant(x), o);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(probe[0](i, j) == 0);

  std::vector<std::uint8_t> none(5, 0);
  AttentionOptions m;
  m.key_mask = &none;
  Tensor out = attention(constant(x), constant(x), constant(x), m).value();
  for (auto v : out.values()) CHECK(v == 0);
}

TEST_CASE("autograd accumulates across uses and NoGradGuard records nothing") {
  Var w = leaf(Tensor::from_rows({{2, -1}}));
  Var y = sum(mul(w, w));  // d/dw = 2w
  backward(y);
  CHECK(w.grad() == Tensor::from_rows({{4, -2}}));
  backward(sum(w));  // accumulates
  CHECK(w.grad() == Tensor::from_rows({{5, -1}}));
  w.zero_grad();
  CHECK_FALSE(w.has_grad());
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Var z = sum(mul(w, w));
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK_THROWS_AS(backward(mul(w, w)), ContractError);
}

TEST_CASE("dropout is identity at p = 0 and rescales survivors otherwise") {
  Rng rng(9);
  Tensor x = Tensor::filled(50, 40, 1);
  CHECK(dropout(constant(x), 0, rng).value() == x);
  Tensor y = dropout(constant(x), 0.25, rng).value();
  std::size_t kept = 0;
  for (auto v : y.values()) {
    if (v != 0) {
      ++kept;
      CHECK(v == doctest::Approx(1 / 0.75));
    }
  }
  CHECK(double(kept) / y.size() == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("parameter store, xavier bounds and sinusoidal positions") {
  ParameterStore store;
  Rng rng(1);
  Linear lin(store, "proj", 6, 10, rng);
  CHECK(store.contains("proj.weight"));
  CHECK(store.contains("proj.bias"));
  CHECK(store.scalar_count() == 6 * 10 + 10);
  CHECK_THROWS(store.add("proj.bias", Tensor(1, 1)));
  const double bound = std::sqrt(6.0 / 16.0);
  for (auto v : lin.weight.value().values()) CHECK(std::abs(v) <= bound);
  for (auto v : lin.bias.value().values()) CHECK(v == 0);

  Tensor p = sinusoidal_positions(10, 6);
  for (std::size_t pos = 0; pos < 10; ++pos) {
    for (std::size_t i = 0; i < 6; ++i) {
      const double angle = pos / std::pow(10000.0, double(2 * (i / 2)) / 6);
      CHECK(double(p(pos, i)) == doctest::Approx(i % 2 == 0 ? std::sin(angle) : std::cos(angle)).epsilon(1e-5));
    }
  }
}
