#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "irstd/rng.hpp"
#include "irstd/tensor.hpp"

using namespace irstd;
using autodiff::Tensor;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, bool requires_grad = false) {
  const std::size_t n = autodiff::detail::numel_of(shape);
  return Tensor::from_data(std::move(shape), random_vec(rng, n), requires_grad);
}

std::string temp_path(const std::string& stem) {
  const char* dir = std::getenv("TMPDIR");
  std::filesystem::path base(dir && *dir ? dir : "/tmp");
  return (base / ("irstd_tensor_" + stem)).string();
}

// Scalar loss that weights every output element differently, so a gradcheck
// exercises off-diagonal sensitivities too.
Tensor weighted_mean(const Tensor& y, Rng& rng) {
  std::vector<double> w = random_vec(rng, y.numel(), 0.5, 1.5);
  return autodiff::mean(autodiff::hadamard(y, Tensor::from_data(y.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("tensor construction and scalar access", "[tensor]") {
  REQUIRE_THROWS_AS(Tensor::from_data({2, 3}, {1.0, 2.0}), std::invalid_argument);
  const Tensor z = Tensor::zeros({2, 2});
  for (double v : z.data()) REQUIRE(v == 0.0);
  const Tensor c = Tensor::constant({3}, 0.25);
  for (double v : c.data()) REQUIRE(v == 0.25);
  REQUIRE(Tensor::scalar(1.5).item() == 1.5);
  REQUIRE_THROWS_AS(c.item(), std::invalid_argument);
  REQUIRE_FALSE(Tensor().defined());
  REQUIRE(c.defined());
}

TEST_CASE("matmul forward matches a naive loop for all transpose flags", "[tensor]") {
  Rng rng(501);
  const int m = 3, k = 4, n = 2;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      const Tensor a = random_tensor(rng, ta ? std::vector<int>{k, m} : std::vector<int>{m, k});
      const Tensor b = random_tensor(rng, tb ? std::vector<int>{n, k} : std::vector<int>{k, n});
      const Tensor out = autodiff::matmul(a, b, ta, tb);
      REQUIRE(out.shape() == std::vector<int>{m, n});
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int t = 0; t < k; ++t) {
            const double av = ta ? a.data()[std::size_t(t) * m + i] : a.data()[std::size_t(i) * k + t];
            const double bv = tb ? b.data()[std::size_t(j) * k + t] : b.data()[std::size_t(t) * n + j];
            acc += av * bv;
          }
          REQUIRE(out.data()[std::size_t(i) * n + j] == Catch::Approx(acc).margin(1e-14));
        }
      }
    }
  }
  REQUIRE_THROWS_AS(autodiff::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::matmul(Tensor::zeros({2}), Tensor::zeros({2, 3})),
                    std::invalid_argument);
}

TEST_CASE("conv2d forward matches a zero-padded reference", "[tensor]") {
  Rng rng(502);
  const int H = 5, W = 4, Ci = 2, kh = 3, kw = 1, Co = 3;
  const Tensor x = random_tensor(rng, {H, W, Ci});
  const Tensor w = random_tensor(rng, {kh, kw, Ci, Co});
  const Tensor bias = random_tensor(rng, {Co});
  const Tensor out = autodiff::conv2d(x, w, bias);
  REQUIRE(out.shape() == std::vector<int>{H, W, Co});
  const int ph = kh / 2, pw = kw / 2;
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      for (int co = 0; co < Co; ++co) {
        double acc = bias.data()[std::size_t(co)];
        for (int i = 0; i < kh; ++i) {
          for (int j = 0; j < kw; ++j) {
            const int sy = y + i - ph, sx = xx + j - pw;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;  // zero padding
            for (int ci = 0; ci < Ci; ++ci) {
              acc += x.data()[(std::size_t(sy) * W + sx) * Ci + ci] *
                     w.data()[((std::size_t(i) * kw + j) * Ci + ci) * Co + co];
            }
          }
        }
        REQUIRE(out.data()[(std::size_t(y) * W + xx) * Co + co] ==
                Catch::Approx(acc).margin(1e-14));
      }
    }
  }
  REQUIRE_THROWS_AS(autodiff::conv2d(x, Tensor::zeros({2, 2, Ci, Co})), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::conv2d(x, Tensor::zeros({3, 3, Ci + 1, Co})), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::conv2d(x, w, Tensor::zeros({Co + 1})), std::invalid_argument);
}

TEST_CASE("transposed_conv2d forward matches a stride-2 scatter reference", "[tensor]") {
  Rng rng(503);
  for (int k : {2, 4}) {
    const int h = 3, w = 2, Ci = 2, Co = 2;
    const Tensor x = random_tensor(rng, {h, w, Ci});
    const Tensor ker = random_tensor(rng, {k, k, Ci, Co});
    const Tensor bias = random_tensor(rng, {Co});
    const Tensor out = autodiff::transposed_conv2d(x, ker, bias);
    const int p = (k - 2) / 2, OH = 2 * h, OW = 2 * w;
    REQUIRE(out.shape() == std::vector<int>{OH, OW, Co});
    std::vector<double> ref(std::size_t(OH) * OW * Co);
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        for (int co = 0; co < Co; ++co) ref[(std::size_t(oy) * OW + ox) * Co + co] = bias.data()[std::size_t(co)];
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const int oy = 2 * y + i - p, ox = 2 * xx + j - p;
            if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
            for (int ci = 0; ci < Ci; ++ci) {
              for (int co = 0; co < Co; ++co) {
                ref[(std::size_t(oy) * OW + ox) * Co + co] +=
                    x.data()[(std::size_t(y) * w + xx) * Ci + ci] *
                    ker.data()[((std::size_t(i) * k + j) * Ci + ci) * Co + co];
              }
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < ref.size(); ++i)
      REQUIRE(out.data()[i] == Catch::Approx(ref[i]).margin(1e-14));
  }
  REQUIRE_THROWS_AS(
      autodiff::transposed_conv2d(Tensor::zeros({2, 2, 1}), Tensor::zeros({3, 3, 1, 1})),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      autodiff::transposed_conv2d(Tensor::zeros({2, 2, 1}), Tensor::zeros({2, 4, 1, 1})),
      std::invalid_argument);
}

TEST_CASE("elementwise and reduction forwards", "[tensor]") {
  Rng rng(504);
  const Tensor a = random_tensor(rng, {2, 3});
  const Tensor b = random_tensor(rng, {2, 3});

  const Tensor sum = autodiff::add(a, b);
  const Tensor had = autodiff::hadamard(a, b);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    REQUIRE(sum.data()[i] == a.data()[i] + b.data()[i]);
    REQUIRE(had.data()[i] == a.data()[i] * b.data()[i]);
  }

  // Trailing-axis bias broadcast.
  const Tensor x3 = random_tensor(rng, {2, 2, 3});
  const Tensor bias = Tensor::from_data({3}, {10.0, 20.0, 30.0});
  const Tensor xb = autodiff::add(x3, bias);
  for (std::size_t i = 0; i < x3.numel(); ++i)
    REQUIRE(xb.data()[i] == x3.data()[i] + bias.data()[i % 3]);
  REQUIRE_THROWS_AS(autodiff::add(a, Tensor::zeros({3, 2})), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::add(a, Tensor::zeros({2})), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::hadamard(a, Tensor::zeros({3, 2})), std::invalid_argument);

  const Tensor r = autodiff::relu(Tensor::from_data({4}, {-1.0, 0.0, 0.5, 2.0}));
  REQUIRE(r.data() == std::vector<double>{0.0, 0.0, 0.5, 2.0});

  const Tensor s = autodiff::sigmoid(Tensor::from_data({3}, {0.0, 2.0, -2.0}));
  REQUIRE(s.data()[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(s.data()[1] == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).margin(1e-15));
  REQUIRE(s.data()[2] == Catch::Approx(1.0 / (1.0 + std::exp(2.0))).margin(1e-15));

  const Tensor m = autodiff::mean(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 6.0}));
  REQUIRE(m.item() == Catch::Approx(3.0).margin(1e-15));

  const Tensor sc = autodiff::scale(a, -2.5);
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(sc.data()[i] == a.data()[i] * -2.5);
}

TEST_CASE("softmax rows are simplex points with known values", "[tensor]") {
  const Tensor x = Tensor::from_data({2, 2}, {0.0, std::log(3.0), 5.0, 5.0});
  const Tensor s = autodiff::softmax(x);
  REQUIRE(s.data()[0] == Catch::Approx(0.25).epsilon(1e-12));
  REQUIRE(s.data()[1] == Catch::Approx(0.75).epsilon(1e-12));
  REQUIRE(s.data()[2] == Catch::Approx(0.5).epsilon(1e-12));
  REQUIRE(s.data()[3] == Catch::Approx(0.5).epsilon(1e-12));

  Rng rng(505);
  const Tensor big = autodiff::softmax(random_tensor(rng, {4, 6}));
  for (int r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 6; ++c) sum += big.data()[std::size_t(r) * 6 + c];
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-12));
  }
  // The row-max shift keeps huge logits finite.
  const Tensor huge = autodiff::softmax(Tensor::from_data({2}, {1000.0, 1000.0}));
  REQUIRE(huge.data()[0] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("layer_norm forward matches a recomputed normalization", "[tensor]") {
  Rng rng(506);
  const int rows = 3, C = 5;
  const Tensor x = random_tensor(rng, {rows, C});
  const Tensor gamma = random_tensor(rng, {C}, false);
  const Tensor beta = random_tensor(rng, {C}, false);
  const Tensor out = autodiff::layer_norm(x, gamma, beta);
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += x.data()[std::size_t(r) * C + c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) {
      const double d = x.data()[std::size_t(r) * C + c] - mu;
      var += d * d;
    }
    var /= C;
    for (int c = 0; c < C; ++c) {
      const double want =
          gamma.data()[std::size_t(c)] *
              ((x.data()[std::size_t(r) * C + c] - mu) / std::sqrt(var + 1e-5)) +
          beta.data()[std::size_t(c)];
      REQUIRE(out.data()[std::size_t(r) * C + c] == Catch::Approx(want).margin(1e-12));
    }
  }
  REQUIRE_THROWS_AS(autodiff::layer_norm(x, Tensor::zeros({C + 1}), beta), std::invalid_argument);
}

TEST_CASE("reshape, concat and select_rows move data faithfully", "[tensor]") {
  Rng rng(507);
  const Tensor x = random_tensor(rng, {2, 6});
  const Tensor r = autodiff::reshape(x, {3, 4});
  REQUIRE(r.shape() == std::vector<int>{3, 4});
  REQUIRE(r.data() == x.data());
  REQUIRE_THROWS_AS(autodiff::reshape(x, {5, 2}), std::invalid_argument);

  const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from_data({1, 2}, {5, 6});
  const Tensor c0 = autodiff::concat(a, b, 0);
  REQUIRE(c0.shape() == std::vector<int>{3, 2});
  REQUIRE(c0.data() == std::vector<double>{1, 2, 3, 4, 5, 6});

  const Tensor d = Tensor::from_data({2, 1}, {7, 8});
  const Tensor c1 = autodiff::concat(a, d, 1);
  REQUIRE(c1.shape() == std::vector<int>{2, 3});
  REQUIRE(c1.data() == std::vector<double>{1, 2, 7, 3, 4, 8});

  REQUIRE_THROWS_AS(autodiff::concat(a, b, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::concat(a, b, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::concat(a, Tensor::zeros({2}), 0), std::invalid_argument);

  const Tensor rows = autodiff::select_rows(c0, 1, 2);
  REQUIRE(rows.shape() == std::vector<int>{2, 2});
  REQUIRE(rows.data() == std::vector<double>{3, 4, 5, 6});
  REQUIRE_THROWS_AS(autodiff::select_rows(c0, 2, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(autodiff::select_rows(c0, -1, 1), std::invalid_argument);
}

TEST_CASE("every primitive passes a finite-difference gradient check", "[tensor]") {
  Rng rng(508);
  const double tol = 1e-6;

  // matmul (both transposes exercised through the same probe).
  {
    const Tensor b = random_tensor(rng, {3, 2});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng w(509);
                  return weighted_mean(autodiff::matmul(t, b), w);
                },
                random_tensor(rng, {4, 3})) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng w(510);
                  return weighted_mean(autodiff::matmul(b, t, true, true), w);
                },
                random_tensor(rng, {4, 3})) < tol);
  }

  // conv2d: gradients with respect to image, kernel and bias.
  {
    const Tensor x = random_tensor(rng, {4, 4, 2});
    const Tensor w = random_tensor(rng, {3, 3, 2, 2});
    const Tensor bias = random_tensor(rng, {2});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(511);
                  return weighted_mean(autodiff::conv2d(t, w, bias), r);
                },
                x) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(512);
                  return weighted_mean(autodiff::conv2d(x, t, bias), r);
                },
                w) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(513);
                  return weighted_mean(autodiff::conv2d(x, w, t), r);
                },
                bias) < tol);
  }

  // transposed_conv2d over image, kernel and bias.
  {
    const Tensor x = random_tensor(rng, {2, 3, 2});
    const Tensor w = random_tensor(rng, {2, 2, 2, 2});
    const Tensor bias = random_tensor(rng, {2});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(514);
                  return weighted_mean(autodiff::transposed_conv2d(t, w, bias), r);
                },
                x) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(515);
                  return weighted_mean(autodiff::transposed_conv2d(x, t, bias), r);
                },
                w) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(516);
                  return weighted_mean(autodiff::transposed_conv2d(x, w, t), r);
                },
                bias) < tol);
  }

  // add in both modes, through either operand.
  {
    const Tensor a = random_tensor(rng, {3, 4});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(517);
                  return weighted_mean(autodiff::add(a, t), r);
                },
                random_tensor(rng, {3, 4})) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(518);
                  return weighted_mean(autodiff::add(a, t), r);
                },
                random_tensor(rng, {4})) < tol);
  }

  // hadamard, relu (kept away from the kink), sigmoid, softmax, layer_norm.
  {
    const Tensor b = random_tensor(rng, {2, 5});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(519);
                  return weighted_mean(autodiff::hadamard(t, b), r);
                },
                random_tensor(rng, {2, 5})) < tol);

    std::vector<double> away(12);
    Rng ar(520);
    for (auto& v : away) {
      v = ar.uniform(0.2, 1.0);
      if (ar.uniform() < 0.5) v = -v;
    }
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(521);
                  return weighted_mean(autodiff::relu(t), r);
                },
                Tensor::from_data({3, 4}, away)) < tol);

    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(522);
                  return weighted_mean(autodiff::sigmoid(t), r);
                },
                random_tensor(rng, {2, 3})) < tol);

    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(523);
                  return weighted_mean(autodiff::softmax(t), r);
                },
                random_tensor(rng, {3, 4})) < tol);

    const Tensor gamma = random_tensor(rng, {4});
    const Tensor beta = random_tensor(rng, {4});
    const Tensor xl = random_tensor(rng, {3, 4});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(524);
                  return weighted_mean(autodiff::layer_norm(t, gamma, beta), r);
                },
                xl) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(525);
                  return weighted_mean(autodiff::layer_norm(xl, t, beta), r);
                },
                gamma) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(526);
                  return weighted_mean(autodiff::layer_norm(xl, gamma, t), r);
                },
                beta) < tol);
  }

  // mean, reshape, concat, select_rows.
  {
    REQUIRE(autodiff::finite_diff_check([](const Tensor& t) { return autodiff::mean(t); },
                                        random_tensor(rng, {3, 3})) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(527);
                  return weighted_mean(autodiff::reshape(t, {6, 2}), r);
                },
                random_tensor(rng, {3, 4})) < tol);
    const Tensor other = random_tensor(rng, {2, 3});
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(528);
                  return weighted_mean(autodiff::concat(t, other, 0), r);
                },
                random_tensor(rng, {2, 3})) < tol);
    REQUIRE(autodiff::finite_diff_check(
                [&](const Tensor& t) {
                  Rng r(529);
                  return weighted_mean(autodiff::select_rows(t, 1, 2), r);
                },
                random_tensor(rng, {4, 3})) < tol);
  }
}

TEST_CASE("gradients accumulate on leaves and reset on interior nodes", "[tensor]") {
  const Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  const Tensor y = autodiff::add(x, x);
  const Tensor loss = autodiff::mean(y);
  autodiff::backward(loss);
  for (double g : x.grad()) REQUIRE(g == Catch::Approx(2.0 / 3.0).epsilon(1e-15));

  // A second sweep doubles the leaf accumulator but rebuilds interior grads.
  autodiff::backward(loss);
  for (double g : x.grad()) REQUIRE(g == Catch::Approx(4.0 / 3.0).epsilon(1e-15));
  REQUIRE(y.n->grad[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor xm = x;
  xm.zero_grad();
  for (double g : x.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("needs_grad gates the backward sweep", "[tensor]") {
  const Tensor c1 = Tensor::constant({2, 2}, 0.5);
  const Tensor c2 = Tensor::constant({2, 2}, 2.0);
  const Tensor loss = autodiff::mean(autodiff::hadamard(c1, c2));
  REQUIRE_FALSE(loss.n->needs_grad);
  REQUIRE_NOTHROW(autodiff::backward(loss));  // no-op: nothing requires grad
  REQUIRE_THROWS_AS(c1.grad(), std::logic_error);

  const Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  const Tensor mixed = autodiff::mean(autodiff::hadamard(x, c2));
  REQUIRE(mixed.n->needs_grad);
  autodiff::backward(mixed);
  REQUIRE(x.grad()[0] == Catch::Approx(2.0 / 4.0).epsilon(1e-15));
  REQUIRE(c2.n->grad.empty());  // constants never get gradient storage

  REQUIRE_THROWS_AS(autodiff::backward(autodiff::add(x, x)), std::invalid_argument);
}

TEST_CASE("finite_diff_check rejects bad harness inputs", "[tensor]") {
  const Tensor x = Tensor::from_data({2}, {0.3, 0.4});
  REQUIRE_THROWS_AS(
      autodiff::finite_diff_check([](const Tensor& t) { return autodiff::relu(t); }, x),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      autodiff::finite_diff_check([](const Tensor& t) { return autodiff::mean(t); }, x, 0.0),
      std::invalid_argument);
}

TEST_CASE("snapshots roundtrip bit for bit and reject corrupt files", "[tensor]") {
  const std::string path = temp_path("snap.bin");
  std::vector<autodiff::SnapshotEntry> entries;
  entries.push_back({"alpha", {2, 3}, {1.0, -2.5, 0.0, -0.0, 1e-308, 1e308}});
  entries.push_back({"beta.weight", {4}, {0.25, 0.5, 0.75, 1.0}});
  entries.push_back({"g", {1, 1, 1, 2}, {42.0, -42.0}});
  autodiff::save_snapshot(path, entries);

  const auto loaded = autodiff::load_snapshot(path);
  REQUIRE(loaded.size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    REQUIRE(loaded[i].name == entries[i].name);
    REQUIRE(loaded[i].shape == entries[i].shape);
    REQUIRE(loaded[i].data.size() == entries[i].data.size());
    for (std::size_t j = 0; j < entries[i].data.size(); ++j) {
      std::uint64_t a, b;
      std::memcpy(&a, &loaded[i].data[j], 8);
      std::memcpy(&b, &entries[i].data[j], 8);
      REQUIRE(a == b);  // bit-exact, -0.0 and denormals included
    }
  }

  SECTION("bad magic") {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE....";
    f.close();
    REQUIRE_THROWS_WITH(autodiff::load_snapshot(path), Catch::Matchers::ContainsSubstring("magic"));
  }
  SECTION("unsupported version") {
    std::string blob(autodiff::kSnapshotMagic, 4);
    blob += std::string("\x63\x00\x00\x00", 4);  // version 99
    blob += std::string("\x00\x00\x00\x00", 4);
    std::ofstream f(path, std::ios::binary);
    f.write(blob.data(), std::streamsize(blob.size()));
    f.close();
    REQUIRE_THROWS_WITH(autodiff::load_snapshot(path),
                        Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("truncated payload") {
    autodiff::save_snapshot(path, entries);
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    blob.resize(blob.size() - 5);
    std::ofstream f(path, std::ios::binary);
    f.write(blob.data(), std::streamsize(blob.size()));
    f.close();
    REQUIRE_THROWS_WITH(autodiff::load_snapshot(path),
                        Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(autodiff::load_snapshot(temp_path("does_not_exist.bin")),
                      std::runtime_error);
  }
  std::remove(path.c_str());
}
