#include <doctest.h>

#include <cmath>

#include "dasa/errors.hpp"
#include "dasa/gradcheck.hpp"
#include "support.hpp"

using namespace dasa;
using testing::Gen;

namespace {

// Direct reference formulas, written without the library's kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out[i * n + j] = s;
    }
  return out;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("matmul agrees with the triple loop on random shapes") {
  Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = g.index(6) + 1, k = g.index(6) + 1, n = g.index(6) + 1;
    const Tensor a = g.matrix(m, k), b = g.matrix(k, n);
    CHECK(testing::max_abs_diff(matmul(a, b).data(), naive_matmul(a, b)) < 1e-12);
    CHECK(testing::max_abs_diff(matmul_nt(a, transpose(b)).data(), naive_matmul(a, b)) < 1e-12);
  }
}

TEST_CASE("shape errors are reported") {
  Gen g(1);
  CHECK_THROWS_AS(matmul(g.matrix(2, 3), g.matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(add(g.matrix(2, 3), g.matrix(3, 2)), DimensionError);
  CHECK_THROWS_AS(reshape(g.matrix(2, 3), {5}), DimensionError);
  const std::size_t bad[] = {4};
  CHECK_THROWS_AS(cross_entropy_rows(g.matrix(1, 3), bad), ContractError);
}

TEST_CASE("gelu is the exact erf form") {
  Gen g(2);
  const Tensor x = g.vec(64, false, 3.0);
  const Tensor y = gelu(x);
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(y.at(i) - gelu_ref(x.at(i))) < 1e-15);
}

TEST_CASE("softmax and log-softmax are stable for large logits") {
  const Tensor x = Tensor::matrix(1, 3, {1000.0, 1001.0, 999.0});
  const Tensor p = softmax_rows(x);
  const double z = std::exp(-1.0) + 1.0 + std::exp(-2.0);
  CHECK(p.at(1) == doctest::Approx(1.0 / z).epsilon(1e-14));
  const Tensor lp = log_softmax_rows(x);
  CHECK(std::isfinite(lp.at(0)));
  CHECK(lp.at(1) == doctest::Approx(-std::log(z)).epsilon(1e-14));
}

TEST_CASE("cross entropy matches -x_t + logsumexp") {
  Gen g(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = g.index(4) + 1, cols = g.index(7) + 2;
    const Tensor x = g.matrix(rows, cols, false, 4.0);
    std::vector<std::size_t> t(rows);
    double expect = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      t[r] = g.index(cols);
      double z = 0.0;
      for (std::size_t c = 0; c < cols; ++c) z += std::exp(x.at(r, c));
      expect += -x.at(r, t[r]) + std::log(z);
    }
    expect /= static_cast<double>(rows);
    CHECK(std::abs(cross_entropy_rows(x, t).item() - expect) < 1e-12);
  }
}

TEST_CASE("cosine rejects zero vectors and stays in range") {
  CHECK_THROWS_AS(cosine(Tensor::vector({0, 0, 0}), Tensor::vector({1, 2, 3})), DegenerateInputError);
  CHECK_THROWS_AS(cosine_rows(Tensor::matrix(2, 2, {1, 0, 0, 0}), Tensor::vector({1, 1})),
                  DegenerateInputError);
  const Tensor v = Tensor::vector({0.1, 0.2, 0.3});
  CHECK(cosine(v, v).item() <= 1.0);
  CHECK(cosine(v, scale(v, -7.0)).item() >= -1.0);
  Gen g(4);
  for (int i = 0; i < 200; ++i) {
    const double c = cosine_rows(g.matrix(5, 4), g.vec(4)).data()[g.index(5)];
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
  }
}

TEST_CASE("layer norm rows have zero mean and unit variance before the affine") {
  Gen g(5);
  const Tensor x = g.matrix(4, 16, false, 5.0);
  const Tensor y = layer_norm_rows(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    m /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v / 16.0 - 1.0) < 1e-12);
  }
}

TEST_CASE("segment max pools each segment independently") {
  const Tensor x = Tensor::matrix(5, 2, {1, 9, 4, 2, 3, 3, 7, 0, -1, 8});
  const std::size_t off[] = {0, 2, 5};
  const Tensor y = segment_max_rows(x, off);
  REQUIRE(y.shape() == Shape{2, 2});
  CHECK(y.at(0, 0) == 4);
  CHECK(y.at(0, 1) == 9);
  CHECK(y.at(1, 0) == 7);
  CHECK(y.at(1, 1) == 8);
}

TEST_CASE("kl to logits is zero for matching distributions") {
  const Tensor logits = Tensor::vector({0.3, -1.0, 2.0});
  const Tensor p = softmax_rows(logits);
  CHECK(std::abs(kl_to_logits(p.data(), logits).item()) < 1e-15);
  const std::vector<double> q{1.0, 0.0, 0.0};
  CHECK(kl_to_logits(q, logits).item() > 0.0);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  Tensor x = Tensor::vector({1.0, -2.0}, true);
  Tensor y = sum(add(mul(x, x), x));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("a graph can be differentiated once") {
  Tensor x = Tensor::vector({1.0}, true);
  Tensor y = sum(mul(x, x));
  y.backward();
  CHECK_THROWS(y.backward());
}

TEST_CASE("no-grad guard stops recording") {
  Tensor x = Tensor::vector({1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = sum(mul(x, x));
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("every op's backward matches central differences") {
  Gen g(6);
  auto check = [](const std::function<Tensor()>& f, std::vector<Tensor> in) {
    return finite_diff_check(f, std::move(in), 1e-6);
  };
  Tensor a = g.matrix(3, 4, true), b = g.matrix(4, 5, true), c = g.matrix(3, 4, true);
  Tensor v4 = g.vec(4, true), v5 = g.vec(5, true);
  Tensor w = g.matrix(3, 5, false);  // fixed weights make the loss non-trivial
  auto weigh = [&](const Tensor& t) { return sum(mul(t, w)); };

  CHECK(check([&] { return weigh(matmul(a, b)); }, {a, b}) < 1e-7);
  CHECK(check([&] { return weigh(matmul_nt(a, transpose(b))); }, {a, b}) < 1e-7);
  CHECK(check([&] { return weigh(affine(a, b, v5)); }, {a, b, v5}) < 1e-7);
  CHECK(check([&] { return sum(mul(sub(a, c), add(a, scale(c, 0.5)))); }, {a, c}) < 1e-7);
  CHECK(check([&] { return sum(mul(add_rowwise(a, v4), c)); }, {a, v4}) < 1e-7);
  CHECK(check([&] { return sum(mul(gelu(a), c)); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(concat(a, c, 0), concat(c, a, 0))); }, {a, c}) < 1e-7);
  CHECK(check([&] { return sum(mul(concat(a, c, 1), concat(c, c, 1))); }, {a, c}) < 1e-7);
  CHECK(check([&] { return sum(mul(slice_rows(a, 1, 2), slice_rows(c, 0, 2))); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(slice_cols(a, 1, 2), slice_cols(c, 2, 2))); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(reshape(a, {4, 3}), reshape(c, {4, 3}))); }, {a}) < 1e-7);
  const std::size_t ids[] = {2, 0, 2, 1};
  CHECK(check([&] { return sum(mul(gather_rows(a, ids), concat(c, slice_rows(c, 0, 1), 0))); },
              {a}) < 1e-7);
  const std::size_t perm[] = {2, 0, 1};
  CHECK(check([&] { return sum(mul(permute_rows(a, perm), c)); }, {a}) < 1e-7);
  CHECK(check([&] { return mean(mul(a, c)); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(max_rows(a), reshape(v4, {1, 4}))); }, {a}) < 1e-7);
  const std::size_t off[] = {0, 1, 3};
  CHECK(check([&] { return sum(mul(segment_max_rows(a, off), slice_rows(c, 0, 2))); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(softmax_rows(a), c)); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(log_softmax_rows(a), c)); }, {a}) < 1e-7);
  CHECK(check([&] { return sum(mul(layer_norm_rows(a, v4, v4), c)); }, {a, v4}) < 1e-7);
  CHECK(check([&] { return cosine(v4, slice_rows(c, 0, 1)); }, {v4}) < 1e-7);
  CHECK(check([&] { return sum(mul(cosine_rows(a, v4), Tensor::vector({1, -2, 3}))); }, {a, v4}) <
        1e-7);
  const std::size_t t[] = {1, 3, 0};
  CHECK(check([&] { return cross_entropy_rows(a, t); }, {a}) < 1e-7);
  CHECK(check([&] { return mse(a, c); }, {a, c}) < 1e-7);
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  CHECK(check([&] { return kl_to_logits(p, v4); }, {v4}) < 1e-7);
}

TEST_CASE("relu passes gradient only where the input is positive") {
  Tensor x = Tensor::vector({-1.0, 0.5, 2.0}, true);
  sum(relu(x)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
}
