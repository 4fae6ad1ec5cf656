#include <cmath>

#include "corrtrack/gradcheck.hpp"
#include "corrtrack/ops.hpp"
#include "corrtrack/random.hpp"
#include "corrtrack/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace corrtrack;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, bool requires_grad = false,
                   double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps entries away from a kink (0 for relu/abs, equality for min/max).
void push_from_zero(Tensor& t, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::fabs(v) < margin) v = v < 0 ? -margin : margin;
  }
}

GradCheckResult grad_of(const std::function<Tensor()>& fwd,
                        std::vector<std::pair<std::string, Tensor>> params) {
  return check_gradients(fwd, params, {});
}

}  // namespace

TEST_CASE("matmul matches the triple loop and a hand-computed product") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 17.0);
  CHECK(c.at(1, 0) == 39.0);

  Rng rng(11);
  Tensor x = rand_tensor(rng, {5, 7});
  Tensor y = rand_tensor(rng, {7, 3});
  Tensor z = matmul(x, y);
  auto ref = oracle::matmul(x.values(), 5, 7, y.values(), 3);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(oracle::near(z.data()[i], ref[i]));

  CHECK_THROWS_AS(matmul(x, x), ShapeError);
}

TEST_CASE("matmul gradients against finite differences") {
  Rng rng(12);
  Tensor a = rand_tensor(rng, {3, 4}, true);
  Tensor b = rand_tensor(rng, {4, 2}, true);
  Tensor w = rand_tensor(rng, {3, 2});
  auto fwd = [&] { return mean_all(mul(matmul(a, b), w)); };
  auto res = grad_of(fwd, {{"a", a}, {"b", b}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("transpose round-trips and routes gradients") {
  Rng rng(13);
  Tensor a = rand_tensor(rng, {3, 5}, true);
  Tensor t = transpose(a);
  CHECK(t.dim(0) == 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(t.at(j, i) == a.at(i, j));

  Tensor w = rand_tensor(rng, {5, 3});
  auto fwd = [&] { return mean_all(mul(transpose(a), w)); };
  auto res = grad_of(fwd, {{"a", a}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("elementwise arithmetic values and gradients") {
  Rng rng(14);
  Tensor a = rand_tensor(rng, {4, 3}, true);
  Tensor b = rand_tensor(rng, {4, 3}, true, 0.5, 2.0);  // clear of zero for div
  Tensor w = rand_tensor(rng, {4, 3});

  CHECK(add(a, b).data()[5] == a.data()[5] + b.data()[5]);
  CHECK(sub(a, b).data()[5] == a.data()[5] - b.data()[5]);
  CHECK(mul(a, b).data()[5] == a.data()[5] * b.data()[5]);
  CHECK(div(a, b).data()[5] == a.data()[5] / b.data()[5]);

  for (auto op : {add, sub, mul, div}) {
    auto fwd = [&] { return mean_all(mul(op(a, b), w)); };
    auto res = grad_of(fwd, {{"a", a}, {"b", b}});
    CHECK_MESSAGE(res.ok(1e-4), res.describe());
  }
}

TEST_CASE("min/max pick the right side and break ties toward the first arg") {
  Tensor a = Tensor::from_data({3}, {1, 5, 2});
  Tensor b = Tensor::from_data({3}, {4, 5, 0});
  Tensor mn = min_ew(a, b);
  Tensor mx = max_ew(a, b);
  CHECK(mn.data()[0] == 1);
  CHECK(mn.data()[2] == 0);
  CHECK(mx.data()[0] == 4);
  CHECK(mx.data()[2] == 2);

  // Tie at index 1: the whole gradient must land on a, none on b.
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  {
    GradientTape tape;
    tape.backward(sum_all(min_ew(a, b)));
    CHECK(tape.grad(a).data()[1] == 1.0);
    CHECK(tape.grad(b).data()[1] == 0.0);
  }

  Rng rng(15);
  Tensor x = rand_tensor(rng, {4, 4}, true);
  Tensor y = rand_tensor(rng, {4, 4}, true);
  // separate the args so finite differences never cross the kink
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::fabs(x.data()[i] - y.data()[i]) < 1e-2)
      y.data()[i] += y.data()[i] >= x.data()[i] ? 1e-2 : -1e-2;
  Tensor w = rand_tensor(rng, {4, 4});
  for (auto op : {min_ew, max_ew}) {
    auto fwd = [&] { return mean_all(mul(op(x, y), w)); };
    auto res = grad_of(fwd, {{"x", x}, {"y", y}});
    CHECK_MESSAGE(res.ok(1e-4), res.describe());
  }
}

TEST_CASE("relu and abs away from the kink") {
  Rng rng(16);
  Tensor a = rand_tensor(rng, {5, 5}, true);
  push_from_zero(a, 1e-2);
  Tensor w = rand_tensor(rng, {5, 5});
  CHECK(relu(Tensor::from_data({2}, {-3, 4})).data()[0] == 0.0);
  CHECK(relu(Tensor::from_data({2}, {-3, 4})).data()[1] == 4.0);
  CHECK(abs_ew(Tensor::from_data({2}, {-3, 4})).data()[0] == 3.0);

  for (auto op : {relu, abs_ew}) {
    auto fwd = [&] { return mean_all(mul(op(a), w)); };
    auto res = grad_of(fwd, {{"a", a}});
    CHECK_MESSAGE(res.ok(1e-4), res.describe());
  }
}

TEST_CASE("scale, add_const and add_rowvec") {
  Rng rng(17);
  Tensor a = rand_tensor(rng, {3, 4}, true);
  Tensor v = rand_tensor(rng, {4}, true);
  Tensor w = rand_tensor(rng, {3, 4});

  Tensor s = scale(a, -2.5);
  CHECK(oracle::near(s.data()[7], -2.5 * a.data()[7]));
  CHECK(oracle::near(add_const(a, 3.0).data()[2], a.data()[2] + 3.0));
  Tensor r = add_rowvec(a, v);
  CHECK(oracle::near(r.at(2, 1), a.at(2, 1) + v.data()[1]));

  auto fwd = [&] {
    return mean_all(mul(add_rowvec(add_const(scale(a, 1.7), 0.3), v), w));
  };
  auto res = grad_of(fwd, {{"a", a}, {"v", v}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("softmax rows: frozen values, normalization, gradients") {
  // exp(ln 1) : exp(ln 1) : exp(ln 2) = 1 : 1 : 2
  Tensor x = Tensor::from_data(
      {1, 3}, {std::log(1.0), std::log(1.0), std::log(2.0)});
  Tensor s = softmax_rows(x);
  CHECK(oracle::near(s.data()[0], 0.25));
  CHECK(oracle::near(s.data()[1], 0.25));
  CHECK(oracle::near(s.data()[2], 0.5));

  // max-subtraction keeps huge logits finite
  Tensor big = Tensor::from_data({1, 2}, {1000.0, 1000.0});
  CHECK(oracle::near(softmax_rows(big).data()[0], 0.5));

  Rng rng(18);
  Tensor a = rand_tensor(rng, {6, 9}, true);
  Tensor sm = softmax_rows(a);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    auto ref = oracle::softmax_row(std::vector<double>(
        a.data() + i * 9, a.data() + (i + 1) * 9));
    for (std::size_t j = 0; j < 9; ++j) {
      sum += sm.at(i, j);
      CHECK(oracle::near(sm.at(i, j), ref[j]));
    }
    CHECK(oracle::near(sum, 1.0));
  }

  Tensor w = rand_tensor(rng, {6, 9});
  auto fwd = [&] { return mean_all(mul(softmax_rows(a), w)); };
  auto res = grad_of(fwd, {{"a", a}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("softmax audit scope sees every call") {
  Rng rng(19);
  Tensor a = rand_tensor(rng, {4, 5});
  SoftmaxAuditScope audit;
  softmax_rows(a);
  softmax_rows(a);
  CHECK(audit.rows_seen() == 8);
  CHECK(audit.max_row_deviation() < 1e-12);
}

TEST_CASE("layer_norm: closed form, oracle rows, gradients") {
  // Row [1, 3]: mean 2, population var 1 -> normalized to about [-1, 1].
  Tensor x = Tensor::from_data({1, 2}, {1, 3});
  Tensor g1 = Tensor::full({2}, 1.0);
  Tensor b0 = Tensor::zeros({2});
  Tensor y = layer_norm(x, g1, b0, 1e-5);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(oracle::near(y.data()[0], -expect));
  CHECK(oracle::near(y.data()[1], expect));

  Rng rng(20);
  Tensor a = rand_tensor(rng, {4, 6}, true);
  Tensor gamma = rand_tensor(rng, {6}, true, 0.5, 1.5);
  Tensor beta = rand_tensor(rng, {6}, true);
  Tensor out = layer_norm(a, gamma, beta, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) {
    auto ref = oracle::layer_norm_row(
        std::vector<double>(a.data() + i * 6, a.data() + (i + 1) * 6),
        gamma.values(), beta.values(), 1e-5);
    for (std::size_t j = 0; j < 6; ++j) CHECK(oracle::near(out.at(i, j), ref[j]));
  }

  Tensor w = rand_tensor(rng, {4, 6});
  auto fwd = [&] { return mean_all(mul(layer_norm(a, gamma, beta, 1e-5), w)); };
  auto res = grad_of(fwd, {{"a", a}, {"gamma", gamma}, {"beta", beta}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("reductions and reshape") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(sum_all(a).value() == 10.0);
  CHECK(mean_all(a).value() == 2.5);

  Rng rng(21);
  Tensor x = rand_tensor(rng, {3, 4}, true);
  auto fwd = [&] {
    Tensor r = reshape(x, {4, 3});
    return sum_all(mul(r, r));
  };
  auto res = grad_of(fwd, {{"x", x}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("slicing and concatenation invert each other") {
  Rng rng(22);
  Tensor a = rand_tensor(rng, {4, 6}, true);
  Tensor left = slice_cols(a, 0, 2);
  Tensor right = slice_cols(a, 2, 6);
  Tensor back = concat_cols({left, right});
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(back.data()[i] == a.data()[i]);

  Tensor top = slice_rows(a, 0, 1);
  Tensor rest = slice_rows(a, 1, 4);
  Tensor stacked = concat_rows({top, rest});
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(stacked.data()[i] == a.data()[i]);

  Tensor w = rand_tensor(rng, {4, 6});
  auto fwd = [&] {
    Tensor z = concat_rows({slice_rows(a, 0, 2), slice_rows(a, 2, 4)});
    Tensor z2 = concat_cols({slice_cols(z, 0, 3), slice_cols(z, 3, 6)});
    return mean_all(mul(z2, w));
  };
  auto res = grad_of(fwd, {{"a", a}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("linear is matmul plus bias broadcast") {
  Rng rng(23);
  Tensor x = rand_tensor(rng, {5, 3}, true);
  Tensor w = rand_tensor(rng, {3, 4}, true);
  Tensor b = rand_tensor(rng, {4}, true);
  Tensor out = linear(x, w, b);
  auto ref = oracle::matmul(x.values(), 5, 3, w.values(), 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(oracle::near(out.at(i, j), ref[i * 4 + j] + b.data()[j]));

  Tensor wt = rand_tensor(rng, {5, 4});
  auto fwd = [&] { return mean_all(mul(linear(x, w, b), wt)); };
  auto res = grad_of(fwd, {{"x", x}, {"w", w}, {"b", b}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());

  Tensor nob = linear(x, w, Tensor());
  for (std::size_t i = 0; i < 20; ++i)
    CHECK(oracle::near(nob.data()[i], ref[i]));
}

TEST_CASE("conv2d against direct convolution") {
  Rng rng(24);
  const std::size_t c = 2, h = 5, w = 4, co = 3;
  Tensor x = rand_tensor(rng, {c, h, w}, true);
  Tensor wt = rand_tensor(rng, {c * 9, co}, true);
  Tensor b = rand_tensor(rng, {co}, true);

  SUBCASE("stride 1, pad 1 keeps the grid") {
    Tensor out = conv2d(x, wt, b, c, h, w, 3, 3, 1, 1);
    CHECK(out.dim(0) == h * w);
    auto ref = oracle::conv2d(x.values(), c, h, w, wt.values(), b.values(),
                              co, 3, 3, 1, 1);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(oracle::near(out.data()[i], ref[i]));
  }

  SUBCASE("stride 2 halves the grid") {
    Tensor out = conv2d(x, wt, b, c, h, w, 3, 3, 2, 1);
    auto ref = oracle::conv2d(x.values(), c, h, w, wt.values(), b.values(),
                              co, 3, 3, 2, 1);
    CHECK(out.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(oracle::near(out.data()[i], ref[i]));
  }

  SUBCASE("gradients flow through im2col") {
    Tensor wt2 = rand_tensor(rng, {h * w, co});
    auto fwd = [&] {
      return mean_all(mul(conv2d(x, wt, b, c, h, w, 3, 3, 1, 1), wt2));
    };
    auto res = grad_of(fwd, {{"x", x}, {"wt", wt}, {"b", b}});
    CHECK_MESSAGE(res.ok(1e-4), res.describe());
  }
}

TEST_CASE("roi pooling: constant map, centered box, gradients") {
  const std::size_t h = 6, w = 6, c = 2;
  // A constant map must pool to that constant wherever the box sits.
  Tensor flat = Tensor::full({h * w, c}, 3.25);
  const double box[4] = {0.1, 0.2, 0.7, 0.9};
  Tensor pooled = roi_pool_bilinear(flat, h, w, box, 3);
  CHECK(pooled.dim(0) == 9);
  for (double v : pooled.values()) CHECK(oracle::near(v, 3.25));

  // Box covering one cell exactly samples near that cell's value.
  Rng rng(25);
  Tensor x = rand_tensor(rng, {h * w, c}, true);
  const double cell_box[4] = {2.0 / w, 3.0 / h, 3.0 / w, 4.0 / h};
  Tensor one = roi_pool_bilinear(x, h, w, cell_box, 1);
  // oracle: average the 2x2 bilinear samples by hand
  for (std::size_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (int sy = 0; sy < 2; ++sy)
      for (int sx = 0; sx < 2; ++sx) {
        const double ny = 3.0 / h + ((sy + 0.5) / 2.0) * (1.0 / h);
        const double nx = 2.0 / w + ((sx + 0.5) / 2.0) * (1.0 / w);
        acc += oracle::bilinear(x.values(), h, w, c, nx * w - 0.5,
                                ny * h - 0.5, ci);
      }
    CHECK(oracle::near(one.at(0, ci), acc / 4.0));
  }

  Tensor wt = rand_tensor(rng, {9, c});
  auto fwd = [&] {
    return mean_all(mul(roi_pool_bilinear(x, h, w, box, 3), wt));
  };
  auto res = grad_of(fwd, {{"x", x}});
  CHECK_MESSAGE(res.ok(1e-4), res.describe());
}

TEST_CASE("non-finite results are rejected, not propagated") {
  Tensor a = Tensor::from_data({1}, {1.0});
  Tensor z = Tensor::from_data({1}, {0.0});
  CHECK_THROWS_AS(div(a, z), NumericError);
  Tensor huge = Tensor::from_data({1}, {1e308});
  CHECK_THROWS_AS(mul(huge, huge), NumericError);
}

TEST_CASE("tape prunes branches that do not reach the loss") {
  Rng rng(26);
  Tensor a = rand_tensor(rng, {2, 2}, true);
  Tensor b = rand_tensor(rng, {2, 2}, true);
  GradientTape tape;
  Tensor used = mul(a, a);
  mul(b, b);  // recorded but disconnected from the loss
  tape.backward(sum_all(used));
  CHECK(tape.grad(a).defined());
  CHECK_FALSE(tape.grad(b).defined());
}

TEST_CASE("second backward on a fresh tape is consistent") {
  Rng rng(27);
  Tensor a = rand_tensor(rng, {3, 3}, true);
  double g1, g2;
  {
    GradientTape tape;
    tape.backward(sum_all(mul(a, a)));
    g1 = tape.grad(a).data()[4];
  }
  {
    GradientTape tape;
    tape.backward(sum_all(mul(a, a)));
    g2 = tape.grad(a).data()[4];
  }
  CHECK(g1 == g2);
  CHECK(oracle::near(g1, 2.0 * a.data()[4]));
}
