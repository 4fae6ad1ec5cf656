#include "corrtrack/tensor.hpp"

#include "doctest.h"

using namespace corrtrack;

TEST_CASE("tensor construction and element access") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.size() == 6);
  CHECK(z.at(1, 2) == 0.0);

  Tensor f = Tensor::full({4}, 2.5);
  for (double v : f.values()) CHECK(v == 2.5);

  Tensor d = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(d.at(0, 1) == 2.0);
  CHECK(d.at(1, 0) == 3.0);

  Tensor i = Tensor::identity(3);
  CHECK(i.at(0, 0) == 1.0);
  CHECK(i.at(0, 1) == 0.0);
  CHECK(i.at(2, 2) == 1.0);

  CHECK(Tensor::scalar(7.0).value() == 7.0);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(d.value(), ShapeError);
}

TEST_CASE("tensor handles share storage, clone does not") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = a;
  CHECK(a.same_storage(b));
  b.data()[0] = 9;
  CHECK(a.data()[0] == 9);

  Tensor c = a.clone();
  CHECK_FALSE(a.same_storage(c));
  c.data()[0] = 5;
  CHECK(a.data()[0] == 9);
}

TEST_CASE("tape activation nests and restores") {
  CHECK(GradientTape::active() == nullptr);
  {
    GradientTape outer;
    CHECK(GradientTape::active() == &outer);
    {
      GradientTape inner;
      CHECK(GradientTape::active() == &inner);
    }
    CHECK(GradientTape::active() == &outer);
  }
  CHECK(GradientTape::active() == nullptr);
}

TEST_CASE("accumulate sums into the gradient slot") {
  Tensor t = Tensor::from_data({2}, {0, 0}, /*requires_grad=*/true);
  GradientTape tape;
  tape.accumulate(t, Tensor::from_data({2}, {1, 2}));
  tape.accumulate(t, Tensor::from_data({2}, {10, 20}));
  Tensor g = tape.grad(t);
  REQUIRE(g.defined());
  CHECK(g.data()[0] == 11);
  CHECK(g.data()[1] == 22);

  Tensor frozen = Tensor::from_data({2}, {0, 0});
  tape.accumulate(frozen, Tensor::from_data({2}, {1, 1}));
  CHECK_FALSE(tape.grad(frozen).defined());
}
