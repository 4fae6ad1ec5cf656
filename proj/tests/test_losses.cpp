#include "corrtrack/losses.hpp"

#include <cmath>

#include "corrtrack/gradcheck.hpp"
#include "corrtrack/ops.hpp"
#include "corrtrack/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace corrtrack;

TEST_CASE("plain iou/giou hand cases") {
  Box a{0, 0, 1, 1};
  CHECK(box_iou(a, a) == 1.0);
  CHECK(box_giou(a, a) == 1.0);

  // unit squares sharing an edge: hull 2x1, union 2, intersection 0
  Box b{1, 0, 2, 1};
  CHECK(box_iou(a, b) == 0.0);
  CHECK(box_giou(a, b) == 0.0);

  // half overlap: inter 0.5, union 1.5, hull 1.5 -> giou = iou = 1/3
  Box c{0.5, 0, 1.5, 1};
  CHECK(oracle::near(box_iou(a, c), 1.0 / 3.0));
  CHECK(oracle::near(box_giou(a, c), 1.0 / 3.0));

  // far-apart tiny boxes approach -1
  Box t1{0, 0, 1e-4, 1e-4}, t2{100, 100, 100.0001, 100.0001};
  CHECK(box_giou(t1, t2) < -0.999);

  bool degenerate = false;
  CHECK(box_giou(Box{0.5, 0.5, 0.5, 0.5}, Box{0.2, 0.2, 0.2, 0.2},
                 &degenerate) == 0.0);
  CHECK(degenerate);
}

TEST_CASE("plain giou is symmetric and matches the area oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    Box a{rng.uniform(), rng.uniform(), 0, 0};
    a.x1 = a.x0 + rng.uniform(0.05, 0.5);
    a.y1 = a.y0 + rng.uniform(0.05, 0.5);
    Box b{rng.uniform(), rng.uniform(), 0, 0};
    b.x1 = b.x0 + rng.uniform(0.05, 0.5);
    b.y1 = b.y0 + rng.uniform(0.05, 0.5);
    const double g = box_giou(a, b);
    CHECK(oracle::near(g, box_giou(b, a)));
    CHECK(g > -1.0);
    CHECK(g <= 1.0);
    const double pa[4] = {a.x0, a.y0, a.x1, a.y1};
    const double pb[4] = {b.x0, b.y0, b.x1, b.y1};
    CHECK(oracle::near(g, oracle::giou(pa, pb)));
    CHECK(oracle::near(box_iou(a, b), oracle::iou(pa, pb)));
  }
}

TEST_CASE("giou equals iou when the union fills the hull") {
  // b inside a: hull == a == union
  Box a{0, 0, 1, 1}, b{0.25, 0.25, 0.75, 0.75};
  CHECK(oracle::near(box_giou(a, b), box_iou(a, b)));
}

TEST_CASE("differentiable giou agrees with the plain version") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    Box a{rng.uniform(), rng.uniform(), 0, 0};
    a.x1 = a.x0 + rng.uniform(0.05, 0.5);
    a.y1 = a.y0 + rng.uniform(0.05, 0.5);
    Box b{rng.uniform(), rng.uniform(), 0, 0};
    b.x1 = b.x0 + rng.uniform(0.05, 0.5);
    b.y1 = b.y0 + rng.uniform(0.05, 0.5);
    const double g = giou_t(boxt_const(a), boxt_const(b)).value();
    CHECK(oracle::near(g, box_giou(a, b), 1e-9));
  }

  bool flagged = false;
  Tensor z = giou_t(boxt_const(Box{0.1, 0.1, 0.1, 0.1}),
                    boxt_const(Box{0.9, 0.9, 0.9, 0.9}), &flagged);
  CHECK(z.value() == 0.0);
  CHECK(flagged);
}

TEST_CASE("l1_box sums four coordinate gaps") {
  Box a{0.2, 0.3, 0.6, 0.8};
  CHECK(l1_box(boxt_const(a), boxt_const(a)).value() == 0.0);
  Box b{0.3, 0.4, 0.7, 0.9};  // every corner off by 0.1
  CHECK(oracle::near(l1_box(boxt_const(a), boxt_const(b)).value(), 0.4));
  CHECK(oracle::near(l1_box(boxt_const(a), boxt_const(b)).value(),
                     l1_box(boxt_const(b), boxt_const(a)).value()));
}

TEST_CASE("total_loss composes the three weighted terms") {
  Box gt{0.2, 0.2, 0.7, 0.7};
  LossWeights w;

  // perfect prediction, perfect iou estimate -> exactly zero
  Tensor iou_hat = Tensor::scalar(0.83);
  Tensor zero = total_loss(boxt_const(gt), boxt_const(gt), iou_hat, 0.83, w);
  CHECK(oracle::near(zero.value(), 0.0, 1e-9));  // eps guards leave ~1e-11

  // giou-only weighting reproduces the disjoint-edge value 1
  LossWeights giou_only{1.0, 0.0, 0.0};
  Box edge{0.7, 0.2, 1.2, 0.7};  // shares an edge with gt, same size
  Tensor l = total_loss(boxt_const(edge), boxt_const(gt), Tensor::scalar(0.0),
                        0.0, giou_only);
  CHECK(oracle::near(l.value(), 1.0, 1e-9));

  LossWeights bad{-1.0, 0.0, 0.0};
  CHECK_THROWS(total_loss(boxt_const(gt), boxt_const(gt), iou_hat, 0.5, bad));
  LossWeights all_zero{0.0, 0.0, 0.0};
  CHECK_THROWS(
      total_loss(boxt_const(gt), boxt_const(gt), iou_hat, 0.5, all_zero));
}

TEST_CASE("total_loss gradients match finite differences") {
  Rng rng(33);
  LossWeights w;
  for (int trial = 0; trial < 5; ++trial) {
    Box gt{rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), 0, 0};
    gt.x1 = gt.x0 + rng.uniform(0.2, 0.5);
    gt.y1 = gt.y0 + rng.uniform(0.2, 0.5);
    Box pr{gt.x0 + rng.uniform(-0.05, 0.05), gt.y0 + rng.uniform(-0.05, 0.05),
           gt.x1 + rng.uniform(-0.05, 0.05), gt.y1 + rng.uniform(-0.05, 0.05)};
    BoxT pred = boxt_const(pr);
    pred.x0.set_requires_grad(true);
    pred.y0.set_requires_grad(true);
    pred.x1.set_requires_grad(true);
    pred.y1.set_requires_grad(true);
    Tensor iou_hat = Tensor::scalar(rng.uniform(0.0, 1.0), true);
    BoxT gtt = boxt_const(gt);
    auto fwd = [&] { return total_loss(pred, gtt, iou_hat, 0.6, w); };
    GradCheckOptions opts;
    opts.eps = 1e-6;  // tight tolerance needs a small step
    auto res = check_gradients(fwd,
                               {{"x0", pred.x0},
                                {"y0", pred.y0},
                                {"x1", pred.x1},
                                {"y1", pred.y1},
                                {"iou", iou_hat}},
                               opts);
    CHECK_MESSAGE(res.ok(1e-5), res.describe());
  }
}

TEST_CASE("jittered box sampling") {
  Box gt{0.3, 0.3, 0.7, 0.7};

  SUBCASE("zero jitter reproduces the ground truth") {
    Rng rng(34);
    auto samples = sample_jittered_boxes(gt, 5, rng, 0.0, 0.0);
    for (const auto& s : samples) {
      CHECK(oracle::near(s.box.x0, gt.x0));
      CHECK(oracle::near(s.box.x1, gt.x1));
      CHECK(oracle::near(s.iou, 1.0));
    }
  }

  SUBCASE("recorded ious match an independent recomputation") {
    Rng rng(35);
    auto samples = sample_jittered_boxes(gt, 50, rng);
    for (const auto& s : samples) {
      const double pa[4] = {s.box.x0, s.box.y0, s.box.x1, s.box.y1};
      const double pg[4] = {gt.x0, gt.y0, gt.x1, gt.y1};
      CHECK(oracle::near(s.iou, oracle::iou(pa, pg)));
      CHECK(s.box.x0 >= 0.0);
      CHECK(s.box.x1 <= 1.0);
      CHECK(s.box.valid());
    }
  }

  SUBCASE("fixed seed, fixed list") {
    Rng r1(36), r2(36);
    auto s1 = sample_jittered_boxes(gt, 10, r1);
    auto s2 = sample_jittered_boxes(gt, 10, r2);
    for (std::size_t i = 0; i < s1.size(); ++i) {
      CHECK(s1[i].box.x0 == s2[i].box.x0);
      CHECK(s1[i].iou == s2[i].iou);
    }
  }
}
