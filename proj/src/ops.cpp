#include "corrtrack/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace corrtrack {

namespace {

// Single-threaded BLAS keeps results bit-reproducible run to run.
const bool g_blas_init = [] {
  openblas_set_num_threads(1);
  return true;
}();

bool tape_wants(const std::initializer_list<Tensor>& inputs) {
  if (!GradientTape::active()) return false;
  for (const Tensor& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

void expect_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    std::ostringstream os;
    os << op << ": expected rank-" << r << " tensor, got shape "
       << shape_str(t.shape());
    throw ShapeError(os.str());
  }
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << shape_str(a.shape()) << " vs "
       << shape_str(b.shape());
    throw ShapeError(os.str());
  }
}

// Plain dgemm wrapper; never records.
Tensor raw_matmul(const Tensor& a, const Tensor& b, bool trans_a,
                  bool trans_b) {
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    std::ostringstream os;
    os << "matmul: inner extents disagree, " << shape_str(a.shape())
       << (trans_a ? "^T" : "") << " x " << shape_str(b.shape())
       << (trans_b ? "^T" : "");
    throw ShapeError(os.str());
  }
  Tensor out = Tensor::zeros({m, n});
  if (m == 0 || n == 0) return out;
  if (k == 0) return out;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a.data(),
              static_cast<int>(a.dim(1)), b.data(),
              static_cast<int>(b.dim(1)), 0.0, out.data(),
              static_cast<int>(n));
  return out;
}

struct AuditState {
  double max_dev = 0.0;
  std::size_t rows = 0;
};
thread_local AuditState* g_audit = nullptr;

}  // namespace

namespace detail {

void check_finite(const Tensor& t, const char* op_name) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name) +
                         ": produced a non-finite value");
    }
  }
}

}  // namespace detail

using detail::check_finite;

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  Tensor out = raw_matmul(a, b, false, false);
  check_finite(out, "matmul");
  if (tape_wants({a, b})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(out, [a, b](const Tensor& g,
                                               GradientTape& tape) {
      if (a.requires_grad()) tape.accumulate(a, raw_matmul(g, b, false, true));
      if (b.requires_grad()) tape.accumulate(b, raw_matmul(a, g, true, false));
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  expect_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data()[j * m + i] = a.data()[i * n + j];
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, m, n](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros({m, n});
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
              ga.data()[j * n + i] = g.data()[i * m + j];
          tape.accumulate(a, ga);
        });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 Bwd bwd) {
  expect_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = fwd(pa[i], pb[i]);
  check_finite(out, name);
  if (tape_wants({a, b})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, b, bwd](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros(a.shape());
          Tensor gb = Tensor::zeros(b.shape());
          for (std::size_t i = 0; i < g.size(); ++i) {
            auto [da, db] = bwd(a.data()[i], b.data()[i], g.data()[i]);
            ga.data()[i] = da;
            gb.data()[i] = db;
          }
          if (a.requires_grad()) tape.accumulate(a, ga);
          if (b.requires_grad()) tape.accumulate(b, gb);
        });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g) {
        return std::pair{g / y, -g * x / (y * y)};
      });
}

Tensor min_ew(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "min_ew", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double g) {
        return x <= y ? std::pair{g, 0.0} : std::pair{0.0, g};
      });
}

Tensor max_ew(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "max_ew", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double g) {
        return x >= y ? std::pair{g, 0.0} : std::pair{0.0, g};
      });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_ew(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = fwd(a.data()[i]);
  check_finite(out, name);
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, bwd](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros(a.shape());
          for (std::size_t i = 0; i < g.size(); ++i)
            ga.data()[i] = bwd(a.data()[i], g.data()[i]);
          tape.accumulate(a, ga);
        });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_ew(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor abs_ew(const Tensor& a) {
  return unary_ew(
      a, "abs_ew", [](double x) { return std::fabs(x); },
      [](double x, double g) {
        if (x > 0.0) return g;
        if (x < 0.0) return -g;
        return 0.0;
      });
}

Tensor scale(const Tensor& a, double c) {
  return unary_ew(
      a, "scale", [c](double x) { return c * x; },
      [c](double, double g) { return c * g; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_ew(
      a, "add_const", [c](double x) { return x + c; },
      [](double, double g) { return g; });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  expect_rank(a, 2, "add_rowvec");
  expect_rank(v, 1, "add_rowvec");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (v.dim(0) != n) {
    throw ShapeError("add_rowvec: vector length " + std::to_string(v.dim(0)) +
                     " does not match column count " + std::to_string(n));
  }
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data()[i * n + j] = a.data()[i * n + j] + v.data()[j];
  check_finite(out, "add_rowvec");
  if (tape_wants({a, v})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, v, m, n](const Tensor& g, GradientTape& tape) {
          if (a.requires_grad()) tape.accumulate(a, g.clone());
          if (v.requires_grad()) {
            Tensor gv = Tensor::zeros({n});
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                gv.data()[j] += g.data()[i * n + j];
            tape.accumulate(v, gv);
          }
        });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  expect_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (n == 0) throw ShapeError("softmax_rows: empty rows");
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data() + i * n;
    double* orow = out.data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= sum;
  }
  check_finite(out, "softmax_rows");
  if (g_audit) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += out.data()[i * n + j];
      g_audit->max_dev = std::max(g_audit->max_dev, std::fabs(s - 1.0));
    }
    g_audit->rows += m;
  }
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, out, m, n](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros({m, n});
          for (std::size_t i = 0; i < m; ++i) {
            const double* s = out.data() + i * n;
            const double* gr = g.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gr[j] * s[j];
            for (std::size_t j = 0; j < n; ++j)
              ga.data()[i * n + j] = s[j] * (gr[j] - dot);
          }
          tape.accumulate(a, ga);
        });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  expect_rank(x, 2, "layer_norm");
  expect_rank(gamma, 1, "layer_norm");
  expect_rank(beta, 1, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.dim(0) != n || beta.dim(0) != n) {
    throw ShapeError("layer_norm: gamma/beta length must equal column count " +
                     std::to_string(n));
  }
  Tensor out = Tensor::zeros({m, n});
  Tensor xhat = Tensor::zeros({m, n});   // cached for backward
  Tensor inv_s = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_s.data()[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat.data()[i * n + j] = xh;
      out.data()[i * n + j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }
  check_finite(out, "layer_norm");
  if (tape_wants({x, gamma, beta})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [x, gamma, beta, xhat, inv_s, m, n](const Tensor& g,
                                                 GradientTape& tape) {
          if (gamma.requires_grad()) {
            Tensor gg = Tensor::zeros({n});
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                gg.data()[j] += g.data()[i * n + j] * xhat.data()[i * n + j];
            tape.accumulate(gamma, gg);
          }
          if (beta.requires_grad()) {
            Tensor gb = Tensor::zeros({n});
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                gb.data()[j] += g.data()[i * n + j];
            tape.accumulate(beta, gb);
          }
          if (x.requires_grad()) {
            Tensor gx = Tensor::zeros({m, n});
            for (std::size_t i = 0; i < m; ++i) {
              double mean_dxh = 0.0, mean_dxh_xh = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double dxh = g.data()[i * n + j] * gamma.data()[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xhat.data()[i * n + j];
              }
              mean_dxh /= static_cast<double>(n);
              mean_dxh_xh /= static_cast<double>(n);
              for (std::size_t j = 0; j < n; ++j) {
                const double dxh = g.data()[i * n + j] * gamma.data()[j];
                gx.data()[i * n + j] =
                    (dxh - mean_dxh - xhat.data()[i * n + j] * mean_dxh_xh) *
                    inv_s.data()[i];
              }
            }
            tape.accumulate(x, gx);
          }
        });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum_all");
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(out,
                                   [a](const Tensor& g, GradientTape& tape) {
                                     tape.accumulate(
                                         a, Tensor::full(a.shape(), g.value()));
                                   });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  check_finite(out, "mean_all");
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, inv](const Tensor& g, GradientTape& tape) {
          tape.accumulate(a, Tensor::full(a.shape(), g.value() * inv));
        });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  Tensor out = Tensor::from_data(shape, a.values());
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a](const Tensor& g, GradientTape& tape) {
          tape.accumulate(a, Tensor::from_data(a.shape(), g.values()));
        });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  expect_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (c0 >= c1 || c1 > n) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") for " + std::to_string(n) +
                     " columns");
  }
  const std::size_t w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j)
      out.data()[i * w + j] = a.data()[i * n + c0 + j];
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, c0, w, m, n](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros({m, n});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
              ga.data()[i * n + c0 + j] = g.data()[i * w + j];
          tape.accumulate(a, ga);
        });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  expect_rank(a, 2, "slice_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (r0 >= r1 || r1 > m) {
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") for " + std::to_string(m) +
                     " rows");
  }
  const std::size_t h = r1 - r0;
  Tensor out = Tensor::zeros({h, n});
  std::copy(a.data() + r0 * n, a.data() + r1 * n, out.data());
  if (tape_wants({a})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [a, r0, h, m, n](const Tensor& g, GradientTape& tape) {
          Tensor ga = Tensor::zeros({m, n});
          std::copy(g.data(), g.data() + h * n, ga.data() + r0 * n);
          tape.accumulate(a, ga);
        });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    expect_rank(p, 2, "concat_cols");
    if (p.dim(0) != m)
      throw ShapeError("concat_cols: row counts disagree");
    n += p.dim(1);
  }
  Tensor out = Tensor::zeros({m, n});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out.data()[i * n + off + j] = p.data()[i * w + j];
    off += w;
  }
  bool wants = false;
  if (GradientTape::active())
    for (const Tensor& p : parts)
      if (p.requires_grad()) wants = true;
  if (wants) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [parts, m, n](const Tensor& g, GradientTape& tape) {
          std::size_t off = 0;
          for (const Tensor& p : parts) {
            const std::size_t w = p.dim(1);
            if (p.requires_grad()) {
              Tensor gp = Tensor::zeros({m, w});
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                  gp.data()[i * w + j] = g.data()[i * n + off + j];
              tape.accumulate(p, gp);
            }
            off += w;
          }
        });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t n = parts[0].dim(1);
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    expect_rank(p, 2, "concat_rows");
    if (p.dim(1) != n)
      throw ShapeError("concat_rows: column counts disagree");
    m += p.dim(0);
  }
  Tensor out = Tensor::zeros({m, n});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off * n);
    off += p.dim(0);
  }
  bool wants = false;
  if (GradientTape::active())
    for (const Tensor& p : parts)
      if (p.requires_grad()) wants = true;
  if (wants) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [parts, n](const Tensor& g, GradientTape& tape) {
          std::size_t off = 0;
          for (const Tensor& p : parts) {
            const std::size_t h = p.dim(0);
            if (p.requires_grad()) {
              Tensor gp = Tensor::zeros({h, n});
              std::copy(g.data() + off * n, g.data() + (off + h) * n,
                        gp.data());
              tape.accumulate(p, gp);
            }
            off += h;
          }
        });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul(x, w);
  if (b.defined()) out = add_rowvec(out, b);
  return out;
}

Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t pad) {
  expect_rank(x, 3, "im2col");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (stride == 0) throw ShapeError("im2col: stride must be positive");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw ShapeError("im2col: kernel larger than padded input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t patch = c * kh * kw;
  Tensor out = Tensor::zeros({ho * wo, patch});
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = out.data() + (oy * wo + ox) * patch;
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) -
                            static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + kx) -
                            static_cast<long>(pad);
            double v = 0.0;
            if (iy >= 0 && iy < static_cast<long>(h) && ix >= 0 &&
                ix < static_cast<long>(w)) {
              v = x.data()[(ci * h + iy) * w + ix];
            }
            row[(ci * kh + ky) * kw + kx] = v;
          }
        }
      }
    }
  }
  if (tape_wants({x})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [x, kh, kw, stride, pad, c, h, w, ho, wo,
              patch](const Tensor& g, GradientTape& tape) {
          Tensor gx = Tensor::zeros({c, h, w});
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const double* row = g.data() + (oy * wo + ox) * patch;
              for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const long iy = static_cast<long>(oy * stride + ky) -
                                    static_cast<long>(pad);
                    const long ix = static_cast<long>(ox * stride + kx) -
                                    static_cast<long>(pad);
                    if (iy >= 0 && iy < static_cast<long>(h) && ix >= 0 &&
                        ix < static_cast<long>(w)) {
                      gx.data()[(ci * h + iy) * w + ix] +=
                          row[(ci * kh + ky) * kw + kx];
                    }
                  }
                }
              }
            }
          }
          tape.accumulate(x, gx);
        });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t c_in, std::size_t h, std::size_t w_in,
              std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad) {
  Tensor xi = x;
  if (x.rank() != 3) xi = reshape(x, {c_in, h, w_in});
  Tensor cols = im2col(xi, kh, kw, stride, pad);
  return linear(cols, w, b);
}

Tensor roi_pool_bilinear(const Tensor& x, std::size_t h, std::size_t w,
                         const double box[4], std::size_t pool) {
  expect_rank(x, 2, "roi_pool_bilinear");
  if (x.dim(0) != h * w)
    throw ShapeError("roi_pool_bilinear: token count does not match grid");
  if (pool == 0) throw ShapeError("roi_pool_bilinear: pool must be positive");
  const std::size_t c = x.dim(1);
  // Degenerate boxes collapse every sample onto the nearest cell; clamping
  // the extent keeps the arithmetic defined.
  const double x0 = box[0], y0 = box[1];
  const double bw = std::max(box[2] - box[0], 1e-6);
  const double bh = std::max(box[3] - box[1], 1e-6);
  const std::size_t n_out = pool * pool;
  const std::size_t n_samples = 4;  // 2x2 per bin
  // Precompute bilinear taps: (cell index, weight) x 4 per sample.
  struct Tap {
    std::size_t cell[4];
    double weight[4];
  };
  std::vector<Tap> taps(n_out * n_samples);
  for (std::size_t py = 0; py < pool; ++py) {
    for (std::size_t px = 0; px < pool; ++px) {
      for (std::size_t sy = 0; sy < 2; ++sy) {
        for (std::size_t sx = 0; sx < 2; ++sx) {
          const double ny =
              y0 + (static_cast<double>(py) + (sy + 0.5) / 2.0) * bh /
                       static_cast<double>(pool);
          const double nx =
              x0 + (static_cast<double>(px) + (sx + 0.5) / 2.0) * bw /
                       static_cast<double>(pool);
          // Continuous cell coordinates; cell centers sit at integers.
          double u = nx * static_cast<double>(w) - 0.5;
          double v = ny * static_cast<double>(h) - 0.5;
          u = std::clamp(u, 0.0, static_cast<double>(w - 1));
          v = std::clamp(v, 0.0, static_cast<double>(h - 1));
          const std::size_t u0 = static_cast<std::size_t>(u);
          const std::size_t v0 = static_cast<std::size_t>(v);
          const std::size_t u1 = std::min(u0 + 1, w - 1);
          const std::size_t v1 = std::min(v0 + 1, h - 1);
          const double fu = u - static_cast<double>(u0);
          const double fv = v - static_cast<double>(v0);
          Tap& t = taps[(py * pool + px) * n_samples + sy * 2 + sx];
          t.cell[0] = v0 * w + u0;
          t.cell[1] = v0 * w + u1;
          t.cell[2] = v1 * w + u0;
          t.cell[3] = v1 * w + u1;
          t.weight[0] = (1 - fu) * (1 - fv);
          t.weight[1] = fu * (1 - fv);
          t.weight[2] = (1 - fu) * fv;
          t.weight[3] = fu * fv;
        }
      }
    }
  }
  Tensor out = Tensor::zeros({n_out, c});
  for (std::size_t o = 0; o < n_out; ++o) {
    for (std::size_t s = 0; s < n_samples; ++s) {
      const Tap& t = taps[o * n_samples + s];
      for (std::size_t k = 0; k < 4; ++k) {
        const double wgt = t.weight[k] / static_cast<double>(n_samples);
        const double* src = x.data() + t.cell[k] * c;
        double* dst = out.data() + o * c;
        for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += wgt * src[ci];
      }
    }
  }
  check_finite(out, "roi_pool_bilinear");
  if (tape_wants({x})) {
    out.set_requires_grad(true);
    GradientTape::active()->record(
        out, [x, taps, n_out, n_samples, c](const Tensor& g,
                                            GradientTape& tape) {
          Tensor gx = Tensor::zeros(x.shape());
          for (std::size_t o = 0; o < n_out; ++o) {
            for (std::size_t s = 0; s < n_samples; ++s) {
              const Tap& t = taps[o * n_samples + s];
              for (std::size_t k = 0; k < 4; ++k) {
                const double wgt = t.weight[k] / static_cast<double>(n_samples);
                const double* src = g.data() + o * c;
                double* dst = gx.data() + t.cell[k] * c;
                for (std::size_t ci = 0; ci < c; ++ci)
                  dst[ci] += wgt * src[ci];
              }
            }
          }
          tape.accumulate(x, gx);
        });
  }
  return out;
}

SoftmaxAuditScope::SoftmaxAuditScope() {
  if (g_audit) throw std::logic_error("softmax audit scopes do not nest");
  g_audit = new AuditState();
}

SoftmaxAuditScope::~SoftmaxAuditScope() {
  delete g_audit;
  g_audit = nullptr;
}

double SoftmaxAuditScope::max_row_deviation() const { return g_audit->max_dev; }

std::size_t SoftmaxAuditScope::rows_seen() const { return g_audit->rows; }

}  // namespace corrtrack
