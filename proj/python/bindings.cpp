// Python surface: the attention kernels on numpy arrays, the positional
// encoding, box overlap measures, and config-text handling. Heavy lifting
// (training, tracking) stays in the C++ CLI; these bindings exist to poke
// the core operations interactively.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "corrtrack/attention.hpp"
#include "corrtrack/boxes.hpp"
#include "corrtrack/config.hpp"
#include "corrtrack/random.hpp"
#include "corrtrack/tensor.hpp"

namespace py = pybind11;
using namespace corrtrack;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style |
                                                 py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  std::vector<double> data(a.data(), a.data() + rows * cols);
  return Tensor::from_data({rows, cols}, std::move(data));
}

py::array_t<double> array_from(const Tensor& t) {
  if (t.shape().size() != 2) throw std::logic_error("expected a 2-d tensor");
  py::array_t<double> out({t.shape()[0], t.shape()[1]});
  const std::vector<double> v = t.values();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

AiaVariant parse_variant(const std::string& s) {
  if (s == "v1") return AiaVariant::v1;
  if (s == "v2") return AiaVariant::v2;
  if (s == "v3") return AiaVariant::v3;
  throw std::invalid_argument("unknown variant: " + s);
}

RefineMode parse_refine(const std::string& s) {
  if (s == "aia") return RefineMode::aia;
  if (s == "conv") return RefineMode::conv;
  if (s == "none") return RefineMode::none;
  throw std::invalid_argument("unknown refine mode: " + s);
}

Box box_from(const std::vector<double>& v) {
  if (v.size() != 4)
    throw std::invalid_argument("a box is [x0, y0, x1, y1]");
  return Box{v[0], v[1], v[2], v[3]};
}

// One multi-head attention block with optional correlation refinement,
// parameters drawn once from the seed.
class AttentionBlock {
 public:
  AttentionBlock(std::size_t model_dim, std::size_t num_heads,
                 std::size_t inner_dim, const std::string& variant,
                 bool positional, const std::string& refine,
                 std::uint64_t seed)
      : mode_(parse_refine(refine)) {
    cfg_.model_dim = model_dim;
    cfg_.num_heads = num_heads;
    cfg_.inner_dim = inner_dim;
    cfg_.aia_variant = parse_variant(variant);
    cfg_.aia_positional = positional;
    cfg_.validate();
    Rng rng(seed);
    proj_ = make_attn_projections(model_dim, rng);
  }

  py::array_t<double> forward(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& q,
                              const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& k,
                              const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& v,
                              std::size_t grid_h, std::size_t grid_w,
                              std::size_t repeats) {
    const Tensor tq = tensor_from(q), tk = tensor_from(k), tv = tensor_from(v);
    KeyGrid grid{grid_h, grid_w, repeats};
    ensure_refiner(tq.shape()[0], grid);
    const Tensor out = multi_head_attention(
        tq, tk, tv, cfg_, proj_,
        inner_ready_ ? &inner_ : nullptr, conv_ready_ ? &convb_ : nullptr,
        grid, mode_);
    return array_from(out);
  }

 private:
  // The refinement parameters size with the correlation-vector length:
  // with keys as the refined axis each vector is a column of M (one entry
  // per query), so the key count — and with it the ensemble size — may vary
  // between calls while the query count must not. They are created lazily
  // at the first forward.
  void ensure_refiner(std::size_t q_rows, const KeyGrid& grid) {
    if (mode_ == RefineMode::none) return;
    const std::size_t vec =
        cfg_.refine_axis == RefineAxis::keys ? q_rows : grid.tokens();
    if (vec_dim_ == 0) vec_dim_ = vec;
    if (vec != vec_dim_)
      throw std::invalid_argument(
          "correlation-vector length changed between calls");
    if (mode_ == RefineMode::aia && !inner_ready_) {
      Rng rng(17);
      inner_ = make_inner_params(vec_dim_, cfg_.inner_dim, cfg_.aia_variant,
                                 rng);
      inner_ready_ = true;
    }
    if (mode_ == RefineMode::conv && !conv_ready_) {
      Rng rng(17);
      convb_ = make_conv_bottleneck(vec_dim_, cfg_.inner_dim, rng);
      conv_ready_ = true;
    }
  }

  AttentionConfig cfg_;
  AttnProjections proj_;
  InnerAttentionParams inner_;
  ConvBottleneckParams convb_;
  RefineMode mode_;
  std::size_t vec_dim_ = 0;
  bool inner_ready_ = false;
  bool conv_ready_ = false;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "correlation-refining attention tracker: core operations";

  m.def(
      "sinusoidal_2d",
      [](std::size_t h, std::size_t w, std::size_t channels, double base) {
        return array_from(sinusoidal_2d(h, w, channels, base));
      },
      py::arg("h"), py::arg("w"), py::arg("channels"),
      py::arg("base") = 10000.0,
      "2-d sinusoidal positional encoding, [h*w, channels]");

  m.def(
      "box_iou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return box_iou(box_from(a), box_from(b));
      },
      py::arg("a"), py::arg("b"), "intersection over union of two boxes");

  m.def(
      "box_giou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return box_giou(box_from(a), box_from(b));
      },
      py::arg("a"), py::arg("b"),
      "generalized IoU (hull-penalized, in (-1, 1])");

  m.def(
      "normalize_config",
      [](const std::string& text) { return write_config(parse_config(text)); },
      py::arg("text"),
      "parse config text and write it back in canonical key order");

  m.def(
      "default_config", []() { return write_config(TrackerConfig::desk()); },
      "canonical text of the desk-scale tracker configuration");

  py::class_<AttentionBlock>(m, "AttentionBlock",
                             "multi-head attention with optional "
                             "correlation-map refinement")
      .def(py::init<std::size_t, std::size_t, std::size_t,
                    const std::string&, bool, const std::string&,
                    std::uint64_t>(),
           py::arg("model_dim") = 16, py::arg("num_heads") = 2,
           py::arg("inner_dim") = 8, py::arg("variant") = "v1",
           py::arg("positional") = true, py::arg("refine") = "aia",
           py::arg("seed") = 0)
      .def("forward", &AttentionBlock::forward, py::arg("q"), py::arg("k"),
           py::arg("v"), py::arg("grid_h"), py::arg("grid_w"),
           py::arg("repeats") = 1,
           "attend q over k/v; grid describes the key arrangement");
}
