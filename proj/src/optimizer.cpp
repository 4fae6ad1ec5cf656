#include "corrtrack/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace corrtrack {

AdamW::AdamW(const ParamRegistry& params, AdamWConfig cfg) : cfg_(cfg) {
  if (cfg_.lr < 0.0 || cfg_.weight_decay < 0.0 || cfg_.stem_lr_scale < 0.0)
    throw std::invalid_argument("AdamW: negative rate");
  slots_.reserve(params.size());
  for (const auto& [name, t] : params.entries()) {
    Slot s;
    s.param = t;
    s.m.assign(t.size(), 0.0);
    s.v.assign(t.size(), 0.0);
    s.lr_scale = name.rfind(cfg_.stem_prefix, 0) == 0 ? cfg_.stem_lr_scale : 1.0;
    slots_.push_back(std::move(s));
  }
}

void AdamW::step(const GradientTape& tape) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    const Tensor g = tape.grad(s.param);
    if (!g.defined()) continue;
    const double lr = cfg_.lr * s.lr_scale;
    double* p = s.param.data();
    const double* gd = g.data();
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gd[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * p[i]);
    }
  }
}

}  // namespace corrtrack
