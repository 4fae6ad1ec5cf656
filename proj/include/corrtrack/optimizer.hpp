#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "corrtrack/params.hpp"
#include "corrtrack/tensor.hpp"

namespace corrtrack {

/// Adam with decoupled weight decay. The decay term is scaled by the
/// learning rate, so lr = 0 leaves parameters bit-identical. Parameters
/// whose name starts with stem_prefix train at stem_lr_scale times the
/// base rate (the feature stem learns slower than the rest).
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double stem_lr_scale = 1.0;
  std::string stem_prefix = "stem.";
};

class AdamW {
 public:
  AdamW(const ParamRegistry& params, AdamWConfig cfg);

  /// Applies one update from the tape's accumulated gradients. Parameters
  /// the tape never reached are left untouched (no decay, no moment update),
  /// so unused branches stay pristine.
  void step(const GradientTape& tape);

  std::size_t steps() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
    double lr_scale;
  };
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace corrtrack
