#include "corrtrack/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace corrtrack {

std::string GradCheckResult::describe() const {
  std::ostringstream os;
  os << "max rel err " << max_rel_err << " at " << worst_param << "["
     << worst_index << "] (analytic " << analytic_at_worst << ", numeric "
     << numeric_at_worst << ", " << entries_checked << " entries)";
  return os.str();
}

GradCheckResult check_gradients(
    const std::function<Tensor()>& forward,
    const std::vector<std::pair<std::string, Tensor>>& params,
    const GradCheckOptions& opts) {
  // Analytic pass.
  std::vector<Tensor> analytic(params.size());
  {
    GradientTape tape;
    Tensor loss = forward();
    tape.backward(loss);
    for (std::size_t p = 0; p < params.size(); ++p)
      analytic[p] = tape.grad(params[p].second);
  }

  auto eval = [&]() {
    Tensor loss = forward();  // no tape active here: forward only
    return loss.value();
  };

  GradCheckResult res;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    const std::size_t n = t.size();
    std::size_t step = 1;
    if (opts.max_entries_per_param > 0 && n > opts.max_entries_per_param)
      step = (n + opts.max_entries_per_param - 1) / opts.max_entries_per_param;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = t.data()[i];
      t.data()[i] = orig + opts.eps;
      const double up = eval();
      t.data()[i] = orig - opts.eps;
      const double down = eval();
      t.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = analytic[p].defined() ? analytic[p].data()[i] : 0.0;
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), opts.rel_floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++res.entries_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[p].first;
        res.worst_index = i;
        res.analytic_at_worst = a;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace corrtrack
