#include "multiattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "multiattn/errors.hpp"

namespace multiattn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ParameterStore& params, const LossBuilder& build) {
  Graph g(&params);
  const NodeId loss = build(g);
  const Tensor& v = g.value(loss);
  if (v.size() != 1) throw GraphError("gradient check: loss must be scalar");
  return v[0];
}

}  // namespace

GradCheckResult finite_difference_check(ParameterStore& params, const LossBuilder& build,
                                        const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ConfigError("gradient check: eps must be positive");

  const double f0 = evaluate(params, build);
  const double f0_again = evaluate(params, build);
  if (f0 != f0_again) {
    throw NumericError("gradient check: loss is not deterministic (" + std::to_string(f0) + " vs " +
                       std::to_string(f0_again) + ")");
  }

  Graph g(&params, options.fault);
  const NodeId loss = build(g);
  const Gradients grads = g.backward(loss);

  std::vector<ParamId> ids = options.only;
  if (ids.empty()) {
    for (ParamId i = 0; i < params.size(); ++i) ids.push_back(i);
  }

  GradCheckResult result;
  for (ParamId id : ids) {
    ParamCheck check;
    check.name = params.name(id);
    Tensor& p = params.value(id);
    check.coordinates = p.size();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + options.eps;
      const double up = evaluate(params, build);
      p[i] = original - options.eps;
      const double down = evaluate(params, build);
      p[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = grads[id][i];
      const double err = relative_error(analytic, numeric, options.floor);
      if (i == 0 || err > check.max_rel_error) {
        check.max_rel_error = err;
        check.worst_index = i;
        check.analytic = analytic;
        check.numeric = numeric;
      }
    }
    if (result.per_param.empty() || check.max_rel_error > result.max_rel_error) {
      result.max_rel_error = check.max_rel_error;
      result.worst_param = check.name;
      result.worst_index = check.worst_index;
      result.analytic = check.analytic;
      result.numeric = check.numeric;
    }
    result.per_param.push_back(std::move(check));
  }
  return result;
}

}  // namespace multiattn
