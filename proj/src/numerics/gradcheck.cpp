#include "blastoseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "blastoseg/random.hpp"

namespace blastoseg::numerics {
namespace {

void check_step(double step) {
  if (!(step >= 1e-4 && step <= 1e-2)) {
    throw PreconditionError("finite-difference step must lie in [1e-4, 1e-2]");
  }
}

void merge(GradCheckReport& into, const GradCheckReport& part) {
  into.elements_checked += part.elements_checked;
  if (into.parameter_name.empty() || part.max_relative_error > into.max_relative_error) {
    into.max_relative_error = part.max_relative_error;
    into.parameter_name = part.parameter_name;
  }
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradient(const std::function<double(const Tensor<double>&)>& f,
                               const Tensor<double>& x, const Tensor<double>& analytic,
                               double step, double tolerance, const std::string& name) {
  check_step(step);
  require_same_shape(x.shape(), analytic.shape(), "check_gradient");
  GradCheckReport report{0.0, name, tolerance, 0};
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double plus = f(probe);
    probe[i] = x[i] - step;
    const double minus = f(probe);
    probe[i] = x[i];
    const double numeric = (plus - minus) / (2.0 * step);
    report.max_relative_error = std::max(report.max_relative_error, relative_error(analytic[i], numeric));
    ++report.elements_checked;
  }
  return report;
}

GradCheckReport finite_difference_check(Layer<double>& layer, const Tensor<double>& input,
                                        Mode mode, double step, double tolerance,
                                        std::uint64_t seed) {
  check_step(step);
  if (mode == Mode::train) {
    throw PreconditionError("gradient checks need a deterministic layer mode (dropout off, batchnorm frozen)");
  }
  const Pass pass{mode, seed};
  std::vector<Parameter<double>*> params;
  layer.collect_parameters(params);
  for (auto* p : params) p->grad.fill(0.0);

  const Tensor<double> y = layer.forward(input, pass);
  Tensor<double> weights(y.shape());
  std::mt19937_64 engine(derive_seed(seed, 0x9e11));
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = uniform(engine, -1.0, 1.0);

  auto objective = [&](const Tensor<double>& out) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += weights[i] * out[i];
    return acc;
  };

  const Tensor<double> grad_input = layer.backward(weights);
  std::vector<Tensor<double>> param_grads;
  for (auto* p : params) param_grads.push_back(p->grad);

  GradCheckReport report{0.0, "", tolerance, 0};
  merge(report, check_gradient(
                    [&](const Tensor<double>& x) { return objective(layer.forward(x, pass)); },
                    input, grad_input, step, tolerance, "input"));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& p = *params[k];
    const Tensor<double> original = p.value;
    merge(report, check_gradient(
                      [&](const Tensor<double>& v) {
                        p.value = v;
                        return objective(layer.forward(input, pass));
                      },
                      original, param_grads[k], step, tolerance, p.name));
    p.value = original;
  }
  return report;
}

}  // namespace blastoseg::numerics
