#include <algorithm>
#include <cmath>
#include <limits>

#include "blastoseg/training.hpp"

namespace blastoseg::training {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigurationError("max_epochs must be >= 1");
  if (!(initial_lr > 0.0)) throw ConfigurationError("initial_lr must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigurationError("lr_factor must lie in (0, 1)");
  if (lr_patience < 1 || early_stop_patience < 1) throw ConfigurationError("patience values must be >= 1");
  if (!(min_lr > 0.0 && min_lr <= initial_lr)) throw ConfigurationError("min_lr must lie in (0, initial_lr]");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigurationError("dropout_rate must lie in [0, 1)");
  if (!(loss_epsilon > 0.0)) throw ConfigurationError("loss_epsilon must be positive");
  if (!(improvement_threshold >= 0.0)) throw ConfigurationError("improvement_threshold must be >= 0");
}

template <typename T>
void Adam::step(std::span<numerics::Parameter<T>* const> params, double lr) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw StateError("optimizer was built for a different parameter set");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto* p = params[k];
    if (p->grad.size() != m_[k].size() || p->value.size() != m_[k].size()) {
      throw DimensionError("data", "parameter '" + p->name + "' changed size");
    }
    if (!p->grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter '" + p->name + "'", -1, -1, p->name);
    }
  }
  ++t_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.eps);
      p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - update);
    }
  }
}

template void Adam::step<float>(std::span<numerics::Parameter<float>* const>, double);
template void Adam::step<double>(std::span<numerics::Parameter<double>* const>, double);

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, int patience, double min_lr,
                                   double threshold)
    : lr_(initial_lr),
      factor_(factor),
      min_lr_(min_lr),
      threshold_(threshold),
      patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigurationError("scheduler factor must lie in (0, 1)");
  if (patience < 1) throw ConfigurationError("scheduler patience must be >= 1");
  if (!(min_lr > 0.0 && min_lr <= initial_lr)) throw ConfigurationError("min_lr must lie in (0, initial_lr]");
}

double PlateauScheduler::observe(double loss) {
  if (loss < best_ - threshold_) {
    best_ = loss;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    wait_ = 0;
  }
  return lr_;
}

EarlyStopper::EarlyStopper(int patience, double threshold)
    : patience_(patience), threshold_(threshold), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigurationError("early-stop patience must be >= 1");
}

bool EarlyStopper::observe(int epoch, double loss) {
  if (loss < best_ - threshold_) {
    best_ = loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

}  // namespace blastoseg::training
