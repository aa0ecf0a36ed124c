#include "lyricdet/optim.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "lyricdet/error.hpp"

namespace lyricdet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw PreconditionError("learning_rate must be > 0");
  if (!(lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0)) {
    throw PreconditionError("lr_reduce_factor must be in (0, 1)");
  }
  if (lr_patience_epochs < 1) throw PreconditionError("lr_patience_epochs must be >= 1");
  if (max_epochs < 1) throw PreconditionError("max_epochs must be >= 1");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw PreconditionError("weight_decay must be >= 0");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["epsilon"] = epsilon;
  j["lr_reduce_factor"] = lr_reduce_factor;
  j["lr_patience_epochs"] = lr_patience_epochs;
  j["plateau_threshold"] = plateau_threshold;
  j["min_learning_rate"] = min_learning_rate;
  j["max_epochs"] = max_epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["init"] = init == InitScheme::kZeros ? "zeros" : "uniform_fan_in";
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.lr_reduce_factor = j.value("lr_reduce_factor", c.lr_reduce_factor);
  c.lr_patience_epochs = j.value("lr_patience_epochs", c.lr_patience_epochs);
  c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
  c.min_learning_rate = j.value("min_learning_rate", c.min_learning_rate);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.init = j.value("init", std::string("uniform_fan_in")) == "zeros" ? InitScheme::kZeros
                                                                     : InitScheme::kUniformFanIn;
  return c;
}

AdamW::AdamW(std::size_t n, const TrainConfig& config)
    : m_(n, 0.0),
      v_(n, 0.0),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon),
      weight_decay_(config.weight_decay) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double decay = 1.0 - lr * weight_decay_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

PlateauScheduler::PlateauScheduler(const TrainConfig& config)
    : lr_(config.learning_rate),
      factor_(config.lr_reduce_factor),
      patience_(config.lr_patience_epochs),
      threshold_(config.plateau_threshold),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::observe(int epoch, double loss, TrainingLog& log) {
  if (loss < best_ * (1.0 - threshold_)) {
    best_ = loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < patience_) return false;
  lr_ *= factor_;
  bad_epochs_ = 0;
  log.reductions.push_back({epoch, lr_});
  return true;
}

}  // namespace lyricdet
