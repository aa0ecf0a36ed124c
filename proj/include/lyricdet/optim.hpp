#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lyricdet {

enum class InitScheme {
  kUniformFanIn,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
  kZeros,
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_reduce_factor = 0.1;
  int lr_patience_epochs = 5;
  /// Relative improvement the training loss must make to reset patience.
  double plateau_threshold = 1e-4;
  /// Training stops once the learning rate drops below this.
  double min_learning_rate = 1e-6;
  int max_epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::kUniformFanIn;

  /// Throws PreconditionError when a field is out of range.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct LrReduction {
  int epoch = 0;  // 1-based epoch after which the reduction happened
  double new_lr = 0.0;
};

struct TrainingLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;  // rate used during each epoch
  std::vector<LrReduction> reductions;
  bool stopped_on_min_lr = false;
};

/// Decoupled-weight-decay Adam over one flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t n, const TrainConfig& config);

  /// params -= lr * (adam_direction(grad) + weight_decay * params)
  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(const TrainConfig& config);

  double lr() const noexcept { return lr_; }
  /// Feeds the loss of a finished epoch (1-based). Returns true if the rate was reduced.
  bool observe(int epoch, double loss, TrainingLog& log);

 private:
  double lr_;
  double factor_;
  int patience_;
  double threshold_;
  double best_;
  int bad_epochs_ = 0;
};

}  // namespace lyricdet
