#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lyricdet/corpus.hpp"
#include "lyricdet/detect.hpp"
#include "lyricdet/optim.hpp"

namespace lyricdet {

struct SpectrogramConfig {
  int sample_rate = 22050;
  std::size_t window_size = 2048;
  std::size_t hop = 512;
  double segment_s = 10.0;
  /// Feed log(1 + |X|) instead of |X| to the network. Off by default.
  bool log_magnitude = false;

  /// Throws PreconditionError unless hop <= window and one segment holds a window.
  void validate() const;
  std::size_t segment_samples() const;
  std::string to_json() const;
  static SpectrogramConfig from_json(const std::string& text);

  /// Small configuration used by the desk-scale tests and the smoke corpus:
  /// 128-sample window, 64-sample hop, 0.25 s segments at 22.05 kHz.
  static SpectrogramConfig desk();
};

/// Magnitude STFT, bins x frames, row-major by bin.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  double at(std::size_t bin, std::size_t frame) const { return data[bin * frames + frame]; }
};

/// |STFT| with a periodic Hann window; frames = 1 + (len - window) / hop.
/// Throws PreconditionError for audio shorter than a window or non-finite samples.
Spectrogram compute_spectrogram(std::span<const double> audio, const SpectrogramConfig& config);

inline constexpr std::array<std::size_t, 4> kCnnChannels = {16, 32, 64, 128};
inline constexpr std::uint32_t kCnnSchemaVersion = 1;

/// Four blocks of 3x3 convolution (same padding) + ReLU + 2x2 max-pool,
/// global average pooling, then a linear layer to 2 logits (index 1 = fake).
class CnnModel {
 public:
  CnnModel() = default;
  CnnModel(const SpectrogramConfig& spectrogram, const TrainConfig& config);

  const SpectrogramConfig& spectrogram_config() const noexcept { return spec_; }
  const TrainConfig& train_config() const noexcept { return config_; }
  const TrainingLog& training_log() const noexcept { return log_; }
  std::uint64_t seed() const noexcept { return config_.seed; }
  double threshold() const noexcept { return threshold_; }
  void set_threshold(double threshold);
  Label classify(double p_fake) const noexcept { return p_fake >= threshold_ ? Label::kFake : Label::kReal; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  /// Per-frequency-bin input standardization (x - mean) * scale, fitted on
  /// training segments before the first epoch; identity for a fresh model.
  std::span<const double> bin_mean() const noexcept { return bin_mean_; }
  std::span<const double> bin_scale() const noexcept { return bin_scale_; }
  void set_standardization(std::vector<double> mean, std::vector<double> scale);

  /// Raw logits for one network input (see network_input()).
  std::array<double, 2> logits(const Spectrogram& input) const;
  double p_fake(const Spectrogram& input) const;

  /// Mean softmax cross-entropy over network inputs; fills d loss / d params.
  double loss(std::span<const Spectrogram> inputs, std::span<const int> labels,
              std::vector<double>* grad = nullptr) const;

  /// Segment-level p_fake of raw audio exactly one segment long.
  double segment_p_fake(std::span<const double> segment) const;

  void round_to_float32();

 private:
  friend CnnModel train_cnn(const Corpus&, const SpectrogramConfig&, const TrainConfig&, std::size_t);
  friend CnnModel cnn_from_bytes(std::string_view);

  SpectrogramConfig spec_;
  TrainConfig config_;
  TrainingLog log_;
  double threshold_ = 0.5;
  std::vector<double> params_;
  std::vector<double> bin_mean_;
  std::vector<double> bin_scale_;

  Spectrogram standardized(const Spectrogram& input) const;
};

std::size_t cnn_parameter_count();

/// RMS-normalizes a segment, takes its spectrogram and applies the input
/// scaling the network expects (1 / window sum, optional log).
Spectrogram network_input(std::span<const double> segment, const SpectrogramConfig& config);

/// Trains on the train split: every epoch draws one random segment per track.
/// Throws PreconditionError on an empty split or a single class, and
/// BatchError when audio cannot be decoded.
CnnModel train_cnn(const Corpus& corpus, const SpectrogramConfig& spectrogram, const TrainConfig& config,
                   std::size_t workers = 1);

/// Mean of segment p_fake over all non-overlapping segments. Audio shorter
/// than one segment is zero-padded to a single segment.
double predict_signal(const CnnModel& model, std::span<const double> mono);

Prediction predict_cnn(const CnnModel& model, const Track& track, const Corpus& corpus);

struct CnnPredictionBatch {
  std::vector<Prediction> predictions;  // corpus order, successes only
  std::vector<ItemFailure> failures;
};
CnnPredictionBatch predict_cnn_corpus(const CnnModel& model, const Corpus& corpus, std::size_t workers = 1);

std::string cnn_to_bytes(const CnnModel& model);
CnnModel cnn_from_bytes(std::string_view bytes);
void save_cnn(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_cnn(const std::filesystem::path& path);
std::string cnn_fingerprint(const CnnModel& model);

}  // namespace lyricdet
