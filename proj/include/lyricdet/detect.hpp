#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyricdet/corpus.hpp"
#include "lyricdet/encode.hpp"
#include "lyricdet/optim.hpp"

namespace lyricdet {

enum class Label { kReal, kFake };

std::string_view to_string(Label label);
Label parse_label(std::string_view s);

using LabelMap = std::map<std::string, Label, std::less<>>;

/// track_id -> fake for source=ai, real otherwise.
LabelMap labels_from(const Corpus& corpus);

struct Prediction {
  std::string track_id;
  double p_fake = 0.0;
  Label label = Label::kReal;
};

inline constexpr std::array<std::size_t, 2> kHiddenSizes = {256, 128};
inline constexpr std::uint32_t kModelSchemaVersion = 1;

/// d*256+256 + 256*128+128 + 128*2+2
std::size_t mlp_parameter_count(std::size_t input_dim);

/// Two-hidden-layer ReLU MLP over frozen embeddings, 2-way softmax output
/// (index 1 = fake).
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (out x in, row-major) followed by its bias.
class DetectorModel {
 public:
  DetectorModel() = default;
  /// Initialized according to config.init, drawing from config.seed.
  DetectorModel(std::string encoder_id, std::size_t input_dim, const TrainConfig& config);

  const std::string& encoder_id() const noexcept { return encoder_id_; }
  std::vector<std::size_t> layer_sizes() const;
  std::size_t input_dim() const noexcept { return input_dim_; }
  double threshold() const noexcept { return threshold_; }
  void set_threshold(double threshold);
  std::uint64_t seed() const noexcept { return config_.seed; }
  const TrainConfig& train_config() const noexcept { return config_; }
  const TrainingLog& training_log() const noexcept { return log_; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  double p_fake(std::span<const float> x) const;
  double p_fake(std::span<const double> x) const;
  Label classify(double p_fake) const noexcept { return p_fake >= threshold_ ? Label::kFake : Label::kReal; }

  /// Mean softmax cross-entropy over a batch. `x` is row-major n x input_dim,
  /// `y` holds class indices. When `grad` is given it receives d loss / d params.
  double loss(std::span<const double> x, std::span<const int> y, std::vector<double>* grad = nullptr) const;

  /// Rounds every parameter to the nearest float32 so the in-memory model and
  /// its serialized form predict identically.
  void round_to_float32();

 private:
  friend DetectorModel train(std::span<const EmbeddingRecord>, const LabelMap&, const TrainConfig&);
  friend DetectorModel load_model(const std::filesystem::path&);
  friend DetectorModel model_from_bytes(std::string_view);

  std::string encoder_id_;
  std::size_t input_dim_ = 0;
  double threshold_ = 0.5;
  TrainConfig config_;
  TrainingLog log_;
  std::vector<double> params_;
};

/// Trains with AdamW and plateau LR reduction on the training loss.
/// Throws PreconditionError on empty input, a missing label, a single class
/// or mixed encoders/dimensions, and Error when the loss becomes non-finite.
DetectorModel train(std::span<const EmbeddingRecord> embeddings, const LabelMap& labels,
                    const TrainConfig& config);

/// Throws PreconditionError on encoder/dimension mismatch or non-finite input.
std::vector<Prediction> predict(const DetectorModel& model, std::span<const EmbeddingRecord> embeddings);

/// Container: magic "LYRDMLP\0", u32 schema version, u32 header length,
/// JSON header, u64 parameter count, float32 parameters, CRC-32 of all
/// preceding bytes. Integers are little-endian.
std::string model_to_bytes(const DetectorModel& model);
DetectorModel model_from_bytes(std::string_view bytes);
void save_model(const DetectorModel& model, const std::filesystem::path& path);
/// Throws FormatError on a bad magic, newer schema version or checksum mismatch.
DetectorModel load_model(const std::filesystem::path& path);

/// Hash of the serialized model.
std::string model_fingerprint(const DetectorModel& model);

}  // namespace lyricdet
