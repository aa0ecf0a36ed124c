#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lyricdet/corpus.hpp"
#include "lyricdet/detect.hpp"
#include "lyricdet/encode.hpp"
#include "lyricdet/transcribe.hpp"

namespace lyricdet {

struct StageFailure {
  std::string track_id;
  std::string stage;  // "transcribe", "encode" or "predict"
  std::string message;
};

struct FeatureRun {
  std::vector<EmbeddingRecord> embeddings;  // corpus order, successes only
  std::vector<StageFailure> failures;
  std::size_t transcriber_calls = 0;
  std::size_t encoder_calls = 0;

  /// Throws BatchError naming every (track, stage) that failed.
  void throw_if_failed() const;
};

/// Transcribes and embeds every track. With a nonempty cache_dir, transcripts
/// go to `<cache_dir>/<transcriber_id>/` and embeddings to
/// `<cache_dir>/<encoder_id>/`.
FeatureRun extract_features(const Corpus& corpus, TranscriberBackend& transcriber, TextEncoder& encoder,
                            const std::filesystem::path& cache_dir, std::size_t workers);

struct PipelineConfig {
  std::filesystem::path manifest_path;
  std::filesystem::path cache_dir;
  std::string transcriber_id = "sidecar-stub";
  std::string encoder_id;  // empty: the model's encoder
  std::filesystem::path model_path;
  std::filesystem::path out_path;  // predictions.jsonl; empty: do not write
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::string fingerprint() const;
};

struct PipelineResult {
  std::vector<Prediction> predictions;
  std::vector<StageFailure> failures;
  std::size_t transcriber_calls = 0;
  std::size_t encoder_calls = 0;
  std::string encoder_id;
  std::string model_fingerprint;
};

/// transcribe -> encode -> predict over a manifest. Per-track failures are
/// recorded with their stage and written as error records next to the
/// predictions; the remaining tracks still get predictions.
PipelineResult pipeline_detect(const PipelineConfig& config);

/// Predictions JSONL: {track_id, p_fake, label, encoder_id, model_fingerprint}
/// per line, then {track_id, stage, error} for failures.
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions,
                       const std::string& encoder_id, const std::string& model_fingerprint,
                       std::span<const StageFailure> failures = {});
/// Reads prediction records, skipping error records.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace lyricdet
