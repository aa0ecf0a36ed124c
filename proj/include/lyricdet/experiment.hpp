#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyricdet/attacks.hpp"
#include "lyricdet/baseline_cnn.hpp"
#include "lyricdet/evaluate.hpp"
#include "lyricdet/optim.hpp"

namespace lyricdet {

enum class ExperimentKind { kInDomain, kAttackSuite, kOodAudio, kLeaveOneOut, kGtLyricsBaseline };
enum class DetectorKind { kLyrics, kCnn };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view s);
std::string_view to_string(DetectorKind kind);

/// Declarative experiment description, read from `key = value` lines.
///
/// Keys: kind, detector (lyrics|cnn), manifest, ood_manifest, transcriber,
/// encoder, cache_dir, out_dir, seed, workers, threshold, strata
/// (comma-separated), attacks (comma-separated kinds), attack.<kind>.<param>,
/// max_epochs, batch_size, learning_rate, and cnn.{sample_rate, window_size,
/// hop, segment_s, log_magnitude, max_epochs, batch_size, learning_rate}.
/// Relative paths resolve against the plan file's directory.
struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::kInDomain;
  DetectorKind detector = DetectorKind::kLyrics;
  std::filesystem::path manifest;
  std::filesystem::path ood_manifest;
  std::string transcriber = "sidecar-stub";
  std::string encoder = "stub-ngram3-d512-s0";
  std::filesystem::path cache_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double threshold = 0.5;
  std::vector<std::string> strata = {"language"};
  std::vector<AttackSpec> attacks = default_attack_suite(0);
  TrainConfig train;
  SpectrogramConfig spectrogram = SpectrogramConfig::desk();
  TrainConfig cnn_train = default_cnn_train_config();

  static TrainConfig default_cnn_train_config();
  static ExperimentPlan parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentPlan load(const std::filesystem::path& path);
  /// Canonical text of every setting; hashed into each report's fingerprint.
  std::string canonical() const;
};

/// One report per plan cell:
///   in_domain, gt_lyrics_baseline: one report on the test split;
///   ood_audio: one report on ood_manifest;
///   attack_suite: the unattacked reference, one report per attack (only
///     fake test tracks perturbed, one trained model throughout) and, with
///     ood_manifest, one on it;
///   leave_one_out: one report per held-out lyrics generator, each from a
///     freshly trained model.
/// Every report carries config_fingerprint and metadata describing the run
/// (training corpus size, held-out tracks in training, perturbed sources).
/// Missing features are reported as BatchError listing (track, stage).
std::vector<EvalReport> run_experiment(const ExperimentPlan& plan);

/// Writes `<name>-<condition>.json` and `.csv` per report plus summary.txt.
void write_reports(const std::filesystem::path& out_dir, std::span<const EvalReport> reports);

}  // namespace lyricdet
