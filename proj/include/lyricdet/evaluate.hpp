#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyricdet/corpus.hpp"
#include "lyricdet/detect.hpp"

namespace lyricdet {

struct ConfusionCounts {
  std::size_t tp_fake = 0;  // fake predicted fake
  std::size_t fn_fake = 0;  // fake predicted real
  std::size_t tp_real = 0;  // real predicted real
  std::size_t fn_real = 0;  // real predicted fake

  void add(Label truth, Label predicted);
  std::size_t fakes() const noexcept { return tp_fake + fn_fake; }
  std::size_t reals() const noexcept { return tp_real + fn_real; }
  bool single_class() const noexcept { return fakes() == 0 || reals() == 0; }
  std::optional<double> recall_fake() const;
  std::optional<double> recall_real() const;
  /// (recall_fake + recall_real) / 2; throws PreconditionError when a class is empty.
  double macro_recall() const;

  ConfusionCounts& operator+=(const ConfusionCounts& other);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws PreconditionError when a prediction has no label.
ConfusionCounts confusion(std::span<const Prediction> predictions, const LabelMap& labels);

/// Throws PreconditionError when a prediction has no label or a class has no examples.
double macro_recall(std::span<const Prediction> predictions, const LabelMap& labels);

struct StratumResult {
  std::string field;  // a Track field, or several joined by '+'
  std::string value;  // joined by '/' for combined fields, e.g. "it/jazz"
  ConfusionCounts counts;

  bool single_class() const noexcept { return counts.single_class(); }
  std::optional<double> macro_recall() const;
};

struct EvalReport {
  std::string name;
  std::string condition = "unattacked";
  std::vector<std::string> fields;
  std::vector<StratumResult> strata;  // grouped by field, values in display order
  ConfusionCounts overall;
  std::string config_fingerprint;
  std::map<std::string, std::string> metadata;
  std::vector<std::string> warnings;

  /// Unweighted mean of per-stratum macro-recall over the strata of `field`
  /// that contain both classes; nullopt when none does.
  std::optional<double> field_macro(std::string_view field) const;
  std::optional<double> overall_macro() const;
  const StratumResult* find(std::string_view field, std::string_view value) const;
};

/// Breaks predictions down by each entry of `fields` (Track field names, or
/// '+'-joined combinations such as "language+genre"). Single-class strata are
/// kept, flagged, and excluded from field_macro() with a warning.
/// Throws PreconditionError on unknown fields, unlabeled predictions or
/// predictions for tracks outside `corpus`.
EvalReport evaluate_stratified(std::span<const Prediction> predictions, const LabelMap& labels,
                               const Corpus& corpus, const std::vector<std::string>& fields);

enum class ReportFormat { kTextTable, kCsv, kJson };
ReportFormat parse_report_format(std::string_view s);

std::string render_report(const EvalReport& report, ReportFormat format);
/// One row per report, one column per value of `field`, then Macro Avg.
std::string render_comparison(std::span<const EvalReport> reports, std::string_view field = "language");

EvalReport parse_report_csv(std::string_view csv);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view json);

}  // namespace lyricdet
