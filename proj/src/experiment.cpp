#include "lyricdet/experiment.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "lyricdet/hashing.hpp"
#include "lyricdet/pipeline.hpp"

namespace lyricdet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw PreconditionError("plan key " + std::string(key) + ": bad value \"" + std::string(text) + "\"");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw PreconditionError("plan key " + std::string(key) + ": expected true/false");
}

// Trained model of either kind plus the stages it needs at prediction time.
class Detector {
 public:
  explicit Detector(const ExperimentPlan& plan) : plan_(plan) {
    if (plan.detector == DetectorKind::kLyrics) {
      const std::string transcriber =
          plan.kind == ExperimentKind::kGtLyricsBaseline ? std::string("ground-truth") : plan.transcriber;
      transcriber_ = make_transcriber(transcriber);
      encoder_ = default_registry().create(plan.encoder);
    }
  }

  void fit(const Corpus& train_corpus) {
    ++training_runs_;
    if (plan_.detector == DetectorKind::kLyrics) {
      const auto features = features_for(train_corpus);
      TrainConfig cfg = plan_.train;
      cfg.seed = plan_.seed;
      mlp_ = train(features, labels_from(train_corpus), cfg);
      mlp_->set_threshold(plan_.threshold);
      model_fingerprint_ = lyricdet::model_fingerprint(*mlp_);
    } else {
      TrainConfig cfg = plan_.cnn_train;
      cfg.seed = plan_.seed;
      cnn_ = train_cnn(train_corpus, plan_.spectrogram, cfg, plan_.workers);
      cnn_->set_threshold(plan_.threshold);
      model_fingerprint_ = cnn_fingerprint(*cnn_);
    }
  }

  std::vector<Prediction> predict_all(const Corpus& corpus) {
    if (mlp_) {
      const auto features = features_for(corpus);
      return predict(*mlp_, features);
    }
    auto batch = predict_cnn_corpus(*cnn_, corpus, plan_.workers);
    if (!batch.failures.empty()) {
      std::string msg = std::to_string(batch.failures.size()) + " track(s) could not be scored:";
      for (auto& f : batch.failures) {
        msg += " " + f.id + " (predict)";
        f.message = "predict: " + f.message;
      }
      throw BatchError(msg, batch.failures);
    }
    return std::move(batch.predictions);
  }

  const std::string& model_fingerprint() const { return model_fingerprint_; }
  int training_runs() const { return training_runs_; }
  std::string transcriber_id() const { return transcriber_ ? transcriber_->id() : std::string("-"); }

 private:
  std::vector<EmbeddingRecord> features_for(const Corpus& corpus) {
    FeatureRun run = extract_features(corpus, *transcriber_, *encoder_, plan_.cache_dir, plan_.workers);
    run.throw_if_failed();
    return std::move(run.embeddings);
  }

  const ExperimentPlan& plan_;
  std::unique_ptr<TranscriberBackend> transcriber_;
  std::unique_ptr<TextEncoder> encoder_;
  std::optional<DetectorModel> mlp_;
  std::optional<CnnModel> cnn_;
  std::string model_fingerprint_;
  int training_runs_ = 0;
};

EvalReport make_report(const ExperimentPlan& plan, const Detector& detector, const std::string& condition,
                       const std::vector<Prediction>& predictions, const Corpus& test, const std::string& extra) {
  EvalReport r = evaluate_stratified(predictions, labels_from(test), test, plan.strata);
  r.name = std::string(to_string(plan.kind)) + "-" + std::string(to_string(plan.detector));
  r.condition = condition;
  r.config_fingerprint = fingerprint(plan.canonical() + "|" + detector.model_fingerprint() + "|" + condition + "|" + extra);
  r.metadata["kind"] = std::string(to_string(plan.kind));
  r.metadata["detector"] = std::string(to_string(plan.detector));
  r.metadata["transcriber"] = detector.transcriber_id();
  r.metadata["encoder"] = plan.detector == DetectorKind::kLyrics ? plan.encoder : "-";
  r.metadata["seed"] = std::to_string(plan.seed);
  r.metadata["model_fingerprint"] = detector.model_fingerprint();
  r.metadata["test_tracks"] = std::to_string(test.size());
  for (const auto& w : r.warnings) spdlog::warn("{} / {}: {}", r.name, condition, w);
  return r;
}

Corpus split_of(const Corpus& corpus, Split split) {
  return select(corpus, TrackFilter().where("split", to_string(split)));
}

std::filesystem::path scratch_dir(const ExperimentPlan& plan) {
  if (!plan.out_dir.empty()) return plan.out_dir;
  if (!plan.cache_dir.empty()) return plan.cache_dir / "experiments";
  return std::filesystem::temp_directory_path() / ("lyricdet-" + fingerprint(plan.canonical()));
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kInDomain: return "in_domain";
    case ExperimentKind::kAttackSuite: return "attack_suite";
    case ExperimentKind::kOodAudio: return "ood_audio";
    case ExperimentKind::kLeaveOneOut: return "leave_one_out";
    case ExperimentKind::kGtLyricsBaseline: return "gt_lyrics_baseline";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::kInDomain, ExperimentKind::kAttackSuite, ExperimentKind::kOodAudio,
                 ExperimentKind::kLeaveOneOut, ExperimentKind::kGtLyricsBaseline}) {
    if (s == to_string(k)) return k;
  }
  throw PreconditionError("unknown experiment kind \"" + std::string(s) + "\"");
}

std::string_view to_string(DetectorKind kind) { return kind == DetectorKind::kCnn ? "cnn" : "lyrics"; }

TrainConfig ExperimentPlan::default_cnn_train_config() {
  TrainConfig c;
  c.max_epochs = 40;
  c.batch_size = 16;
  return c;
}

ExperimentPlan ExperimentPlan::parse(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentPlan p;
  auto path_of = [&](std::string_view v) {
    std::filesystem::path path{std::string(v)};
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw PreconditionError("plan line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "kind") p.kind = parse_experiment_kind(value);
    else if (key == "detector") {
      if (value == "lyrics") p.detector = DetectorKind::kLyrics;
      else if (value == "cnn") p.detector = DetectorKind::kCnn;
      else throw PreconditionError("plan key detector: expected lyrics or cnn");
    } else if (key == "manifest") p.manifest = path_of(value);
    else if (key == "ood_manifest") p.ood_manifest = path_of(value);
    else if (key == "transcriber") p.transcriber = value;
    else if (key == "encoder") p.encoder = value;
    else if (key == "cache_dir") p.cache_dir = path_of(value);
    else if (key == "out_dir") p.out_dir = path_of(value);
    else if (key == "seed") p.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "workers") p.workers = parse_value<std::size_t>(key, value);
    else if (key == "threshold") p.threshold = parse_value<double>(key, value);
    else if (key == "strata") p.strata = split_list(value);
    else if (key == "max_epochs") p.train.max_epochs = parse_value<int>(key, value);
    else if (key == "batch_size") p.train.batch_size = parse_value<int>(key, value);
    else if (key == "learning_rate") p.train.learning_rate = parse_value<double>(key, value);
    else if (key == "attacks") {
      std::vector<AttackSpec> attacks;
      for (const auto& k : split_list(value)) attacks.push_back(AttackSpec::defaults(parse_attack_kind(k)));
      p.attacks = std::move(attacks);
    } else if (key.rfind("attack.", 0) == 0) {
      const auto dot = key.find('.', 7);
      if (dot == std::string::npos) throw PreconditionError("plan key " + key + ": expected attack.<kind>.<param>");
      const AttackKind kind = parse_attack_kind(key.substr(7, dot - 7));
      bool found = false;
      for (auto& a : p.attacks) {
        if (a.kind == kind) {
          a.set_param(key.substr(dot + 1), value);
          found = true;
        }
      }
      if (!found) throw PreconditionError("plan key " + key + ": attack not in the attacks list");
    } else if (key == "cnn.sample_rate") p.spectrogram.sample_rate = parse_value<int>(key, value);
    else if (key == "cnn.window_size") p.spectrogram.window_size = parse_value<std::size_t>(key, value);
    else if (key == "cnn.hop") p.spectrogram.hop = parse_value<std::size_t>(key, value);
    else if (key == "cnn.segment_s") p.spectrogram.segment_s = parse_value<double>(key, value);
    else if (key == "cnn.log_magnitude") p.spectrogram.log_magnitude = parse_bool(key, value);
    else if (key == "cnn.max_epochs") p.cnn_train.max_epochs = parse_value<int>(key, value);
    else if (key == "cnn.batch_size") p.cnn_train.batch_size = parse_value<int>(key, value);
    else if (key == "cnn.learning_rate") p.cnn_train.learning_rate = parse_value<double>(key, value);
    else throw PreconditionError("plan line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
  }
  if (p.manifest.empty()) throw PreconditionError("plan needs a manifest");
  if (p.workers == 0) throw PreconditionError("workers must be positive");
  if (p.kind == ExperimentKind::kOodAudio && p.ood_manifest.empty()) {
    throw PreconditionError("ood_audio plans need ood_manifest");
  }
  if (p.kind == ExperimentKind::kGtLyricsBaseline && p.detector == DetectorKind::kCnn) {
    throw PreconditionError("gt_lyrics_baseline needs the lyrics detector");
  }
  for (auto& a : p.attacks) {
    a.seed = p.seed;
    a.validate();
  }
  p.train.validate();
  p.cnn_train.validate();
  p.spectrogram.validate();
  return p;
}

ExperimentPlan ExperimentPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read plan " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string ExperimentPlan::canonical() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["detector"] = to_string(detector);
  j["manifest"] = manifest.string();
  j["ood_manifest"] = ood_manifest.string();
  j["transcriber"] = transcriber;
  j["encoder"] = encoder;
  j["seed"] = seed;
  j["threshold"] = threshold;
  j["strata"] = strata;
  auto attacks_json = nlohmann::ordered_json::array();
  for (const auto& a : attacks) {
    attacks_json.push_back({{"kind", to_string(a.kind)}, {"params", nlohmann::ordered_json::parse(a.params_json())}});
  }
  j["attacks"] = std::move(attacks_json);
  if (detector == DetectorKind::kLyrics) {
    j["train"] = nlohmann::ordered_json::parse(train.to_json());
  } else {
    j["spectrogram"] = nlohmann::ordered_json::parse(spectrogram.to_json());
    j["train"] = nlohmann::ordered_json::parse(cnn_train.to_json());
  }
  return j.dump();
}

std::vector<EvalReport> run_experiment(const ExperimentPlan& plan) {
  const Corpus corpus = load_manifest(plan.manifest);
  Detector detector(plan);
  std::vector<EvalReport> reports;

  auto score = [&](const std::string& condition, const Corpus& test, const std::string& extra) {
    reports.push_back(make_report(plan, detector, condition, detector.predict_all(test), test, extra));
    return &reports.back();
  };

  switch (plan.kind) {
    case ExperimentKind::kInDomain:
    case ExperimentKind::kGtLyricsBaseline:
    case ExperimentKind::kOodAudio:
    case ExperimentKind::kAttackSuite: {
      const Corpus train_corpus = split_of(corpus, Split::kTrain);
      detector.fit(train_corpus);
      if (plan.kind == ExperimentKind::kOodAudio) {
        auto* r = score("ood", load_manifest(plan.ood_manifest), plan.ood_manifest.string());
        r->metadata["train_tracks"] = std::to_string(train_corpus.size());
        break;
      }
      const Corpus test = split_of(corpus, Split::kTest);
      auto* ref = score(plan.kind == ExperimentKind::kGtLyricsBaseline ? "ground-truth-lyrics" : "unattacked", test, "");
      ref->metadata["train_tracks"] = std::to_string(train_corpus.size());
      if (plan.kind != ExperimentKind::kAttackSuite) break;

      const auto fake_only = TrackFilter().where("source", "ai");
      for (const auto& spec : plan.attacks) {
        const std::string kind(to_string(spec.kind));
        const Corpus attacked =
            attack_corpus(test, spec, fake_only, scratch_dir(plan) / "attacked" / kind, plan.workers);
        std::set<std::string> perturbed_sources;
        std::size_t perturbed = 0;
        for (const auto& t : attacked) {
          if (!t.derivation) continue;
          ++perturbed;
          perturbed_sources.insert(std::string(to_string(t.source)));
        }
        auto* r = score(kind, attacked, spec.params_json());
        r->metadata["attack"] = kind;
        r->metadata["attack_params"] = spec.params_json();
        r->metadata["perturbed_tracks"] = std::to_string(perturbed);
        std::string sources;
        for (const auto& s : perturbed_sources) sources += (sources.empty() ? "" : ",") + s;
        r->metadata["perturbed_sources"] = sources;
        r->metadata["perturbed_classes"] = "fake only";
      }
      if (!plan.ood_manifest.empty()) score("ood", load_manifest(plan.ood_manifest), plan.ood_manifest.string());
      break;
    }
    case ExperimentKind::kLeaveOneOut: {
      for (const auto held_out : kLyricsGenerators) {
        const auto split = leave_one_generator_out(corpus, held_out);
        std::size_t leaked = 0;
        for (const auto& t : split.train) leaked += t.lyrics_generator == held_out ? 1 : 0;
        std::size_t overlap = 0;
        for (const auto& t : split.test) overlap += split.train.find(t.track_id) ? 1 : 0;
        detector.fit(split.train);
        const std::string condition = "held-out-" + std::string(to_string(held_out));
        auto* r = score(condition, split.test, condition);
        r->metadata["held_out"] = std::string(to_string(held_out));
        r->metadata["train_tracks"] = std::to_string(split.train.size());
        r->metadata["train_held_out_tracks"] = std::to_string(leaked);
        r->metadata["train_test_overlap"] = std::to_string(overlap);
        r->metadata["training_run"] = std::to_string(detector.training_runs());
      }
      break;
    }
  }
  return reports;
}

void write_reports(const std::filesystem::path& out_dir, std::span<const EvalReport> reports) {
  std::filesystem::create_directories(out_dir);
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
  };
  for (const auto& r : reports) {
    const std::string stem = sanitize_id(r.name + "-" + r.condition);
    write(out_dir / (stem + ".json"), render_report(r, ReportFormat::kJson));
    write(out_dir / (stem + ".csv"), render_report(r, ReportFormat::kCsv));
  }
  std::string summary;
  for (const auto& r : reports) summary += render_report(r, ReportFormat::kTextTable) + "\n";
  if (!reports.empty()) {
    summary += render_comparison(reports, reports.front().fields.empty() ? "language" : reports.front().fields.front());
  }
  write(out_dir / "summary.txt", summary);
}

}  // namespace lyricdet
