// lyricdet: command-line entry point. Every subcommand exits 0 on success and
// 1 on any error; all randomness flows from --seed.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lyricdet/attacks.hpp"
#include "lyricdet/baseline_cnn.hpp"
#include "lyricdet/corpus.hpp"
#include "lyricdet/detect.hpp"
#include "lyricdet/encode.hpp"
#include "lyricdet/evaluate.hpp"
#include "lyricdet/experiment.hpp"
#include "lyricdet/pipeline.hpp"
#include "lyricdet/smoke.hpp"
#include "lyricdet/transcribe.hpp"

namespace fs = std::filesystem;
using namespace lyricdet;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string cache_dir;
  std::string log_level = "info";
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void report_failures(const std::vector<ItemFailure>& failures, std::string_view stage) {
  for (const auto& f : failures) spdlog::error("{} [{}]: {}", f.id, stage, f.message);
}

std::vector<TranscriptRecord> read_transcripts(const fs::path& path) {
  std::vector<TranscriptRecord> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(transcript_from_json(line));
  }
  return out;
}

// Accepts either an encoder cache directory or a cache root holding exactly
// one encoder directory.
std::vector<EmbeddingRecord> read_embeddings(const fs::path& dir) {
  if (fs::exists(dir / "index.jsonl")) return load_embedding_dir(dir);
  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "index.jsonl")) candidates.push_back(e.path());
  }
  if (candidates.size() != 1) {
    throw PreconditionError(dir.string() + ": expected one embedding directory, found " +
                            std::to_string(candidates.size()));
  }
  return load_embedding_dir(candidates.front());
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--max-epochs", cfg.max_epochs, "Epoch cap")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--lr", cfg.learning_rate, "Initial learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", cfg.weight_decay, "AdamW weight decay")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect AI-generated songs from their transcribed lyrics"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", g.workers, "Parallel workers")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--cache-dir", g.cache_dir, "Transcript and embedding cache root");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  std::function<void()> action;

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Manifest validation and statistics");
  corpus_cmd->require_subcommand(1);
  std::string manifest;
  {
    auto* validate = corpus_cmd->add_subcommand("validate", "Check a manifest");
    validate->add_option("path", manifest)->required();
    validate->callback([&] {
      action = [&] {
        const auto report = validate_manifest(manifest);
        std::cout << report.summary() << '\n';
        if (!report.ok()) throw Error("manifest has errors");
      };
    });
    auto* stats = corpus_cmd->add_subcommand("stats", "Print the language x source x split grid");
    stats->add_option("path", manifest)->required();
    stats->callback([&] { action = [&] { std::cout << render_stats(load_manifest(manifest)); }; });
  }

  // transcribe
  std::string backend_id = "sidecar-stub";
  std::string out_path;
  {
    auto* cmd = app.add_subcommand("transcribe", "Audio to lyrics text")->require_subcommand(1);
    auto* run = cmd->add_subcommand("run", "Transcribe every track of a manifest");
    run->add_option("--manifest", manifest)->required();
    run->add_option("--backend", backend_id, "Transcriber id")->capture_default_str();
    run->add_option("--out", out_path, "Also write the transcripts here (JSONL)");
    run->callback([&] {
      action = [&] {
        const Corpus corpus = load_manifest(manifest);
        auto backend = make_transcriber(backend_id);
        std::optional<TranscriptCache> cache;
        if (!g.cache_dir.empty()) cache.emplace(g.cache_dir, backend->id());
        auto batch = transcribe_corpus(corpus, *backend, g.workers, cache ? &*cache : nullptr);
        if (!out_path.empty()) {
          std::string text;
          for (const auto& r : batch.records) text += transcript_to_json(r) + '\n';
          write_text(out_path, text);
        }
        spdlog::info("{} transcript(s), {} backend call(s), {} failure(s)", batch.records.size(),
                     batch.backend_calls, batch.failures.size());
        if (cache) spdlog::info("cache: {}", cache->file().string());
        report_failures(batch.failures, "transcribe");
        batch.throw_if_failed();
      };
    });
  }

  // encode
  std::string transcripts_path;
  std::string encoder_id = stub_encoder_id(512, 0);
  {
    auto* cmd = app.add_subcommand("encode", "Lyrics text to embeddings")->require_subcommand(1);
    auto* run = cmd->add_subcommand("run", "Embed a transcript file");
    run->add_option("--transcripts", transcripts_path, "Transcript JSONL")->required();
    run->add_option("--encoder", encoder_id, "Encoder id")->capture_default_str();
    run->callback([&] {
      action = [&] {
        if (g.cache_dir.empty()) throw PreconditionError("encode run needs --cache-dir");
        const auto records = read_transcripts(transcripts_path);
        auto encoder = default_registry().create(encoder_id);
        EmbeddingCache cache(g.cache_dir, encoder->spec());
        auto batch = embed_corpus(records, *encoder, &cache, g.workers);
        spdlog::info("{} embedding(s), {} encoder call(s), {} failure(s) -> {}", batch.records.size(),
                     batch.encoder_calls, batch.failures.size(), cache.dir().string());
        report_failures(batch.failures, "encode");
        if (!batch.failures.empty()) throw Error("some transcripts could not be embedded");
      };
    });
  }

  // detect
  std::string embeddings_dir;
  std::string model_path;
  std::string split_name = "train";
  double threshold = 0.5;
  TrainConfig train_cfg;
  {
    auto* cmd = app.add_subcommand("detect", "Lyrics MLP detector")->require_subcommand(1);
    auto* tr = cmd->add_subcommand("train", "Train on cached embeddings");
    tr->add_option("--embeddings", embeddings_dir)->required();
    tr->add_option("--manifest", manifest, "Labels and split")->required();
    tr->add_option("--out", model_path)->required();
    tr->add_option("--split", split_name, "train|test|all")->capture_default_str();
    tr->add_option("--threshold", threshold)->capture_default_str();
    add_train_flags(tr, train_cfg);
    tr->callback([&] {
      action = [&] {
        const Corpus corpus = load_manifest(manifest);
        std::vector<EmbeddingRecord> rows;
        for (auto& e : read_embeddings(embeddings_dir)) {
          const Track* t = corpus.find(e.track_id);
          if (!t) continue;
          if (split_name != "all" && t->split != parse_split(split_name)) continue;
          rows.push_back(std::move(e));
        }
        train_cfg.seed = g.seed;
        DetectorModel model = train(rows, labels_from(corpus), train_cfg);
        model.set_threshold(threshold);
        save_model(model, model_path);
        spdlog::info("trained on {} track(s), {} epoch(s), model {}", rows.size(),
                     model.training_log().epoch_loss.size(), model_fingerprint(model));
      };
    });
    auto* pr = cmd->add_subcommand("predict", "Score cached embeddings");
    pr->add_option("--model", model_path)->required();
    pr->add_option("--embeddings", embeddings_dir)->required();
    pr->add_option("--out", out_path)->required();
    pr->callback([&] {
      action = [&] {
        const DetectorModel model = load_model(model_path);
        const auto preds = predict(model, read_embeddings(embeddings_dir));
        write_predictions(out_path, preds, model.encoder_id(), model_fingerprint(model));
        spdlog::info("{} prediction(s) -> {}", preds.size(), out_path);
      };
    });
  }

  // baseline-cnn
  SpectrogramConfig spec_cfg = SpectrogramConfig::desk();
  TrainConfig cnn_cfg = ExperimentPlan::default_cnn_train_config();
  {
    auto* cmd = app.add_subcommand("baseline-cnn", "Spectrogram CNN baseline")->require_subcommand(1);
    auto* tr = cmd->add_subcommand("train", "Train on the train split of a manifest");
    tr->add_option("--manifest", manifest)->required();
    tr->add_option("--out", model_path)->required();
    tr->add_option("--sample-rate", spec_cfg.sample_rate)->capture_default_str();
    tr->add_option("--window-size", spec_cfg.window_size)->capture_default_str();
    tr->add_option("--hop", spec_cfg.hop)->capture_default_str();
    tr->add_option("--segment-s", spec_cfg.segment_s)->capture_default_str();
    tr->add_flag("--log-magnitude", spec_cfg.log_magnitude, "log1p instead of linear magnitude");
    tr->add_option("--threshold", threshold)->capture_default_str();
    add_train_flags(tr, cnn_cfg);
    tr->callback([&] {
      action = [&] {
        cnn_cfg.seed = g.seed;
        CnnModel model = train_cnn(load_manifest(manifest), spec_cfg, cnn_cfg, g.workers);
        model.set_threshold(threshold);
        save_cnn(model, model_path);
        spdlog::info("model {}", cnn_fingerprint(model));
      };
    });
    auto* pr = cmd->add_subcommand("predict", "Score every track of a manifest");
    pr->add_option("--model", model_path)->required();
    pr->add_option("--manifest", manifest)->required();
    pr->add_option("--out", out_path)->required();
    pr->callback([&] {
      action = [&] {
        const CnnModel model = load_cnn(model_path);
        auto batch = predict_cnn_corpus(model, load_manifest(manifest), g.workers);
        std::vector<StageFailure> failures;
        for (const auto& f : batch.failures) failures.push_back({f.id, "predict", f.message});
        write_predictions(out_path, batch.predictions, "cnn", cnn_fingerprint(model), failures);
        report_failures(batch.failures, "predict");
        if (!failures.empty()) throw Error("some tracks could not be scored");
      };
    });
  }

  // attack
  std::string kind_name;
  std::vector<std::string> params;
  std::string filter_expr;
  std::string out_dir;
  {
    auto* cmd = app.add_subcommand("attack", "Audio perturbations")->require_subcommand(1);
    auto* run = cmd->add_subcommand("run", "Perturb matching tracks and write a derived manifest");
    run->add_option("--manifest", manifest)->required();
    run->add_option("--kind", kind_name, "stretch|resample-speed|pitch|eq|noise|reverb")->required();
    run->add_option("--param", params, "key=value, repeatable");
    run->add_option("--filter", filter_expr, "e.g. source=ai,split=test");
    run->add_option("--out-dir", out_dir)->required();
    run->callback([&] {
      action = [&] {
        AttackSpec spec = AttackSpec::defaults(parse_attack_kind(kind_name), g.seed);
        for (const auto& p : params) {
          const auto eq = p.find('=');
          if (eq == std::string::npos) throw PreconditionError("--param expects key=value, got " + p);
          spec.set_param(p.substr(0, eq), p.substr(eq + 1));
        }
        spec.validate();
        const Corpus attacked =
            attack_corpus(load_manifest(manifest), spec, TrackFilter::parse(filter_expr), out_dir, g.workers);
        const fs::path out_manifest = fs::path(out_dir) / "manifest.jsonl";
        write_manifest(attacked, out_manifest);
        std::size_t n = 0;
        for (const auto& t : attacked) n += t.derivation ? 1 : 0;
        spdlog::info("{} track(s) perturbed -> {}", n, out_manifest.string());
      };
    });
  }

  // eval
  std::string plan_path;
  std::string report_path;
  std::string format_name = "text_table";
  std::string predictions_path;
  std::vector<std::string> strata = {"language"};
  {
    auto* cmd = app.add_subcommand("eval", "Experiments and reports")->require_subcommand(1);
    auto* run = cmd->add_subcommand("run", "Run an experiment plan");
    run->add_option("--plan", plan_path)->required();
    run->add_option("--out-dir", out_dir, "Overrides the plan's out_dir");
    run->callback([&] {
      action = [&] {
        ExperimentPlan plan = ExperimentPlan::load(plan_path);
        if (!out_dir.empty()) plan.out_dir = out_dir;
        if (plan.out_dir.empty()) throw PreconditionError("plan has no out_dir");
        if (plan.cache_dir.empty() && !g.cache_dir.empty()) plan.cache_dir = g.cache_dir;
        if (g.workers > 1) plan.workers = g.workers;
        const auto reports = run_experiment(plan);
        write_reports(plan.out_dir, reports);
        std::cout << render_comparison(reports, plan.strata.empty() ? "language" : plan.strata.front());
      };
    });
    auto* score = cmd->add_subcommand("score", "Stratified report from a predictions file");
    score->add_option("--predictions", predictions_path)->required();
    score->add_option("--manifest", manifest)->required();
    score->add_option("--strata", strata, "Fields; a+b crosses two")->delimiter(',');
    score->add_option("--out", out_path, "Report JSON");
    score->callback([&] {
      action = [&] {
        const Corpus corpus = load_manifest(manifest);
        EvalReport r = evaluate_stratified(read_predictions(predictions_path), labels_from(corpus), corpus, strata);
        r.name = fs::path(predictions_path).stem().string();
        for (const auto& w : r.warnings) spdlog::warn("{}", w);
        if (!out_path.empty()) write_text(out_path, report_to_json(r));
        std::cout << render_report(r, ReportFormat::kTextTable);
      };
    });
    auto* render = cmd->add_subcommand("render", "Render a report");
    render->add_option("--report", report_path, "Report JSON or CSV")->required();
    render->add_option("--format", format_name, "text_table|csv|json")->capture_default_str();
    render->callback([&] {
      action = [&] {
        const std::string text = read_text(report_path);
        const EvalReport r = fs::path(report_path).extension() == ".csv" ? parse_report_csv(text) : report_from_json(text);
        std::cout << render_report(r, parse_report_format(format_name));
      };
    });
  }

  // smoke
  SmokeOptions smoke;
  bool no_noise_floor = false;
  std::size_t quant_pairs = 0;
  {
    auto* cmd = app.add_subcommand("smoke", "Write the synthetic offline corpus");
    cmd->add_option("--out-dir", out_dir)->required();
    cmd->add_option("--size", smoke.size_per_class, "Tracks per class")->capture_default_str();
    cmd->add_option("--duration-s", smoke.duration_s)->capture_default_str();
    cmd->add_flag("--no-noise-floor", no_noise_floor, "Leave human audio noise-free");
    cmd->add_option("--quantization-pairs", quant_pairs, "Write the clean vs 8-bit pair corpus instead");
    cmd->callback([&] {
      action = [&] {
        fs::path path;
        if (quant_pairs > 0) {
          path = make_quantization_corpus(out_dir, quant_pairs, g.seed, smoke.sample_rate, smoke.duration_s);
        } else {
          smoke.seed = g.seed;
          if (no_noise_floor) smoke.human_noise_snr_db.reset();
          path = make_smoke_corpus(out_dir, smoke);
        }
        std::cout << path.string() << '\n';
      };
    });
  }

  // pipeline
  PipelineConfig pc;
  {
    auto* cmd = app.add_subcommand("pipeline", "transcribe -> encode -> predict in one pass");
    cmd->add_option("--manifest", pc.manifest_path)->required();
    cmd->add_option("--model", pc.model_path)->required();
    cmd->add_option("--out", pc.out_path)->required();
    cmd->add_option("--transcriber", pc.transcriber_id)->capture_default_str();
    cmd->add_option("--encoder", pc.encoder_id, "Must match the model's encoder");
    cmd->callback([&] {
      action = [&] {
        pc.cache_dir = g.cache_dir;
        pc.seed = g.seed;
        pc.workers = g.workers;
        const auto r = pipeline_detect(pc);
        spdlog::info("{} prediction(s), {} failure(s), {} transcriber / {} encoder call(s)", r.predictions.size(),
                     r.failures.size(), r.transcriber_calls, r.encoder_calls);
        for (const auto& f : r.failures) spdlog::error("{} [{}]: {}", f.track_id, f.stage, f.message);
        if (!r.failures.empty()) throw Error("pipeline finished with failures");
      };
    });
  }

  // Global flags may follow the subcommand.
  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    for (auto* leaf : sub->get_subcommands({})) leaf->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("lyricdet"));
  } catch (...) {
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    if (action) action();
    return 0;
  } catch (const BatchError& e) {
    report_failures(e.failures(), "batch");
    spdlog::error("{}", e.what());
  } catch (const ManifestError& e) {
    std::cerr << e.report().summary() << '\n';
    spdlog::error("{}", e.what());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
  }
  return 1;
}
