#include <doctest.h>

#include <set>

#include "lyricdet/error.hpp"
#include "lyricdet/experiment.hpp"
#include "lyricdet/pipeline.hpp"
#include "lyricdet/smoke.hpp"
#include "support.hpp"

using namespace lyricdet;
using lyricdet::test::TempDir;

namespace {

std::filesystem::path train_lyrics_model(const std::filesystem::path& manifest, const std::filesystem::path& out,
                                         const std::filesystem::path& cache) {
  const Corpus c = load_manifest(manifest);
  const Corpus train_split = select(c, TrackFilter::parse("split=train"));
  SidecarStubTranscriber stub;
  auto enc = default_registry().create(stub_encoder_id(128, 0));
  const auto run = extract_features(train_split, stub, *enc, cache, 1);
  run.throw_if_failed();
  TrainConfig cfg;
  cfg.max_epochs = 20;
  save_model(train(run.embeddings, labels_from(train_split), cfg), out);
  return out;
}

std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += std::filesystem::relative(f, dir).string() + "\n" + lyricdet::test::read_text(f);
  return all;
}

}  // namespace

TEST_CASE("smoke corpus layout") {
  TempDir dir;
  const auto manifest = make_smoke_corpus(dir / "s", 10, 1);
  CHECK(validate_manifest(manifest).ok());
  const Corpus c = load_manifest(manifest);
  CHECK(c.size() == 20);
  CHECK(select(c, TrackFilter::parse("split=train")).size() == 16);
  CHECK(select(c, TrackFilter::parse("split=test")).size() == 4);
  CHECK(select(c, TrackFilter::parse("source=ai")).size() == 10);
  for (const auto& t : c) {
    CHECK(std::filesystem::exists(c.resolve(*t.audio_path)));
    CHECK(std::filesystem::exists(c.resolve(*t.gt_lyrics_path)));
  }
  CHECK(std::filesystem::exists(dir / "s" / "udio.jsonl"));
  CHECK_THROWS_AS(make_smoke_corpus(dir / "x", 9, 1), PreconditionError);
}

TEST_CASE("smoke corpus is deterministic in its seed") {
  TempDir dir;
  make_smoke_corpus(dir / "a", 50, 7);
  make_smoke_corpus(dir / "b", 50, 7);
  make_smoke_corpus(dir / "c", 50, 8);
  CHECK(directory_digest(dir / "a") == directory_digest(dir / "b"));
  CHECK(directory_digest(dir / "a") != directory_digest(dir / "c"));
}

TEST_CASE("pipeline predicts every track and reuses its caches") {
  TempDir dir;
  const auto manifest = make_smoke_corpus(dir / "s", 10, 2);
  PipelineConfig cfg;
  cfg.manifest_path = manifest;
  cfg.cache_dir = dir / "cache";
  cfg.model_path = train_lyrics_model(manifest, dir / "m.bin", cfg.cache_dir);
  cfg.out_path = dir / "pred.jsonl";

  const auto first = pipeline_detect(cfg);
  CHECK(first.predictions.size() == 20);
  CHECK(first.failures.empty());
  CHECK(first.transcriber_calls == 4);  // train tracks were cached while training
  const auto second = pipeline_detect(cfg);
  CHECK(second.transcriber_calls == 0);
  CHECK(second.encoder_calls == 0);
  const auto back = read_predictions(cfg.out_path);
  REQUIRE(back.size() == 20);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].track_id == first.predictions[i].track_id);
    CHECK(back[i].p_fake == doctest::Approx(first.predictions[i].p_fake).epsilon(1e-12));
  }
}

TEST_CASE("an undecodable file becomes an error record") {
  TempDir dir;
  const auto manifest = make_smoke_corpus(dir / "s", 10, 3);
  const Corpus c = load_manifest(manifest);
  PipelineConfig cfg;
  cfg.manifest_path = manifest;
  cfg.model_path = train_lyrics_model(manifest, dir / "m.bin", {});
  cfg.out_path = dir / "pred.jsonl";
  const std::string victim = c[3].track_id;
  lyricdet::test::write_text(c.resolve(*c[3].audio_path), "not a wav file");

  const auto r = pipeline_detect(cfg);
  CHECK(r.predictions.size() == 19);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].track_id == victim);
  CHECK(r.failures[0].stage == "transcribe");
  const std::string text = lyricdet::test::read_text(cfg.out_path);
  CHECK(text.find("\"error\"") != std::string::npos);
  CHECK(read_predictions(cfg.out_path).size() == 19);
}

TEST_CASE("experiment plan parsing") {
  const auto plan = ExperimentPlan::parse(
      "# comment\n"
      "kind = attack_suite\n"
      "manifest = data/manifest.jsonl\n"
      "seed = 9\n"
      "strata = language, genre\n"
      "attacks = noise,eq\n"
      "attack.noise.target_snr_db = 15\n"
      "cnn.window_size = 256\n",
      "/base");
  CHECK(plan.kind == ExperimentKind::kAttackSuite);
  CHECK(plan.manifest == std::filesystem::path("/base/data/manifest.jsonl"));
  CHECK(plan.seed == 9);
  CHECK(plan.strata == std::vector<std::string>{"language", "genre"});
  REQUIRE(plan.attacks.size() == 2);
  CHECK(plan.attacks[0].kind == AttackKind::kNoise);
  CHECK(plan.attacks[0].target_snr_db == 15.0);
  CHECK(plan.attacks[0].seed == 9);
  CHECK(plan.spectrogram.window_size == 256);
  auto reseeded = plan;
  reseeded.seed = 10;
  CHECK(plan.canonical() == ExperimentPlan(plan).canonical());
  CHECK(plan.canonical() != reseeded.canonical());

  CHECK_THROWS_AS(ExperimentPlan::parse("kind = in_domain\n"), PreconditionError);
  CHECK_THROWS_AS(ExperimentPlan::parse("kind = ood_audio\nmanifest = m.jsonl\n"), PreconditionError);
  CHECK_THROWS_AS(ExperimentPlan::parse("manifest = m\nbogus = 1\n"), PreconditionError);
  CHECK_THROWS_AS(ExperimentPlan::parse("manifest = m\nkind = sideways\n"), Error);
}

TEST_CASE("leave one out trains three models") {
  TempDir dir;
  const auto manifest = make_smoke_corpus(dir / "s", 30, 4);
  ExperimentPlan plan = ExperimentPlan::parse("kind = leave_one_out\nmanifest = " + manifest.string() + "\n");
  plan.train.max_epochs = 10;
  const auto reports = run_experiment(plan);
  REQUIRE(reports.size() == 3);
  std::set<std::string> held_out;
  for (const auto& r : reports) {
    held_out.insert(r.metadata.at("held_out"));
    CHECK(r.metadata.at("train_held_out_tracks") == "0");
    CHECK(r.metadata.at("train_test_overlap") == "0");
  }
  CHECK(held_out.size() == 3);
}

TEST_CASE("attack suite reports every condition from one model") {
  TempDir dir;
  const auto manifest = make_smoke_corpus(dir / "s", 20, 5);
  ExperimentPlan plan = ExperimentPlan::parse("kind = attack_suite\nmanifest = " + manifest.string() +
                                              "\nout_dir = " + (dir / "out").string() + "\n");
  plan.train.max_epochs = 10;
  const auto reports = run_experiment(plan);
  REQUIRE(reports.size() == 6);
  CHECK(reports[0].condition == "unattacked");
  std::set<std::string> models;
  for (const auto& r : reports) {
    models.insert(r.metadata.at("model_fingerprint"));
    if (r.condition != "unattacked") CHECK(r.metadata.at("perturbed_classes") == "fake only");
  }
  CHECK(models.size() == 1);
  write_reports(dir / "reports", reports);
  CHECK(std::filesystem::exists(dir / "reports" / "summary.txt"));
}
