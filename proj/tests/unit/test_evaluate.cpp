#include <doctest.h>

#include "lyricdet/error.hpp"
#include "lyricdet/evaluate.hpp"
#include "lyricdet/rng.hpp"

using namespace lyricdet;

namespace {

Track make_track(const std::string& id, const std::string& language, const std::string& genre, bool fake) {
  Track t;
  t.track_id = id;
  t.language = language;
  t.genre = genre;
  t.split = Split::kTest;
  if (fake) {
    t.source = Source::kAi;
    t.lyrics_generator = LyricsGenerator::kMistral;
    t.audio_generator = AudioGenerator::kSuno;
  }
  return t;
}

Prediction pred(const std::string& id, Label label) { return {id, label == Label::kFake ? 0.9 : 0.1, label}; }

// 10 fake (9 caught) and 10 real (8 kept): macro recall 0.85.
struct Fixture {
  Corpus corpus;
  LabelMap labels;
  std::vector<Prediction> predictions;
};

Fixture example() {
  std::vector<Track> tracks;
  std::vector<Prediction> preds;
  for (int i = 0; i < 10; ++i) {
    const std::string f = "f" + std::to_string(i), r = "r" + std::to_string(i);
    tracks.push_back(make_track(f, i < 5 ? "en" : "de", "pop", true));
    tracks.push_back(make_track(r, i < 5 ? "en" : "de", "pop", false));
    preds.push_back(pred(f, i == 0 ? Label::kReal : Label::kFake));
    preds.push_back(pred(r, i == 5 || i == 6 ? Label::kFake : Label::kReal));
  }
  Corpus c("ex", tracks, {});
  return {c, labels_from(c), preds};
}

}  // namespace

TEST_CASE("macro recall against a direct count on random fixtures") {
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.index(60);
    LabelMap labels;
    std::vector<Prediction> preds;
    double fake_n = 0, fake_hit = 0, real_n = 0, real_hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "x" + std::to_string(i);
      const Label truth = i == 0 ? Label::kFake : i == 1 ? Label::kReal : (rng.uniform() < 0.5 ? Label::kFake : Label::kReal);
      const Label guess = rng.uniform() < 0.5 ? Label::kFake : Label::kReal;
      labels[id] = truth;
      preds.push_back(pred(id, guess));
      (truth == Label::kFake ? fake_n : real_n) += 1;
      if (truth == guess) (truth == Label::kFake ? fake_hit : real_hit) += 1;
    }
    const double oracle = (fake_hit / fake_n + real_hit / real_n) / 2.0;
    CHECK(macro_recall(preds, labels) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("the 0.85 example") {
  const auto f = example();
  const auto c = confusion(f.predictions, f.labels);
  CHECK(c.tp_fake == 9);
  CHECK(c.fn_fake == 1);
  CHECK(c.tp_real == 8);
  CHECK(c.fn_real == 2);
  CHECK(*c.recall_fake() == doctest::Approx(0.9));
  CHECK(*c.recall_real() == doctest::Approx(0.8));
  CHECK(macro_recall(f.predictions, f.labels) == doctest::Approx(0.85));
}

TEST_CASE("stratified by language") {
  const auto f = example();
  const auto r = evaluate_stratified(f.predictions, f.labels, f.corpus, {"language"});
  const auto* en = r.find("language", "en");
  const auto* de = r.find("language", "de");
  REQUIRE(en);
  REQUIRE(de);
  CHECK(*en->macro_recall() == doctest::Approx((4.0 / 5 + 1.0) / 2));
  CHECK(*de->macro_recall() == doctest::Approx((1.0 + 3.0 / 5) / 2));
  CHECK(*r.field_macro("language") == doctest::Approx(0.85));
  CHECK(*r.overall_macro() == doctest::Approx(0.85));
}

TEST_CASE("single-class strata are flagged and excluded") {
  auto f = example();
  std::vector<Track> tracks = f.corpus.tracks();
  tracks.push_back(make_track("it1", "it", "jazz", true));
  tracks.push_back(make_track("it2", "it", "jazz", true));
  f.predictions.push_back(pred("it1", Label::kFake));
  f.predictions.push_back(pred("it2", Label::kReal));
  const Corpus c("ex", tracks, {});
  const auto labels = labels_from(c);
  const auto r = evaluate_stratified(f.predictions, labels, c, {"language", "language+genre"});
  const auto* jazz = r.find("language+genre", "it/jazz");
  REQUIRE(jazz);
  CHECK(jazz->single_class());
  CHECK_FALSE(jazz->macro_recall().has_value());
  CHECK(!r.warnings.empty());
  CHECK(*r.field_macro("language") == doctest::Approx(0.85));
  CHECK_THROWS_AS(jazz->counts.macro_recall(), PreconditionError);
}

TEST_CASE("evaluation preconditions") {
  const auto f = example();
  CHECK_THROWS_AS(evaluate_stratified(f.predictions, f.labels, f.corpus, {"tempo"}), PreconditionError);
  auto preds = f.predictions;
  preds.push_back(pred("ghost", Label::kFake));
  CHECK_THROWS_AS(macro_recall(preds, f.labels), PreconditionError);
  std::vector<Prediction> only_fake;
  LabelMap fake_labels;
  for (const auto& p : f.predictions) {
    if (f.labels.at(p.track_id) == Label::kFake) {
      only_fake.push_back(p);
      fake_labels[p.track_id] = Label::kFake;
    }
  }
  CHECK_THROWS_AS(macro_recall(only_fake, fake_labels), PreconditionError);
}

TEST_CASE("csv and json round trips") {
  const auto f = example();
  auto r = evaluate_stratified(f.predictions, f.labels, f.corpus, {"language", "genre"});
  r.name = "example";
  r.metadata["seed"] = "7";
  const EvalReport back = parse_report_csv(render_report(r, ReportFormat::kCsv));
  REQUIRE(back.strata.size() == r.strata.size());
  for (std::size_t i = 0; i < r.strata.size(); ++i) {
    CHECK(back.strata[i].field == r.strata[i].field);
    CHECK(back.strata[i].value == r.strata[i].value);
    CHECK(back.strata[i].counts == r.strata[i].counts);
  }
  const EvalReport j = report_from_json(report_to_json(r));
  CHECK(j.overall == r.overall);
  CHECK(j.metadata == r.metadata);
  CHECK(report_to_json(j) == report_to_json(r));
}

TEST_CASE("rendering is deterministic") {
  const auto f = example();
  const auto a = evaluate_stratified(f.predictions, f.labels, f.corpus, {"language"});
  auto shuffled = f.predictions;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto b = evaluate_stratified(shuffled, f.labels, f.corpus, {"language"});
  for (auto fmt : {ReportFormat::kTextTable, ReportFormat::kCsv, ReportFormat::kJson}) {
    CHECK(render_report(a, fmt) == render_report(b, fmt));
  }
  const std::vector<EvalReport> both = {a, b};
  const auto table = render_comparison(both);
  CHECK(table.find("Macro Avg") != std::string::npos);
  CHECK(table.find("85.0") != std::string::npos);
  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
}
