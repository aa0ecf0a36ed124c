// One line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "lyricdet/attacks.hpp"
#include "lyricdet/audio.hpp"
#include "lyricdet/baseline_cnn.hpp"
#include "lyricdet/detect.hpp"
#include "lyricdet/dsp.hpp"
#include "lyricdet/encode.hpp"
#include "lyricdet/error.hpp"
#include "lyricdet/evaluate.hpp"
#include "lyricdet/experiment.hpp"
#include "lyricdet/rng.hpp"
#include "lyricdet/smoke.hpp"

using namespace lyricdet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "FAILED " << what << "; ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_root() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / ("lyricdet-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::vector<double> tone(double hz, int rate, double seconds, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return x;
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

double inner_rms(const std::vector<double>& x) {
  const std::size_t skip = x.size() / 5;
  return rms(std::span<const double>(x).subspan(skip, x.size() - 2 * skip));
}

// ---------------------------------------------------------------------------

void metric_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::size_t mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.index(200);
    LabelMap labels;
    std::vector<Prediction> preds;
    long fake_n = 0, fake_hit = 0, real_n = 0, real_hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "x" + std::to_string(i);
      Label truth = rng.uniform() < 0.5 ? Label::kFake : Label::kReal;
      if (i < 2) truth = i == 0 ? Label::kFake : Label::kReal;
      const Label guess = rng.uniform() < 0.5 ? Label::kFake : Label::kReal;
      labels[id] = truth;
      preds.push_back({id, guess == Label::kFake ? 1.0 : 0.0, guess});
      if (truth == Label::kFake) {
        ++fake_n;
        fake_hit += guess == truth;
      } else {
        ++real_n;
        real_hit += guess == truth;
      }
    }
    const double oracle =
        (static_cast<double>(fake_hit) / static_cast<double>(fake_n) +
         static_cast<double>(real_hit) / static_cast<double>(real_n)) / 2.0;
    if (std::abs(macro_recall(preds, labels) - oracle) > 1e-12) ++mismatches;
  }
  const double t = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.require(t < 10.0, "runtime");
  o.detail << "1000 fixtures, " << mismatches << " mismatches";
}

void mlp_contract(Outcome& o) {
  const auto t0 = Clock::now();
  // Blobs at +-3 e1, d = 32, 200 per class.
  Rng rng(1);
  std::vector<EmbeddingRecord> records;
  LabelMap labels;
  for (int i = 0; i < 400; ++i) {
    EmbeddingRecord r;
    r.track_id = "b" + std::to_string(i);
    r.encoder_id = "blobs";
    r.vector.resize(32);
    for (auto& v : r.vector) v = static_cast<float>(rng.normal());
    const bool fake = i % 2 == 1;
    r.vector[0] += fake ? 3.0f : -3.0f;
    labels[r.track_id] = fake ? Label::kFake : Label::kReal;
    records.push_back(std::move(r));
  }
  TrainConfig cfg;
  cfg.max_epochs = 50;
  const DetectorModel m = train(records, labels, cfg);
  ConfusionCounts counts = confusion(predict(m, records), labels);
  const double rf = *counts.recall_fake(), rr = *counts.recall_real();
  o.require(rf >= 0.99 && rr >= 0.99, "blob training recall");
  o.require(m.training_log().epoch_loss.size() <= 50, "epoch budget");

  // Gradient check; entries whose one-sided slopes disagree sit on a ReLU
  // switch and have no derivative to compare against.
  TrainConfig gcfg;
  gcfg.seed = 4;
  DetectorModel g("x", 6, gcfg);
  std::vector<double> x(5 * 6);
  for (double& v : x) v = rng.normal();
  const std::vector<int> y = {0, 1, 1, 0, 1};
  std::vector<double> grad;
  g.loss(x, y, &grad);
  double worst = 0.0;
  std::size_t checked = 0;
  const double eps = 1e-4;
  for (std::size_t k = 0; k < g.parameter_count(); k += 7) {
    auto p = g.parameters();
    const double orig = p[k];
    p[k] = orig + eps;
    const double up = g.loss(x, y);
    p[k] = orig - eps;
    const double down = g.loss(x, y);
    p[k] = orig;
    const double center = g.loss(x, y);
    const double fwd = (up - center) / eps, bwd = (center - down) / eps;
    if (std::abs(fwd - bwd) > 1e-3 * std::max(std::abs(fwd) + std::abs(bwd), 1e-4)) continue;
    const double numeric = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(numeric - grad[k]) / std::max({std::abs(numeric), std::abs(grad[k]), 1e-6}));
    ++checked;
  }
  o.require(worst < 1e-3, "gradient agreement");

  PlateauScheduler sched{TrainConfig{}};
  TrainingLog log;
  for (int epoch = 1; epoch <= 6; ++epoch) sched.observe(epoch, 0.69, log);
  const bool plateau = log.reductions.size() == 1 && log.reductions[0].epoch == 6 &&
                       std::abs(log.reductions[0].new_lr - 1e-4) < 1e-18;
  o.require(plateau, "plateau reduction");

  const double t = seconds_since(t0);
  o.require(t < 60.0, "runtime");
  o.detail << "recall fake " << rf << " real " << rr << ", grad max rel err " << worst << " over " << checked
           << " params, lr " << (log.reductions.empty() ? 0.0 : log.reductions[0].new_lr) << " at epoch "
           << (log.reductions.empty() ? 0 : log.reductions[0].epoch);
}

void architecture_shape(Outcome& o) {
  for (std::size_t d : {768ul, 1024ul, 3584ul, 4096ul}) {
    const std::size_t formula = d * 256 + 256 + 256 * 128 + 128 + 128 * 2 + 2;
    const std::size_t built = DetectorModel("x", d, TrainConfig{}).parameter_count();
    o.require(mlp_parameter_count(d) == formula && built == formula, "d=" + std::to_string(d));
    o.detail << "d=" << d << ":" << built << " ";
  }
  const auto& reg = default_registry();
  o.require(reg.spec("minilmv2").dimension == 1024 && reg.spec("bge-m3").dimension == 1024 &&
                reg.spec("uar-crud").dimension == 768 && reg.spec("uar-mud").dimension == 768 &&
                reg.spec("bge-ml-gemma").dimension == 3584 && reg.spec("llm2vec-llama").dimension == 4096,
            "registry dimensions");
}

void attack_contracts(Outcome& o) {
  constexpr int kRate = 22050;
  auto timed = [&](const char* name, const std::function<void()>& body) {
    const auto t0 = Clock::now();
    body();
    const double t = seconds_since(t0);
    o.require(t < 30.0, std::string(name) + " runtime");
  };

  timed("pitch", [&] {
    AttackSpec s = AttackSpec::defaults(AttackKind::kPitch);
    s.semitones = 12.0;
    const double f = dsp::dominant_frequency(apply_attack(tone(440.0, kRate, 1.0), kRate, s), kRate);
    o.require(std::abs(f / 880.0 - 1.0) <= 0.02, "pitch");
    o.detail << "pitch " << f << " Hz; ";
  });
  timed("stretch", [&] {
    const auto x = tone(440.0, kRate, 2.0);
    AttackSpec s = AttackSpec::defaults(AttackKind::kStretch);
    s.rate = 1.1;
    const auto y = apply_attack(x, kRate, s);
    const double ratio = static_cast<double>(y.size()) / static_cast<double>(x.size());
    o.require(std::abs(ratio * 1.1 - 1.0) <= 0.01, "stretch");
    o.detail << "stretch ratio " << ratio << "; ";
  });

  std::vector<double> music(kRate, 0.0);
  Rng rng(3);
  for (double hz : {220.0, 330.0, 440.0, 660.0}) {
    const auto t = tone(hz, kRate, 1.0, 0.1);
    for (std::size_t i = 0; i < music.size(); ++i) music[i] += t[i];
  }
  for (double& v : music) v += 0.01 * rng.normal();

  timed("noise", [&] {
    double worst = 0.0;
    for (double target : {10.0, 20.0, 30.0}) {
      AttackSpec s = AttackSpec::defaults(AttackKind::kNoise, 5);
      s.target_snr_db = target;
      const auto y = apply_attack(music, kRate, s);
      std::vector<double> n(y.size());
      for (std::size_t i = 0; i < n.size(); ++i) n[i] = y[i] - music[i];
      worst = std::max(worst, std::abs(db(rms(music) / rms(n)) - target));
    }
    o.require(worst <= 0.5, "noise snr");
    o.detail << "snr err " << worst << " dB; ";
  });
  timed("eq", [&] {
    AttackSpec s = AttackSpec::defaults(AttackKind::kEq);
    s.bands = {{1000.0, 6.0, 1.0}};
    auto gain = [&](double hz) {
      const auto x = tone(hz, kRate, 1.0, 0.2);
      return db(inner_rms(apply_attack(x, kRate, s)) / inner_rms(x));
    };
    const double center = gain(1000.0), up = gain(4000.0), down = gain(250.0);
    o.require(std::abs(center - 6.0) <= 1.0, "eq center");
    o.require(std::abs(up) < 1.0 && std::abs(down) < 1.0, "eq two octaves");
    o.detail << "eq center " << center << " dB, +-2 oct " << down << "/" << up << " dB; ";
  });
  timed("reverb", [&] {
    const auto y = apply_attack(music, kRate, AttackSpec::defaults(AttackKind::kReverb, 5));
    const double d = db(rms(y) / rms(music));
    o.require(std::abs(d) <= 3.0, "reverb rms");
    o.detail << "reverb " << d << " dB; ";
  });
  timed("determinism", [&] {
    bool same = true, finite = true;
    for (const auto& spec : default_attack_suite(11)) {
      const auto a = apply_attack(music, kRate, spec);
      const auto b = apply_attack(music, kRate, spec);
      same = same && encode_wav(a, kRate, SampleFormat::kFloat32) == encode_wav(b, kRate, SampleFormat::kFloat32);
      finite = finite && std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
    }
    o.require(same, "deterministic");
    o.require(finite, "nan-free");
    o.detail << "deterministic " << (same ? "yes" : "no") << ", finite " << (finite ? "yes" : "no");
  });
}

void harness_hygiene(Outcome& o) {
  const fs::path dir = scratch_root() / "hygiene";
  const Corpus c = load_manifest(make_smoke_corpus(dir / "corpus", 30, 11));
  for (auto g : kLyricsGenerators) {
    const auto split = leave_one_generator_out(c, g);
    std::set<std::string> train_ids;
    std::size_t leaked = 0, overlap = 0;
    for (const auto& t : split.train) {
      leaked += t.lyrics_generator == g ? 1 : 0;
      train_ids.insert(t.track_id);
    }
    for (const auto& t : split.test) overlap += train_ids.count(t.track_id);
    o.require(leaked == 0 && overlap == 0 && !split.train.empty() && !split.test.empty(),
              std::string("rotation ") + std::string(to_string(g)));
    o.detail << to_string(g) << ": leaked " << leaked << " overlap " << overlap << "; ";
  }

  const Corpus test = select(c, TrackFilter::parse("split=test"));
  const Corpus attacked = attack_corpus(test, AttackSpec::defaults(AttackKind::kNoise, 1),
                                        TrackFilter::parse("source=ai"), dir / "attacked");
  std::size_t perturbed = 0, wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool changed = attacked[i].track_id != test[i].track_id || attacked[i].derivation.has_value();
    if (changed) {
      ++perturbed;
      wrong += test[i].source != Source::kAi;
    } else {
      wrong += test[i].source == Source::kAi;
    }
  }
  o.require(wrong == 0, "attack harness scope");
  o.detail << "attack perturbed " << perturbed << "/" << test.size() << " (all source=ai: " << (wrong == 0 ? "yes" : "no")
           << ")";
}

double macro_of(const EvalReport& r) { return r.overall_macro().value_or(std::nan("")); }

void smoke_reproduction(Outcome& o) {
  const auto t0 = Clock::now();
  const fs::path dir = scratch_root() / "smoke";
  const auto manifest = make_smoke_corpus(dir / "corpus", 100, 7);

  ExperimentPlan lyrics = ExperimentPlan::parse("kind = attack_suite\ndetector = lyrics\nencoder = " +
                                                stub_encoder_id(512, 0) + "\nseed = 7\nmanifest = " +
                                                manifest.string() + "\nout_dir = " + (dir / "lyrics").string() +
                                                "\ncache_dir = " + (dir / "cache").string() + "\n");
  const auto lr = run_experiment(lyrics);
  const double base = macro_of(lr.at(0));
  o.require(base >= 0.95, "lyrics unattacked macro recall");
  o.detail << "lyrics " << base;
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < lr.size(); ++i) {
    const double drop = base - macro_of(lr[i]);
    worst_drop = std::max(worst_drop, drop);
    o.detail << " " << lr[i].condition << ":" << macro_of(lr[i]);
  }
  o.require(lr.size() == 6 && worst_drop <= 0.02, "lyrics attack drop");

  ExperimentPlan cnn = ExperimentPlan::parse("kind = attack_suite\ndetector = cnn\nseed = 7\nattacks = noise,eq\n"
                                             "manifest = " + manifest.string() + "\nout_dir = " +
                                             (dir / "cnn").string() + "\n");
  const auto cr = run_experiment(cnn);
  const double cbase = macro_of(cr.at(0));
  o.detail << "; cnn " << cbase;
  for (std::size_t i = 1; i < cr.size(); ++i) {
    const double drop = cbase - macro_of(cr[i]);
    o.require(drop >= 0.10, "cnn drop under " + cr[i].condition);
    o.detail << " " << cr[i].condition << ":" << macro_of(cr[i]);
  }
  o.require(cr.size() == 3, "cnn report count");
  const double t = seconds_since(t0);
  o.require(t < 600.0, "runtime");
}

void cnn_desk(Outcome& o) {
  const fs::path dir = scratch_root() / "quant";
  const Corpus c = load_manifest(make_quantization_corpus(dir, 60, 1));
  const auto spec = SpectrogramConfig::desk();
  TrainConfig cfg = ExperimentPlan::default_cnn_train_config();
  cfg.seed = 1;
  const CnnModel m = train_cnn(c, spec, cfg);
  const Corpus test = select(c, TrackFilter::parse("split=test"));
  const auto batch = predict_cnn_corpus(m, test);
  const auto counts = confusion(batch.predictions, labels_from(test));
  const double rf = counts.recall_fake().value_or(0.0), rr = counts.recall_real().value_or(0.0);
  o.require(batch.failures.empty(), "prediction failures");
  o.require(rf >= 0.9 && rr >= 0.9, "per-class recall");

  SpectrogramConfig big;
  const auto s = compute_spectrogram(tone(1000.0, big.sample_rate, 1.0), big);
  std::size_t best = 0;
  for (std::size_t b = 0; b < s.bins; ++b) {
    if (s.at(b, 2) > s.at(best, 2)) best = b;
  }
  const double expected = 1000.0 * static_cast<double>(big.window_size) / big.sample_rate;
  o.require(std::abs(static_cast<double>(best) - expected) <= 1.0, "bin mapping");
  o.detail << "test recall fake " << rf << " real " << rr << " (" << test.size() << " tracks); 1 kHz peak bin " << best
           << " vs " << expected;
}

void truncation_invariance(Outcome& o) {
  std::string text;
  for (int i = 0; i < 600; ++i) text += "tok" + std::to_string(i % 53) + (i % 9 == 8 ? "\n" : " ");
  const auto [prefix, cut] = truncate_to_tokens(text, 512);
  o.require(cut && count_tokens(text) == 600 && count_tokens(prefix) == 512, "prefix construction");
  std::size_t tested = 0;
  for (const auto& spec : default_registry().specs()) {
    std::unique_ptr<TextEncoder> enc;
    try {
      enc = default_registry().create(spec.encoder_id);
    } catch (const EncoderError&) {
      continue;  // needs model weights not present here
    }
    const auto a = enc->encode(text), b = enc->encode(prefix);
    o.require(a.vector == b.vector && a.truncated && !b.truncated, spec.encoder_id);
    ++tested;
  }
  for (const std::string& id : {stub_encoder_id(512, 0), stub_encoder_id(64, 9)}) {
    auto enc = default_registry().create(id);
    const auto a = enc->encode(text), b = enc->encode(prefix);
    o.require(a.vector == b.vector && a.truncated && !b.truncated, id);
    ++tested;
  }
  o.detail << tested << " encoder interfaces exact";
}

void serialization(Outcome& o) {
  const fs::path dir = scratch_root() / "serial";
  fs::create_directories(dir);
  Rng rng(8);
  std::vector<EmbeddingRecord> records;
  LabelMap labels;
  for (int i = 0; i < 60; ++i) {
    EmbeddingRecord r{"s" + std::to_string(i), "blobs", std::vector<float>(16), false};
    for (auto& v : r.vector) v = static_cast<float>(rng.normal());
    r.vector[1] += i % 2 ? 2.0f : -2.0f;
    labels[r.track_id] = i % 2 ? Label::kFake : Label::kReal;
    records.push_back(std::move(r));
  }
  TrainConfig cfg;
  cfg.max_epochs = 5;
  const DetectorModel m = train(records, labels, cfg);
  save_model(m, dir / "m.bin");
  const DetectorModel back = load_model(dir / "m.bin");
  std::vector<EmbeddingRecord> probe;
  for (int i = 0; i < 100; ++i) {
    EmbeddingRecord r{"p" + std::to_string(i), "blobs", std::vector<float>(16), false};
    for (auto& v : r.vector) v = static_cast<float>(rng.normal() * 2);
    probe.push_back(std::move(r));
  }
  const auto a = predict(m, probe), b = predict(back, probe);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differing += a[i].p_fake != b[i].p_fake;
  o.require(a.size() == 100 && differing == 0, "bit-identical predictions");

  // Report CSV round trip on a stratified report.
  std::vector<Track> tracks;
  std::vector<Prediction> preds;
  for (int i = 0; i < 40; ++i) {
    Track t;
    t.track_id = "r" + std::to_string(i);
    t.language = std::string(kLanguages[static_cast<std::size_t>(i) % 4]);
    t.genre = genres_for(t.language)[static_cast<std::size_t>(i) % 3];
    t.split = Split::kTest;
    if (i % 2) {
      t.source = Source::kAi;
      t.lyrics_generator = LyricsGenerator::kMistral;
      t.audio_generator = AudioGenerator::kSuno;
    }
    const Label guess = rng.uniform() < 0.7 ? (i % 2 ? Label::kFake : Label::kReal) : (i % 2 ? Label::kReal : Label::kFake);
    preds.push_back({t.track_id, guess == Label::kFake ? 0.8 : 0.2, guess});
    tracks.push_back(std::move(t));
  }
  const Corpus c("serial", tracks, {});
  const auto report = evaluate_stratified(preds, labels_from(c), c, {"language", "genre", "language+genre"});
  const auto parsed = parse_report_csv(render_report(report, ReportFormat::kCsv));
  bool counts_equal = parsed.strata.size() == report.strata.size() && parsed.overall == report.overall;
  for (std::size_t i = 0; counts_equal && i < report.strata.size(); ++i) {
    counts_equal = parsed.strata[i].counts == report.strata[i].counts && parsed.strata[i].value == report.strata[i].value;
  }
  o.require(counts_equal, "csv counts");

  std::string bytes = model_to_bytes(m);
  std::size_t rejected = 0, tried = 0;
  for (std::size_t pos = 16; pos < bytes.size(); pos += bytes.size() / 25 + 1) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x04);
    ++tried;
    try {
      model_from_bytes(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  o.require(rejected == tried, "corruption rejected");
  o.detail << "100/100 identical: " << (differing == 0 ? "yes" : "no") << ", csv " << report.strata.size()
           << " strata preserved: " << (counts_equal ? "yes" : "no") << ", corrupted " << rejected << "/" << tried
           << " rejected";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"1 metric oracle", metric_oracle},
      {"2 mlp contract", mlp_contract},
      {"3 architecture shape", architecture_shape},
      {"4 attack transforms", attack_contracts},
      {"5 harness hygiene", harness_hygiene},
      {"6 smoke reproduction", smoke_reproduction},
      {"7 cnn desk scale", cnn_desk},
      {"8 truncation invariance", truncation_invariance},
      {"9 serialization", serialization},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::printf("[%s] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
