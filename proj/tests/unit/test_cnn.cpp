#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lyricdet/audio.hpp"
#include "lyricdet/baseline_cnn.hpp"
#include "lyricdet/dsp.hpp"
#include "lyricdet/error.hpp"
#include "lyricdet/rng.hpp"
#include "lyricdet/smoke.hpp"
#include "support.hpp"

using namespace lyricdet;
using lyricdet::test::TempDir;

namespace {

Spectrogram random_input(std::size_t bins, std::size_t frames, Rng& rng) {
  Spectrogram s;
  s.bins = bins;
  s.frames = frames;
  s.data.resize(bins * frames);
  for (double& v : s.data) v = std::abs(rng.normal());
  return s;
}

}  // namespace

TEST_CASE("cnn parameter count") {
  const std::size_t expected = (16 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 * 9 + 64) + (128 * 64 * 9 + 128) +
                               (128 * 2 + 2);
  CHECK(expected == 97410);
  CHECK(cnn_parameter_count() == expected);
  CHECK(CnnModel(SpectrogramConfig::desk(), TrainConfig{}).parameter_count() == expected);
}

TEST_CASE("spectrogram shape and the 1 kHz bin") {
  SpectrogramConfig cfg;
  const auto x = lyricdet::test::tone(1000.0, 22050, 1.0);
  const Spectrogram s = compute_spectrogram(x, cfg);
  CHECK(s.bins == 1025);
  CHECK(s.frames == 1 + (x.size() - 2048) / 512);
  std::size_t best = 0;
  for (std::size_t b = 0; b < s.bins; ++b) {
    if (s.at(b, 3) > s.at(best, 3)) best = b;
  }
  CHECK(best == 93);  // 1000 * 2048 / 22050 = 92.9
}

TEST_CASE("silence gives a zero spectrogram") {
  SpectrogramConfig cfg = SpectrogramConfig::desk();
  const std::vector<double> zeros(4000, 0.0);
  const Spectrogram s = compute_spectrogram(zeros, cfg);
  CHECK(std::all_of(s.data.begin(), s.data.end(), [](double v) { return v == 0.0; }));
  const Spectrogram n = network_input(zeros, cfg);
  CHECK(std::all_of(n.data.begin(), n.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("parseval on a single frame") {
  SpectrogramConfig cfg;
  cfg.window_size = 512;
  cfg.hop = 512;
  cfg.segment_s = 0.1;
  Rng rng(2);
  std::vector<double> x(512);
  for (double& v : x) v = rng.normal();
  const Spectrogram s = compute_spectrogram(x, cfg);
  REQUIRE(s.frames == 1);
  const auto w = dsp::hann(512);
  double time_energy = 0.0;
  for (std::size_t i = 0; i < 512; ++i) time_energy += (w[i] * x[i]) * (w[i] * x[i]);
  double freq_energy = 0.0;
  for (std::size_t b = 0; b < s.bins; ++b) {
    const double weight = (b == 0 || b == s.bins - 1) ? 1.0 : 2.0;
    freq_energy += weight * s.at(b, 0) * s.at(b, 0);
  }
  CHECK(freq_energy / 512.0 == doctest::Approx(time_energy).epsilon(0.05));
}

TEST_CASE("spectrogram preconditions") {
  SpectrogramConfig cfg = SpectrogramConfig::desk();
  CHECK_THROWS_AS(compute_spectrogram(std::vector<double>(10, 0.1), cfg), PreconditionError);
  std::vector<double> x(1000, 0.1);
  x[5] = std::nan("");
  CHECK_THROWS_AS(compute_spectrogram(x, cfg), PreconditionError);
  cfg.hop = 256;
  CHECK_THROWS_AS(cfg.validate(), PreconditionError);
}

TEST_CASE("cnn gradient matches central differences") {
  TrainConfig tc;
  tc.seed = 6;
  CnnModel m(SpectrogramConfig::desk(), tc);
  Rng rng(10);
  std::vector<double> mean(65), scale(65);
  for (std::size_t b = 0; b < 65; ++b) {
    mean[b] = 0.5 + 0.01 * static_cast<double>(b);
    scale[b] = 1.0 + 0.02 * static_cast<double>(b);
  }
  m.set_standardization(mean, scale);
  const std::vector<Spectrogram> inputs = {random_input(65, 16, rng), random_input(65, 16, rng)};
  const std::vector<int> labels = {0, 1};
  std::vector<double> grad;
  m.loss(inputs, labels, &grad);
  REQUIRE(grad.size() == m.parameter_count());
  const double eps = 1e-4;
  std::size_t checked = 0, kinks = 0;
  for (std::size_t k = 0; k < m.parameter_count(); k += 211) {
    auto p = m.parameters();
    const double orig = p[k];
    p[k] = orig + eps;
    const double up = m.loss(inputs, labels);
    p[k] = orig - eps;
    const double down = m.loss(inputs, labels);
    p[k] = orig;
    const double center = m.loss(inputs, labels);
    const double forward = (up - center) / eps, backward = (center - down) / eps;
    // ReLU or max-pool switches inside [-eps, eps] break differentiability.
    if (std::abs(forward - backward) > 1e-3 * std::max(std::abs(forward) + std::abs(backward), 1e-4)) {
      ++kinks;
      continue;
    }
    const double numeric = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(grad[k]), 1e-6});
    INFO("k=" << k << " numeric=" << numeric << " analytic=" << grad[k]);
    CHECK(std::abs(numeric - grad[k]) / denom < 1e-3);
    ++checked;
  }
  CHECK(checked > 400);
  CHECK(kinks < 20);
}

TEST_CASE("logits stay finite across input scales") {
  CnnModel m(SpectrogramConfig::desk(), TrainConfig{});
  Rng rng(12);
  for (double amp : {0.0, 1e-6, 1e-3, 0.5, 1.0}) {
    std::vector<double> seg(SpectrogramConfig::desk().segment_samples());
    for (double& v : seg) v = amp * rng.normal();
    const double p = m.segment_p_fake(seg);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("signal prediction is the mean over segments") {
  TrainConfig tc;
  tc.seed = 2;
  CnnModel m(SpectrogramConfig::desk(), tc);
  const std::size_t seg = SpectrogramConfig::desk().segment_samples();
  Rng rng(13);
  std::vector<double> x(3 * seg + seg / 2);
  for (double& v : x) v = 0.1 * rng.normal();
  double mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) mean += m.segment_p_fake(std::span<const double>(x).subspan(i * seg, seg));
  mean /= 3.0;
  CHECK(predict_signal(m, x) == doctest::Approx(mean).epsilon(1e-12));

  std::vector<double> short_clip(seg / 3, 0.2);
  std::vector<double> padded(seg, 0.0);
  std::copy(short_clip.begin(), short_clip.end(), padded.begin());
  CHECK(predict_signal(m, short_clip) == m.segment_p_fake(padded));
}

TEST_CASE("cnn serialization round trip") {
  TempDir dir;
  TrainConfig tc;
  tc.seed = 3;
  CnnModel m(SpectrogramConfig::desk(), tc);
  std::vector<double> mean(65, 0.01), scale(65, 40.0);
  m.set_standardization(mean, scale);
  m.set_threshold(0.42);
  m.round_to_float32();
  save_cnn(m, dir / "cnn.bin");
  const CnnModel back = load_cnn(dir / "cnn.bin");
  CHECK(back.threshold() == 0.42);
  CHECK(cnn_fingerprint(back) == cnn_fingerprint(m));
  CHECK(std::equal(back.bin_scale().begin(), back.bin_scale().end(), m.bin_scale().begin()));
  Rng rng(14);
  std::vector<double> seg(SpectrogramConfig::desk().segment_samples());
  for (double& v : seg) v = 0.3 * rng.normal();
  CHECK(back.segment_p_fake(seg) == m.segment_p_fake(seg));

  std::string bytes = cnn_to_bytes(m);
  bytes[bytes.size() / 3] = static_cast<char>(bytes[bytes.size() / 3] ^ 0x20);
  CHECK_THROWS_AS(cnn_from_bytes(bytes), FormatError);
}

TEST_CASE("cnn training is deterministic in the seed") {
  TempDir dir;
  const auto manifest = make_quantization_corpus(dir / "q", 10, 4, 22050, 0.5);
  const Corpus c = load_manifest(manifest);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 4;
  tc.seed = 21;
  const CnnModel a = train_cnn(c, SpectrogramConfig::desk(), tc);
  const CnnModel b = train_cnn(c, SpectrogramConfig::desk(), tc, 2);
  CHECK(cnn_to_bytes(a) == cnn_to_bytes(b));
  CHECK(a.training_log().epoch_loss.size() == 2);
  // The fitted standardization is part of the model.
  CHECK(std::any_of(a.bin_mean().begin(), a.bin_mean().end(), [](double v) { return v != 0.0; }));
}
