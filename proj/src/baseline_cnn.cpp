#include "lyricdet/baseline_cnn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>

#include "lyricdet/audio.hpp"
#include "lyricdet/container.hpp"
#include "lyricdet/dsp.hpp"
#include "lyricdet/hashing.hpp"
#include "lyricdet/parallel.hpp"
#include "lyricdet/rng.hpp"

namespace lyricdet {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

constexpr std::string_view kMagic = "LYRDCNN";
constexpr std::size_t kKernel = 9;  // 3x3

struct ConvLayout {
  std::size_t cin, cout, w_offset, b_offset;
};

struct Layout {
  std::array<ConvLayout, kCnnChannels.size()> conv;
  std::size_t head_w, head_b, total;
};

Layout make_layout() {
  Layout l{};
  std::size_t offset = 0, cin = 1;
  for (std::size_t i = 0; i < kCnnChannels.size(); ++i) {
    const std::size_t cout = kCnnChannels[i];
    l.conv[i] = {cin, cout, offset, offset + cout * cin * kKernel};
    offset = l.conv[i].b_offset + cout;
    cin = cout;
  }
  l.head_w = offset;
  l.head_b = offset + 2 * cin;
  l.total = l.head_b + 2;
  return l;
}

const Layout& layout() {
  static const Layout l = make_layout();
  return l;
}

dsp::RealFft& fft_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<dsp::RealFft>> plans;
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<dsp::RealFft>(n);
  return *slot;
}

// (C, H*W) -> (C*9, H*W) with zero padding of one pixel.
RowMatrix im2col(const RowMatrix& x, std::size_t h, std::size_t w) {
  const auto c_in = static_cast<std::size_t>(x.rows());
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(c_in * kKernel), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < c_in; ++c) {
    const double* src = x.data() + c * h * w;
    for (std::size_t k = 0; k < kKernel; ++k) {
      const long dy = static_cast<long>(k / 3) - 1, dx = static_cast<long>(k % 3) - 1;
      double* dst = col.data() + (c * kKernel + k) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t xx = 0; xx < w; ++xx) {
          const long sx = static_cast<long>(xx) + dx;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          dst[y * w + xx] = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
        }
      }
    }
  }
  return col;
}

RowMatrix col2im(const RowMatrix& col, std::size_t c_in, std::size_t h, std::size_t w) {
  RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(c_in), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < c_in; ++c) {
    double* dst = x.data() + c * h * w;
    for (std::size_t k = 0; k < kKernel; ++k) {
      const long dy = static_cast<long>(k / 3) - 1, dx = static_cast<long>(k % 3) - 1;
      const double* src = col.data() + (c * kKernel + k) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t xx = 0; xx < w; ++xx) {
          const long sx = static_cast<long>(xx) + dx;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          dst[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += src[y * w + xx];
        }
      }
    }
  }
  return x;
}

struct BlockCache {
  RowMatrix col;
  RowMatrix act;  // post-ReLU, before pooling
  std::vector<std::size_t> argmax;
  std::size_t h = 0, w = 0;
};

struct Forward {
  std::array<BlockCache, kCnnChannels.size()> blocks;
  RowMatrix last;  // final pooled map (128, n)
  Eigen::VectorXd pooled;
  std::array<double, 2> logits{};
};

Forward run_forward(std::span<const double> params, const Spectrogram& input) {
  if (input.bins < 16 || input.frames < 16) {
    throw PreconditionError("CNN input must be at least 16 x 16, got " + std::to_string(input.bins) + " x " +
                            std::to_string(input.frames));
  }
  const auto& lay = layout();
  Forward f;
  RowMatrix x = ConstMatMap(input.data.data(), 1, static_cast<Eigen::Index>(input.data.size()));
  std::size_t h = input.bins, w = input.frames;
  for (std::size_t i = 0; i < lay.conv.size(); ++i) {
    const auto& cl = lay.conv[i];
    auto& bc = f.blocks[i];
    bc.h = h;
    bc.w = w;
    bc.col = im2col(x, h, w);
    ConstMatMap wm(params.data() + cl.w_offset, static_cast<Eigen::Index>(cl.cout),
                   static_cast<Eigen::Index>(cl.cin * kKernel));
    Eigen::Map<const Eigen::VectorXd> b(params.data() + cl.b_offset, static_cast<Eigen::Index>(cl.cout));
    bc.act = wm * bc.col;
    bc.act.colwise() += b;
    bc.act = bc.act.cwiseMax(0.0);

    const std::size_t ph = h / 2, pw = w / 2;
    RowMatrix pooled(static_cast<Eigen::Index>(cl.cout), static_cast<Eigen::Index>(ph * pw));
    bc.argmax.resize(cl.cout * ph * pw);
    for (std::size_t c = 0; c < cl.cout; ++c) {
      const double* a = bc.act.data() + c * h * w;
      for (std::size_t y = 0; y < ph; ++y) {
        for (std::size_t xx = 0; xx < pw; ++xx) {
          std::size_t best = (2 * y) * w + 2 * xx;
          for (std::size_t idx : {best + 1, best + w, best + w + 1}) {
            if (a[idx] > a[best]) best = idx;
          }
          pooled(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(y * pw + xx)) = a[best];
          bc.argmax[c * ph * pw + y * pw + xx] = best;
        }
      }
    }
    x = std::move(pooled);
    h = ph;
    w = pw;
  }
  f.last = std::move(x);
  f.pooled = f.last.rowwise().mean();
  ConstMatMap hw(params.data() + lay.head_w, 2, static_cast<Eigen::Index>(kCnnChannels.back()));
  const Eigen::Vector2d z = hw * f.pooled + Eigen::Map<const Eigen::Vector2d>(params.data() + lay.head_b);
  f.logits = {z[0], z[1]};
  return f;
}

// Accumulates d loss / d params for one sample into grad given d loss / d logits.
void run_backward(std::span<const double> params, const Forward& f, const std::array<double, 2>& dlogits,
                  std::vector<double>& grad) {
  const auto& lay = layout();
  const Eigen::Vector2d dz(dlogits[0], dlogits[1]);
  const auto c_last = static_cast<Eigen::Index>(kCnnChannels.back());
  MatMap(grad.data() + lay.head_w, 2, c_last) += dz * f.pooled.transpose();
  Eigen::Map<Eigen::Vector2d>(grad.data() + lay.head_b) += dz;
  ConstMatMap hw(params.data() + lay.head_w, 2, c_last);
  const Eigen::VectorXd dpooled = hw.transpose() * dz;
  const double n = static_cast<double>(f.last.cols());
  RowMatrix dx = (dpooled / n).replicate(1, f.last.cols());

  for (std::size_t i = lay.conv.size(); i-- > 0;) {
    const auto& cl = lay.conv[i];
    const auto& bc = f.blocks[i];
    RowMatrix dact = RowMatrix::Zero(bc.act.rows(), bc.act.cols());
    const std::size_t pooled_n = static_cast<std::size_t>(dx.cols());
    for (std::size_t c = 0; c < cl.cout; ++c) {
      for (std::size_t p = 0; p < pooled_n; ++p) {
        dact(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(bc.argmax[c * pooled_n + p])) +=
            dx(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p));
      }
    }
    dact = dact.cwiseProduct((bc.act.array() > 0.0).cast<double>().matrix());
    MatMap(grad.data() + cl.w_offset, static_cast<Eigen::Index>(cl.cout),
           static_cast<Eigen::Index>(cl.cin * kKernel)) += dact * bc.col.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + cl.b_offset, static_cast<Eigen::Index>(cl.cout)) +=
        dact.rowwise().sum();
    if (i == 0) break;
    ConstMatMap wm(params.data() + cl.w_offset, static_cast<Eigen::Index>(cl.cout),
                   static_cast<Eigen::Index>(cl.cin * kKernel));
    const RowMatrix dcol = wm.transpose() * dact;
    dx = col2im(dcol, cl.cin, bc.h, bc.w);
  }
}

double prob_fake(double z0, double z1) { return 1.0 / (1.0 + std::exp(z0 - z1)); }

std::vector<double> segment_at(std::span<const double> audio, std::size_t offset, std::size_t length) {
  std::vector<double> seg(length, 0.0);
  if (offset < audio.size()) {
    const std::size_t n = std::min(length, audio.size() - offset);
    std::copy_n(audio.begin() + static_cast<std::ptrdiff_t>(offset), n, seg.begin());
  }
  return seg;
}

}  // namespace

void SpectrogramConfig::validate() const {
  if (sample_rate <= 0) throw PreconditionError("sample_rate must be positive");
  if (window_size < 2) throw PreconditionError("window_size must be at least 2");
  if (hop == 0 || hop > window_size) throw PreconditionError("hop must be in [1, window_size]");
  if (!(segment_s > 0.0) || segment_samples() < window_size) {
    throw PreconditionError("segment_s * sample_rate must be at least window_size");
  }
}

std::size_t SpectrogramConfig::segment_samples() const {
  return static_cast<std::size_t>(std::llround(segment_s * sample_rate));
}

std::string SpectrogramConfig::to_json() const {
  nlohmann::ordered_json j;
  j["sample_rate"] = sample_rate;
  j["window_size"] = window_size;
  j["hop"] = hop;
  j["window"] = "hann";
  j["segment_s"] = segment_s;
  j["magnitude"] = log_magnitude ? "log1p" : "linear";
  return j.dump();
}

SpectrogramConfig SpectrogramConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SpectrogramConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.window_size = j.value("window_size", c.window_size);
  c.hop = j.value("hop", c.hop);
  c.segment_s = j.value("segment_s", c.segment_s);
  c.log_magnitude = j.value("magnitude", std::string("linear")) == "log1p";
  return c;
}

SpectrogramConfig SpectrogramConfig::desk() {
  SpectrogramConfig c;
  c.window_size = 128;
  c.hop = 64;
  c.segment_s = 0.25;
  return c;
}

Spectrogram compute_spectrogram(std::span<const double> audio, const SpectrogramConfig& config) {
  config.validate();
  const std::size_t n = config.window_size;
  if (audio.size() < n) {
    throw PreconditionError("audio has " + std::to_string(audio.size()) + " samples, window needs " +
                            std::to_string(n));
  }
  for (double v : audio) {
    if (!std::isfinite(v)) throw PreconditionError("audio contains non-finite samples");
  }
  const auto window = dsp::hann(n);
  auto& fft = fft_for(n);
  Spectrogram s;
  s.bins = fft.bins();
  s.frames = 1 + (audio.size() - n) / config.hop;
  s.data.assign(s.bins * s.frames, 0.0);
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spectrum(s.bins);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const std::size_t start = f * config.hop;
    for (std::size_t i = 0; i < n; ++i) frame[i] = audio[start + i] * window[i];
    fft.forward(frame, spectrum);
    for (std::size_t b = 0; b < s.bins; ++b) s.data[b * s.frames + f] = std::abs(spectrum[b]);
  }
  return s;
}

Spectrogram network_input(std::span<const double> segment, const SpectrogramConfig& config) {
  std::vector<double> x(segment.begin(), segment.end());
  const double r = rms(x);
  if (r > 0.0) {
    for (double& v : x) v /= r;
  }
  Spectrogram s = compute_spectrogram(x, config);
  const auto window = dsp::hann(config.window_size);
  const double scale = 1.0 / std::accumulate(window.begin(), window.end(), 0.0);
  for (double& v : s.data) v = config.log_magnitude ? std::log1p(v * scale) : v * scale;
  return s;
}

std::size_t cnn_parameter_count() { return layout().total; }

CnnModel::CnnModel(const SpectrogramConfig& spectrogram, const TrainConfig& config)
    : spec_(spectrogram), config_(config) {
  spec_.validate();
  const auto& lay = layout();
  params_.assign(lay.total, 0.0);
  const std::size_t bins = spec_.window_size / 2 + 1;
  bin_mean_.assign(bins, 0.0);
  bin_scale_.assign(bins, 1.0);
  if (config_.init == InitScheme::kZeros) return;
  Rng rng(mix64(config_.seed ^ 0x636e6e69ULL));
  // He-uniform conv weights: without normalization layers the fan-in default
  // shrinks activations through four ReLU blocks until the head sees a constant.
  for (const auto& cl : lay.conv) {
    const double fan_in = static_cast<double>(cl.cin * kKernel);
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = cl.w_offset; i < cl.b_offset; ++i) params_[i] = rng.uniform(-w_bound, w_bound);
    for (std::size_t i = cl.b_offset; i < cl.b_offset + cl.cout; ++i) params_[i] = rng.uniform(-b_bound, b_bound);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(kCnnChannels.back()));
  for (std::size_t i = lay.head_w; i < lay.total; ++i) params_[i] = rng.uniform(-bound, bound);
}

void CnnModel::set_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("threshold must lie in (0, 1)");
  threshold_ = threshold;
}

void CnnModel::set_standardization(std::vector<double> mean, std::vector<double> scale) {
  const std::size_t bins = spec_.window_size / 2 + 1;
  if (mean.size() != bins || scale.size() != bins) throw PreconditionError("standardization needs one value per bin");
  for (std::size_t i = 0; i < bins; ++i) {
    if (!std::isfinite(mean[i]) || !std::isfinite(scale[i]) || !(scale[i] > 0.0)) {
      throw PreconditionError("standardization values must be finite with positive scale");
    }
  }
  bin_mean_ = std::move(mean);
  bin_scale_ = std::move(scale);
}

Spectrogram CnnModel::standardized(const Spectrogram& input) const {
  if (input.bins != bin_mean_.size()) throw PreconditionError("input bin count does not match the model");
  Spectrogram s = input;
  for (std::size_t b = 0; b < s.bins; ++b) {
    double* row = s.data.data() + b * s.frames;
    for (std::size_t f = 0; f < s.frames; ++f) row[f] = (row[f] - bin_mean_[b]) * bin_scale_[b];
  }
  return s;
}

std::array<double, 2> CnnModel::logits(const Spectrogram& input) const {
  return run_forward(params_, standardized(input)).logits;
}

double CnnModel::p_fake(const Spectrogram& input) const {
  const auto z = logits(input);
  return prob_fake(z[0], z[1]);
}

double CnnModel::loss(std::span<const Spectrogram> inputs, std::span<const int> labels,
                      std::vector<double>* grad) const {
  if (inputs.empty() || inputs.size() != labels.size()) throw PreconditionError("batch shape mismatch");
  if (grad) grad->assign(params_.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Forward f = run_forward(params_, standardized(inputs[i]));
    const double z0 = f.logits[0], z1 = f.logits[1];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    total += lse - (labels[i] == 1 ? z1 : z0);
    if (grad) {
      const double p1 = prob_fake(z0, z1);
      const std::array<double, 2> dz = {((1.0 - p1) - (labels[i] == 0 ? 1.0 : 0.0)) * inv_n,
                                        (p1 - (labels[i] == 1 ? 1.0 : 0.0)) * inv_n};
      run_backward(params_, f, dz, *grad);
    }
  }
  return total * inv_n;
}

double CnnModel::segment_p_fake(std::span<const double> segment) const {
  return p_fake(network_input(segment, spec_));
}

void CnnModel::round_to_float32() {
  for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
  for (double& p : bin_mean_) p = static_cast<double>(static_cast<float>(p));
  for (double& p : bin_scale_) p = static_cast<double>(static_cast<float>(p));
}

CnnModel train_cnn(const Corpus& corpus, const SpectrogramConfig& spectrogram, const TrainConfig& config,
                   std::size_t workers) {
  config.validate();
  spectrogram.validate();
  std::vector<const Track*> tracks;
  for (const auto& t : corpus) {
    if (t.split == Split::kTrain) tracks.push_back(&t);
  }
  if (tracks.empty()) throw PreconditionError("no train-split tracks to train the CNN on");
  std::size_t fakes = 0;
  for (const auto* t : tracks) fakes += t->is_fake() ? 1 : 0;
  if (fakes == 0 || fakes == tracks.size()) {
    throw PreconditionError("CNN training data must contain both real and fake tracks");
  }

  std::vector<std::vector<double>> audio(tracks.size());
  std::vector<std::optional<std::string>> errors(tracks.size());
  parallel_for(tracks.size(), std::max<std::size_t>(1, workers), [&](std::size_t i) {
    try {
      const auto file = corpus.audio_file(*tracks[i]);
      if (!file) throw AudioError("track has no audio_path");
      audio[i] = load_mono(*file, spectrogram.sample_rate).samples;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<ItemFailure> failures;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (errors[i]) failures.push_back({tracks[i]->track_id, *errors[i]});
  }
  if (!failures.empty()) {
    throw BatchError(std::to_string(failures.size()) + " training track(s) could not be decoded", failures);
  }

  CnnModel model(spectrogram, config);
  {
    // Standardization statistics from one segment per track, drawn from an
    // RNG stream separate from the epoch sampling.
    Rng stats_rng(mix64(config.seed ^ 0x7374617473ULL));
    const std::size_t seg = spectrogram.segment_samples();
    const std::size_t bins = spectrogram.window_size / 2 + 1;
    std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0);
    double count = 0.0;
    for (const auto& x : audio) {
      const std::size_t offset = x.size() > seg ? stats_rng.index(x.size() - seg + 1) : 0;
      const Spectrogram s = network_input(segment_at(x, offset, seg), spectrogram);
      for (std::size_t b = 0; b < bins; ++b) {
        for (std::size_t f = 0; f < s.frames; ++f) {
          const double v = s.at(b, f);
          sum[b] += v;
          sum_sq[b] += v * v;
        }
      }
      count += static_cast<double>(s.frames);
    }
    std::vector<double> mean(bins), scale(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      mean[b] = sum[b] / count;
      const double var = std::max(0.0, sum_sq[b] / count - mean[b] * mean[b]);
      scale[b] = 1.0 / (std::sqrt(var) + 1e-9);
    }
    model.set_standardization(std::move(mean), std::move(scale));
  }
  AdamW optimizer(model.parameter_count(), config);
  PlateauScheduler scheduler(config);
  Rng rng(mix64(config.seed ^ 0x7365676dULL));
  const std::size_t seg = spectrogram.segment_samples();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  std::vector<std::size_t> order(tracks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Spectrogram> inputs;
  std::vector<int> labels;
  std::vector<double> grad;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    const double lr = scheduler.lr();
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      inputs.clear();
      labels.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& x = audio[order[k]];
        const std::size_t offset = x.size() > seg ? rng.index(x.size() - seg + 1) : 0;
        inputs.push_back(network_input(segment_at(x, offset, seg), spectrogram));
        labels.push_back(tracks[order[k]]->is_fake() ? 1 : 0);
      }
      const double batch_loss = model.loss(inputs, labels, &grad);
      if (!std::isfinite(batch_loss)) {
        throw Error("non-finite CNN training loss at epoch " + std::to_string(epoch));
      }
      total += batch_loss * static_cast<double>(stop - start);
      optimizer.step(model.params_, grad, lr);
    }
    const double epoch_loss = total / static_cast<double>(order.size());
    model.log_.epoch_loss.push_back(epoch_loss);
    model.log_.epoch_lr.push_back(lr);
    scheduler.observe(epoch, epoch_loss, model.log_);
    if (scheduler.lr() < config.min_learning_rate) {
      model.log_.stopped_on_min_lr = true;
      break;
    }
  }
  model.round_to_float32();
  return model;
}

double predict_signal(const CnnModel& model, std::span<const double> mono) {
  const std::size_t seg = model.spectrogram_config().segment_samples();
  const std::size_t count = std::max<std::size_t>(1, mono.size() / seg);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += model.segment_p_fake(segment_at(mono, i * seg, seg));
  return sum / static_cast<double>(count);
}

Prediction predict_cnn(const CnnModel& model, const Track& track, const Corpus& corpus) {
  const auto file = corpus.audio_file(track);
  if (!file) throw AudioError("track \"" + track.track_id + "\" has no audio_path");
  const Signal s = load_mono(*file, model.spectrogram_config().sample_rate);
  if (s.samples.empty()) throw EmptyAudioError("track \"" + track.track_id + "\" has no samples");
  const double p = predict_signal(model, s.samples);
  return {track.track_id, p, model.classify(p)};
}

CnnPredictionBatch predict_cnn_corpus(const CnnModel& model, const Corpus& corpus, std::size_t workers) {
  std::vector<std::optional<Prediction>> slots(corpus.size());
  std::vector<std::optional<std::string>> errors(corpus.size());
  parallel_for(corpus.size(), std::max<std::size_t>(1, workers), [&](std::size_t i) {
    try {
      slots[i] = predict_cnn(model, corpus[i], corpus);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  CnnPredictionBatch out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (slots[i]) out.predictions.push_back(*std::move(slots[i]));
    if (errors[i]) out.failures.push_back({corpus[i].track_id, *errors[i]});
  }
  return out;
}

std::string cnn_to_bytes(const CnnModel& model) {
  nlohmann::ordered_json header;
  header["channels"] = kCnnChannels;
  header["spectrogram"] = nlohmann::ordered_json::parse(model.spectrogram_config().to_json());
  header["threshold"] = model.threshold();
  header["seed"] = model.seed();
  header["train_config"] = nlohmann::ordered_json::parse(model.train_config().to_json());
  header["epoch_loss"] = model.training_log().epoch_loss;
  Container c;
  c.version = kCnnSchemaVersion;
  c.header = header.dump();
  for (double p : model.parameters()) c.values.push_back(static_cast<float>(p));
  for (double p : model.bin_mean()) c.values.push_back(static_cast<float>(p));
  for (double p : model.bin_scale()) c.values.push_back(static_cast<float>(p));
  return seal_container(kMagic, c);
}

CnnModel cnn_from_bytes(std::string_view bytes) {
  const Container c = open_container(bytes, kMagic, kCnnSchemaVersion);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(c.header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  if (header.at("channels").get<std::vector<std::size_t>>() !=
      std::vector<std::size_t>(kCnnChannels.begin(), kCnnChannels.end())) {
    throw FormatError("unexpected channel layout in CNN model file");
  }
  CnnModel m;
  m.spec_ = SpectrogramConfig::from_json(header.at("spectrogram").dump());
  const std::size_t bins = m.spec_.window_size / 2 + 1;
  const std::size_t n = cnn_parameter_count();
  if (c.values.size() != n + 2 * bins) throw FormatError("parameter count mismatch");
  m.config_ = TrainConfig::from_json(header.at("train_config").dump());
  m.threshold_ = header.at("threshold").get<double>();
  m.log_.epoch_loss = header.value("epoch_loss", std::vector<double>{});
  m.params_.assign(c.values.begin(), c.values.begin() + n);
  m.bin_mean_.assign(c.values.begin() + n, c.values.begin() + n + bins);
  m.bin_scale_.assign(c.values.begin() + n + bins, c.values.end());
  return m;
}

void save_cnn(const CnnModel& model, const std::filesystem::path& path) {
  write_file_bytes(path.string(), cnn_to_bytes(model));
}

CnnModel load_cnn(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("model file not found: " + path.string());
  return cnn_from_bytes(read_file_bytes(path.string()));
}

std::string cnn_fingerprint(const CnnModel& model) { return fingerprint(cnn_to_bytes(model)); }

}  // namespace lyricdet
