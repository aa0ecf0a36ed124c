#include "lyricdet/detect.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "lyricdet/container.hpp"
#include "lyricdet/hashing.hpp"
#include "lyricdet/rng.hpp"

namespace lyricdet {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

constexpr std::string_view kMagic = "LYRDMLP";

struct Layer {
  std::size_t in, out, w_offset, b_offset;
};

std::vector<Layer> layout(std::size_t input_dim) {
  const std::size_t sizes[] = {input_dim, kHiddenSizes[0], kHiddenSizes[1], 2};
  std::vector<Layer> layers;
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < std::size(sizes); ++i) {
    Layer l{sizes[i], sizes[i + 1], offset, offset + sizes[i] * sizes[i + 1]};
    offset = l.b_offset + l.out;
    layers.push_back(l);
  }
  return layers;
}

// Numerically stable two-way softmax probability of class 1.
double prob_fake(double z0, double z1) { return 1.0 / (1.0 + std::exp(z0 - z1)); }

}  // namespace

std::string_view to_string(Label label) { return label == Label::kFake ? "fake" : "real"; }

Label parse_label(std::string_view s) {
  if (s == "fake") return Label::kFake;
  if (s == "real") return Label::kReal;
  throw Error("unknown label \"" + std::string(s) + "\"");
}

LabelMap labels_from(const Corpus& corpus) {
  LabelMap labels;
  for (const auto& t : corpus) labels.emplace(t.track_id, t.is_fake() ? Label::kFake : Label::kReal);
  return labels;
}

std::size_t mlp_parameter_count(std::size_t d) {
  return d * 256 + 256 + 256 * 128 + 128 + 128 * 2 + 2;
}

DetectorModel::DetectorModel(std::string encoder_id, std::size_t input_dim, const TrainConfig& config)
    : encoder_id_(std::move(encoder_id)), input_dim_(input_dim), config_(config) {
  if (input_dim_ == 0) throw PreconditionError("input dimension must be positive");
  params_.assign(mlp_parameter_count(input_dim_), 0.0);
  if (config_.init == InitScheme::kZeros) return;
  Rng rng(mix64(config_.seed ^ 0x6d6c7069ULL));
  for (const auto& l : layout(input_dim_)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (std::size_t i = l.w_offset; i < l.b_offset + l.out; ++i) params_[i] = rng.uniform(-bound, bound);
  }
}

std::vector<std::size_t> DetectorModel::layer_sizes() const {
  return {input_dim_, kHiddenSizes[0], kHiddenSizes[1], 2};
}

void DetectorModel::set_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("threshold must lie in (0, 1)");
  threshold_ = threshold;
}

double DetectorModel::p_fake(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw PreconditionError("vector has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(input_dim_));
  }
  Eigen::RowVectorXd a = ConstVecMap(x.data(), static_cast<Eigen::Index>(x.size()));
  const auto layers = layout(input_dim_);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    ConstMatMap w(params_.data() + l.w_offset, l.out, l.in);
    ConstVecMap b(params_.data() + l.b_offset, l.out);
    Eigen::RowVectorXd z = a * w.transpose() + b;
    a = i + 1 < layers.size() ? Eigen::RowVectorXd(z.cwiseMax(0.0)) : z;
  }
  return prob_fake(a[0], a[1]);
}

double DetectorModel::p_fake(std::span<const float> x) const {
  std::vector<double> v(x.begin(), x.end());
  return p_fake(std::span<const double>(v));
}

double DetectorModel::loss(std::span<const double> x, std::span<const int> y, std::vector<double>* grad) const {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n == 0 || x.size() != y.size() * input_dim_) throw PreconditionError("batch shape mismatch");
  const auto layers = layout(input_dim_);

  // Forward, keeping every activation for the backward pass.
  std::vector<RowMatrix> acts;
  acts.emplace_back(ConstMatMap(x.data(), n, static_cast<Eigen::Index>(input_dim_)));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    ConstMatMap w(params_.data() + l.w_offset, l.out, l.in);
    ConstVecMap b(params_.data() + l.b_offset, l.out);
    RowMatrix z = acts.back() * w.transpose();
    z.rowwise() += b;
    if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }

  const RowMatrix& logits = acts.back();
  RowMatrix delta(n, 2);
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double z0 = logits(r, 0), z1 = logits(r, 1);
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    const int label = y[static_cast<std::size_t>(r)];
    total += lse - (label == 1 ? z1 : z0);
    const double p1 = prob_fake(z0, z1);
    delta(r, 0) = (1.0 - p1) - (label == 0 ? 1.0 : 0.0);
    delta(r, 1) = p1 - (label == 1 ? 1.0 : 0.0);
  }
  const double mean_loss = total / static_cast<double>(n);
  if (!grad) return mean_loss;

  grad->assign(params_.size(), 0.0);
  delta /= static_cast<double>(n);
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    MatMap gw(grad->data() + l.w_offset, l.out, l.in);
    VecMap gb(grad->data() + l.b_offset, l.out);
    gw = delta.transpose() * acts[i];
    gb = delta.colwise().sum();
    if (i == 0) break;
    ConstMatMap w(params_.data() + l.w_offset, l.out, l.in);
    RowMatrix upstream = delta * w;
    // ReLU derivative: the stored activation is positive exactly where the pre-activation was.
    delta = upstream.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
  }
  return mean_loss;
}

void DetectorModel::round_to_float32() {
  for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
}

DetectorModel train(std::span<const EmbeddingRecord> embeddings, const LabelMap& labels,
                    const TrainConfig& config) {
  config.validate();
  if (embeddings.empty()) throw PreconditionError("no embeddings to train on");
  const std::string& encoder_id = embeddings.front().encoder_id;
  const std::size_t dim = embeddings.front().vector.size();
  if (dim == 0) throw PreconditionError("embeddings have dimension 0");

  const std::size_t n = embeddings.size();
  std::vector<double> x(n * dim);
  std::vector<int> y(n);
  std::size_t fakes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = embeddings[i];
    if (e.encoder_id != encoder_id) {
      throw PreconditionError("mixed encoders: \"" + encoder_id + "\" and \"" + e.encoder_id + "\"");
    }
    if (e.vector.size() != dim) {
      throw PreconditionError("dimension mismatch for \"" + e.track_id + "\": " + std::to_string(e.vector.size()) +
                              " vs " + std::to_string(dim));
    }
    const auto it = labels.find(e.track_id);
    if (it == labels.end()) throw PreconditionError("no label for \"" + e.track_id + "\"");
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = e.vector[j];
      if (!std::isfinite(v)) throw PreconditionError("non-finite embedding for \"" + e.track_id + "\"");
      x[i * dim + j] = v;
    }
    y[i] = it->second == Label::kFake ? 1 : 0;
    fakes += static_cast<std::size_t>(y[i]);
  }
  if (fakes == 0 || fakes == n) throw PreconditionError("training data must contain both real and fake examples");

  DetectorModel model(encoder_id, dim, config);
  AdamW optimizer(model.parameter_count(), config);
  PlateauScheduler scheduler(config);
  Rng order_rng(mix64(config.seed ^ 0x73687566ULL));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<double> bx;
  std::vector<int> by;
  std::vector<double> grad;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    const double lr = scheduler.lr();
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      bx.resize((stop - start) * dim);
      by.resize(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(order[k] * dim), dim,
                    bx.begin() + static_cast<std::ptrdiff_t>((k - start) * dim));
        by[k - start] = y[order[k]];
      }
      const double batch_loss = model.loss(bx, by, &grad);
      if (!std::isfinite(batch_loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                    std::to_string(start) + " (lr " + std::to_string(lr) + ")");
      }
      epoch_total += batch_loss * static_cast<double>(stop - start);
      optimizer.step(model.params_, grad, lr);
    }
    const double epoch_loss = epoch_total / static_cast<double>(n);
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

std::vector<Prediction> predict(const DetectorModel& model, std::span<const EmbeddingRecord> embeddings) {
  std::vector<Prediction> out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    if (e.encoder_id != model.encoder_id()) {
      throw PreconditionError("embedding for \"" + e.track_id + "\" comes from \"" + e.encoder_id +
                              "\", model was trained on \"" + model.encoder_id() + "\"");
    }
    for (float v : e.vector) {
      if (!std::isfinite(v)) throw PreconditionError("non-finite embedding for \"" + e.track_id + "\"");
    }
    const double p = model.p_fake(std::span<const float>(e.vector));
    out.push_back({e.track_id, p, model.classify(p)});
  }
  return out;
}

std::string model_to_bytes(const DetectorModel& model) {
  nlohmann::ordered_json header;
  header["encoder_id"] = model.encoder_id();
  header["layer_sizes"] = model.layer_sizes();
  header["threshold"] = model.threshold();
  header["seed"] = model.seed();
  header["train_config"] = nlohmann::ordered_json::parse(model.train_config().to_json());
  header["epoch_loss"] = model.training_log().epoch_loss;
  nlohmann::ordered_json reductions = nlohmann::ordered_json::array();
  for (const auto& r : model.training_log().reductions) reductions.push_back({{"epoch", r.epoch}, {"lr", r.new_lr}});
  header["lr_reductions"] = std::move(reductions);

  Container c;
  c.version = kModelSchemaVersion;
  c.header = header.dump();
  c.values.reserve(model.parameter_count());
  for (double p : model.parameters()) c.values.push_back(static_cast<float>(p));
  return seal_container(kMagic, c);
}

DetectorModel model_from_bytes(std::string_view bytes) {
  const Container c = open_container(bytes, kMagic, kModelSchemaVersion);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(c.header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  const auto sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
  if (sizes.size() != 4 || sizes[1] != kHiddenSizes[0] || sizes[2] != kHiddenSizes[1] || sizes[3] != 2) {
    throw FormatError("unexpected layer sizes in model file");
  }
  DetectorModel m;
  m.encoder_id_ = header.at("encoder_id").get<std::string>();
  m.input_dim_ = sizes[0];
  m.threshold_ = header.at("threshold").get<double>();
  m.config_ = TrainConfig::from_json(header.at("train_config").dump());
  m.log_.epoch_loss = header.value("epoch_loss", std::vector<double>{});
  for (const auto& r : header.value("lr_reductions", nlohmann::json::array())) {
    m.log_.reductions.push_back({r.at("epoch").get<int>(), r.at("lr").get<double>()});
  }
  if (c.values.size() != mlp_parameter_count(m.input_dim_)) throw FormatError("parameter count mismatch");
  m.params_.assign(c.values.begin(), c.values.end());
  return m;
}

void save_model(const DetectorModel& model, const std::filesystem::path& path) {
  write_file_bytes(path.string(), model_to_bytes(model));
}

DetectorModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("model file not found: " + path.string());
  return model_from_bytes(read_file_bytes(path.string()));
}

std::string model_fingerprint(const DetectorModel& model) { return fingerprint(model_to_bytes(model)); }

}  // namespace lyricdet
