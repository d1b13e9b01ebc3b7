#pragma once

// Two-layer softmax probe:  f(z) = softmax(W2 relu(W1 z + b1) + b2)
// with inverted dropout on the hidden activations during training.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"
#include "hslab/matrix.hpp"
#include "hslab/random.hpp"

namespace hslab {

enum class Optimizer { AdamW, Sgd };

struct ProbeConfig {
  std::size_t hidden_dim = 0;  // 0: use the input dimension
  double dropout_p = 0.2;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::AdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  std::size_t hidden_for(std::size_t input_dim) const { return hidden_dim ? hidden_dim : input_dim; }

  void validate() const {
    require(dropout_p >= 0.0 && dropout_p < 1.0, ErrorCode::InvalidConfig, "dropout_p must lie in [0, 1)");
    require(learning_rate > 0.0, ErrorCode::InvalidConfig, "learning_rate must be positive");
    require(weight_decay >= 0.0, ErrorCode::InvalidConfig, "weight_decay must be non-negative");
    require(batch_size >= 1, ErrorCode::InvalidConfig, "batch_size must be at least 1");
  }

  bool operator==(const ProbeConfig&) const = default;
};

template <typename Real>
struct BasicProbeModel {
  Matrix<Real> w1;         // h x d
  std::vector<Real> b1;    // h
  Matrix<Real> w2;         // 2 x h
  std::vector<Real> b2;    // 2
  ProbeConfig config;

  std::size_t input_dim() const noexcept { return w1.cols(); }
  std::size_t hidden_dim() const noexcept { return w1.rows(); }

  /// Visits every parameter buffer in storage order (W1, b1, W2, b2).
  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    fn(w1.values());
    fn(std::span<Real>(b1));
    fn(w2.values());
    fn(std::span<Real>(b2));
  }
  template <typename Fn>
  void for_each_buffer(Fn&& fn) const {
    fn(w1.values());
    fn(std::span<const Real>(b1));
    fn(w2.values());
    fn(std::span<const Real>(b2));
  }

  std::size_t parameter_count() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool operator==(const BasicProbeModel&) const = default;
};

using ProbeModel = BasicProbeModel<float>;

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  double accuracy = 0;
  double sensitivity = 0;
  double specificity = 0;
  double precision = 0;
  double f1 = 0;
  Confusion confusion;

  bool operator==(const EvalReport&) const = default;
};

/// Metrics from confusion counts; any ratio with a zero denominator is 0.
inline EvalReport report_from_confusion(const Confusion& c) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  EvalReport r;
  r.confusion = c;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.precision = ratio(c.tp, c.tp + c.fp);
  const double denom = r.precision + r.sensitivity;
  r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.sensitivity / denom;
  return r;
}

/// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
template <typename Real = float>
BasicProbeModel<Real> init_probe(std::size_t input_dim, const ProbeConfig& cfg) {
  require(input_dim >= 1, ErrorCode::InvalidArgument, "input dimension must be at least 1");
  cfg.validate();
  const std::size_t h = cfg.hidden_for(input_dim);
  BasicProbeModel<Real> model;
  model.config = cfg;
  model.w1 = Matrix<Real>(h, input_dim);
  model.b1.assign(h, Real{0});
  model.w2 = Matrix<Real>(2, h);
  model.b2.assign(2, Real{0});

  Rng rng(derive_seed(cfg.seed, "probe-init"));
  auto fill = [&](std::span<Real> w, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w) {
      v = static_cast<Real>(rng.uniform(-bound, bound));
      // rounding to float can step just past the bound
      v = std::clamp(v, static_cast<Real>(-bound), static_cast<Real>(bound));
    }
  };
  fill(model.w1.values(), input_dim, h);
  fill(model.w2.values(), h, 2);
  return model;
}

namespace detail {

template <typename Real>
struct ForwardTrace {
  std::vector<Real> pre;     // W1 z + b1
  std::vector<Real> hidden;  // relu(pre) * dropout mask
  std::vector<Real> mask;    // 0 or 1/(1-p); 1 when dropout is off
  std::array<Real, 2> prob{};
};

template <typename Real, typename In>
void forward_into(const BasicProbeModel<Real>& model, std::span<const In> z, Rng* dropout,
                  ForwardTrace<Real>& t) {
  const std::size_t h = model.hidden_dim(), d = model.input_dim();
  t.pre.resize(h);
  t.hidden.resize(h);
  t.mask.assign(h, Real{1});
  const double p = model.config.dropout_p;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  for (std::size_t k = 0; k < h; ++k) {
    const auto w = model.w1.row(k);
    Real s = model.b1[k];
    for (std::size_t j = 0; j < d; ++j) s += w[j] * static_cast<Real>(z[j]);
    t.pre[k] = s;
    if (dropout && p > 0.0) t.mask[k] = dropout->uniform() < p ? Real{0} : keep_scale;
    t.hidden[k] = (s > Real{0} ? s : Real{0}) * t.mask[k];
  }
  std::array<Real, 2> logits{model.b2[0], model.b2[1]};
  for (std::size_t c = 0; c < 2; ++c) {
    const auto w = model.w2.row(c);
    for (std::size_t k = 0; k < h; ++k) logits[c] += w[k] * t.hidden[k];
  }
  const Real top = std::max(logits[0], logits[1]);
  const Real e0 = std::exp(logits[0] - top), e1 = std::exp(logits[1] - top);
  t.prob = {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace detail

/// Class probabilities [p(non-regret), p(regret)]. Dropout draws from
/// `dropout_stream` only when train_mode is set.
template <typename Real, typename In>
std::array<Real, 2> forward(const BasicProbeModel<Real>& model, std::span<const In> z, bool train_mode = false,
                            Rng* dropout_stream = nullptr) {
  require(z.size() == model.input_dim(), ErrorCode::DimensionMismatch,
          "input has " + std::to_string(z.size()) + " values, probe expects " + std::to_string(model.input_dim()));
  require(!train_mode || dropout_stream, ErrorCode::InvalidArgument, "train-mode forward needs a dropout stream");
  detail::ForwardTrace<Real> t;
  detail::forward_into(model, z, train_mode ? dropout_stream : nullptr, t);
  return t.prob;
}

/// Parameter gradients, laid out like the model.
template <typename Real>
struct ProbeGradients {
  Matrix<Real> w1;
  std::vector<Real> b1;
  Matrix<Real> w2;
  std::vector<Real> b2;

  explicit ProbeGradients(const BasicProbeModel<Real>& m)
      : w1(m.w1.rows(), m.w1.cols()), b1(m.b1.size()), w2(m.w2.rows(), m.w2.cols()), b2(m.b2.size()) {}

  void zero() {
    std::ranges::fill(w1.values(), Real{0});
    std::ranges::fill(b1, Real{0});
    std::ranges::fill(w2.values(), Real{0});
    std::ranges::fill(b2, Real{0});
  }

  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    fn(w1.values());
    fn(std::span<Real>(b1));
    fn(w2.values());
    fn(std::span<Real>(b2));
  }
};

/// Mean cross-entropy over `rows` and its gradient (accumulated into `grad`,
/// which is zeroed first). Dropout is applied when `dropout` is non-null.
template <typename Real>
double loss_and_gradient(const BasicProbeModel<Real>& model, const LabeledMatrix& data,
                         std::span<const std::size_t> rows, ProbeGradients<Real>& grad, Rng* dropout = nullptr) {
  grad.zero();
  const std::size_t h = model.hidden_dim(), d = model.input_dim();
  detail::ForwardTrace<Real> t;
  std::vector<Real> dhidden(h);
  double loss = 0;
  const Real inv_n = Real{1} / static_cast<Real>(rows.size());
  for (auto r : rows) {
    const auto z = data.data.row(r);
    detail::forward_into(model, z, dropout, t);
    const std::size_t y = data.labels[r];
    loss -= std::log(std::max<double>(t.prob[y], 1e-300));
    std::array<Real, 2> dlogit{t.prob[0] * inv_n, t.prob[1] * inv_n};
    dlogit[y] -= inv_n;
    for (std::size_t c = 0; c < 2; ++c) {
      grad.b2[c] += dlogit[c];
      auto gw = grad.w2.row(c);
      for (std::size_t k = 0; k < h; ++k) gw[k] += dlogit[c] * t.hidden[k];
    }
    for (std::size_t k = 0; k < h; ++k) {
      const Real back = dlogit[0] * model.w2(0, k) + dlogit[1] * model.w2(1, k);
      dhidden[k] = t.pre[k] > Real{0} ? back * t.mask[k] : Real{0};
    }
    for (std::size_t k = 0; k < h; ++k) {
      const Real g = dhidden[k];
      if (g == Real{0}) continue;
      grad.b1[k] += g;
      auto gw = grad.w1.row(k);
      for (std::size_t j = 0; j < d; ++j) gw[j] += g * static_cast<Real>(z[j]);
    }
  }
  return loss / static_cast<double>(rows.size());
}

/// Mean cross-entropy with dropout off.
template <typename Real>
double mean_loss(const BasicProbeModel<Real>& model, const LabeledMatrix& data) {
  detail::ForwardTrace<Real> t;
  double loss = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    detail::forward_into(model, data.data.row(r), static_cast<Rng*>(nullptr), t);
    loss -= std::log(std::max<double>(t.prob[data.labels[r]], 1e-300));
  }
  return loss / static_cast<double>(data.rows());
}

/// Per-epoch mean training loss (dropout active, as optimized).
struct TrainingTrace {
  std::vector<double> epoch_loss;
};

/// Mini-batch training for cfg.epochs epochs; rows are reshuffled every epoch
/// from the seeded stream and the final-epoch parameters are returned.
template <typename Real = float>
BasicProbeModel<Real> train_probe(const LabeledMatrix& train, const ProbeConfig& cfg, TrainingTrace* trace = nullptr) {
  cfg.validate();
  require(train.rows() >= 1, ErrorCode::EmptyTestSet, "training set is empty");
  require(train.count(0) > 0 && train.count(1) > 0, ErrorCode::SingleClassTrainingSet,
          "training set must contain both classes");

  auto model = init_probe<Real>(train.dims(), cfg);
  ProbeGradients<Real> grad(model);
  // Optimizer moments, one flat buffer per parameter buffer.
  std::vector<std::vector<double>> m1, m2;
  model.for_each_buffer([&](std::span<Real> p) {
    m1.emplace_back(p.size(), 0.0);
    m2.emplace_back(p.size(), 0.0);
  });

  Rng order_rng(derive_seed(cfg.seed, "probe-shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "probe-dropout"));
  std::vector<std::size_t> order(train.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::uint64_t step = 0;
  const double lr = cfg.learning_rate;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = loss_and_gradient(model, train, batch, grad, &dropout_rng);
      if (!std::isfinite(loss))
        fail(ErrorCode::DivergenceDetected, "non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      std::size_t buffer = 0;
      std::vector<std::span<Real>> grads;
      grad.for_each_buffer([&](std::span<Real> g) { grads.push_back(g); });
      model.for_each_buffer([&](std::span<Real> p) {
        const auto g = grads[buffer];
        auto& mom = m1[buffer];
        auto& vel = m2[buffer];
        for (std::size_t i = 0; i < p.size(); ++i) {
          double w = p[i];
          w -= lr * cfg.weight_decay * w;  // decoupled decay
          if (cfg.optimizer == Optimizer::AdamW) {
            mom[i] = cfg.beta1 * mom[i] + (1.0 - cfg.beta1) * g[i];
            vel[i] = cfg.beta2 * vel[i] + (1.0 - cfg.beta2) * static_cast<double>(g[i]) * g[i];
            w -= lr * (mom[i] / bc1) / (std::sqrt(vel[i] / bc2) + cfg.adam_epsilon);
          } else {
            w -= lr * g[i];
          }
          p[i] = static_cast<Real>(w);
        }
        ++buffer;
      });
    }
    epoch_loss /= static_cast<double>(order.size());
    if (trace) trace->epoch_loss.push_back(epoch_loss);
  }
  return model;
}

/// Predicted label per row: argmax with ties going to class 0.
template <typename Real>
std::vector<std::uint8_t> predict(const BasicProbeModel<Real>& model, const LabeledMatrix& data) {
  require(data.dims() == model.input_dim(), ErrorCode::DimensionMismatch,
          "data has " + std::to_string(data.dims()) + " columns, probe expects " +
              std::to_string(model.input_dim()));
  std::vector<std::uint8_t> out(data.rows());
  detail::ForwardTrace<Real> t;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    detail::forward_into(model, data.data.row(r), static_cast<Rng*>(nullptr), t);
    out[r] = t.prob[1] > t.prob[0] ? 1 : 0;
  }
  return out;
}

template <typename Real>
EvalReport evaluate(const BasicProbeModel<Real>& model, const LabeledMatrix& test) {
  require(test.rows() > 0, ErrorCode::EmptyTestSet, "test set is empty");
  const auto predicted = predict(model, test);
  Confusion c;
  for (std::size_t r = 0; r < test.rows(); ++r) {
    const bool truth = test.labels[r] == 1, guess = predicted[r] == 1;
    if (truth && guess) ++c.tp;
    else if (!truth && guess) ++c.fp;
    else if (!truth && !guess) ++c.tn;
    else ++c.fn;
  }
  return report_from_confusion(c);
}

// ---------------------------------------------------------------------------
// Model files: "HSPM" | u32 header length | JSON header | f32 parameters
// (W1 row-major, b1, W2 row-major, b2), little-endian.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ProbeConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"dropout_p", c.dropout_p},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"optimizer", c.optimizer == Optimizer::AdamW ? "adamw" : "sgd"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

/// Parses a probe config object. Keys absent from `j` keep their defaults;
/// unknown keys are rejected.
inline ProbeConfig probe_config_from_json(const nlohmann::json& j, ProbeConfig c = {}) {
  require(j.is_object(), ErrorCode::InvalidConfig, "probe config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
      else if (key == "dropout_p") c.dropout_p = value.get<double>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
      else if (key == "optimizer") {
        const auto name = value.get<std::string>();
        if (name == "adamw") c.optimizer = Optimizer::AdamW;
        else if (name == "sgd") c.optimizer = Optimizer::Sgd;
        else fail(ErrorCode::InvalidConfig, "optimizer must be \"adamw\" or \"sgd\"");
      } else {
        fail(ErrorCode::InvalidConfig, "unknown probe config key \"" + key + "\"");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidConfig, "probe config key \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

inline std::vector<char> encode_probe(const ProbeModel& model) {
  const nlohmann::json header = {{"format", "hslab-probe/1"},
                                 {"input_dim", model.input_dim()},
                                 {"hidden_dim", model.hidden_dim()},
                                 {"classes", 2},
                                 {"config", to_json(model.config)}};
  const std::string text = header.dump();
  std::vector<char> out{'H', 'S', 'P', 'M'};
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  model.for_each_buffer([&](std::span<const float> p) {
    for (float v : p) detail::put_le<float>(out, v);
  });
  return out;
}

inline ProbeModel decode_probe(std::span<const char> bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.take(4, "magic");
  if (std::string(magic.begin(), magic.end()) != "HSPM")
    fail(ErrorCode::MagicMismatch, "byte offset 0: expected \"HSPM\"");
  const auto len = in.get<std::uint32_t>("header length");
  const auto text = in.take(len, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.begin(), text.end());
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidMetadata, std::string("probe header: ") + e.what());
  }
  if (header.value("format", "") != "hslab-probe/1")
    fail(ErrorCode::UnsupportedVersion, "probe header format is not hslab-probe/1");
  ProbeModel model;
  std::size_t d = 0, h = 0;
  try {
    d = header.at("input_dim").get<std::size_t>();
    h = header.at("hidden_dim").get<std::size_t>();
    auto cfg_json = header.at("config");
    model.config = probe_config_from_json(cfg_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidMetadata, std::string("probe header: ") + e.what());
  }
  model.w1 = Matrix<float>(h, d);
  model.b1.assign(h, 0.f);
  model.w2 = Matrix<float>(2, h);
  model.b2.assign(2, 0.f);
  model.for_each_buffer([&](std::span<float> p) {
    for (auto& v : p) {
      v = in.get<float>("parameters");
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "non-finite probe parameter");
    }
  });
  if (in.offset() != bytes.size()) fail(ErrorCode::InvalidMetadata, "trailing bytes after probe parameters");
  return model;
}

inline void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_probe(model));
}

inline ProbeModel load_probe(const std::filesystem::path& path) {
  try {
    return decode_probe(detail::read_file(path));
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

}  // namespace hslab
