#include "safeood/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "safeood/error.hpp"

namespace safeood {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double bce_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

struct ForwardScratch {
  std::vector<double> h1, h2;        // post-ReLU hidden activations
  std::vector<double> h2_dropped;    // after dropout (training)
  std::vector<uint8_t> drop_mask;
  double logit = 0.0;
};

// forward through the three weight layers; dropout applied before the final
// layer when rng given (inverted dropout, scale 1/(1-p))
double forward_one(const MonitorMLP& mlp, std::span<const double> x, Rng* rng,
                   ForwardScratch* scratch) {
  const int d1 = mlp.layer_dims[1], d2 = mlp.layer_dims[2];
  ForwardScratch local;
  ForwardScratch& s = scratch ? *scratch : local;

  s.h1.assign(static_cast<size_t>(d1), 0.0);
  for (int i = 0; i < d1; ++i) {
    const double* w = mlp.weights[0].ptr() + static_cast<size_t>(i) * mlp.input_dim;
    double acc = mlp.biases[0][static_cast<size_t>(i)];
    for (int j = 0; j < mlp.input_dim; ++j) acc += w[j] * x[static_cast<size_t>(j)];
    s.h1[static_cast<size_t>(i)] = acc > 0 ? acc : 0.0;
  }
  s.h2.assign(static_cast<size_t>(d2), 0.0);
  for (int i = 0; i < d2; ++i) {
    const double* w = mlp.weights[1].ptr() + static_cast<size_t>(i) * d1;
    double acc = mlp.biases[1][static_cast<size_t>(i)];
    for (int j = 0; j < d1; ++j) acc += w[j] * s.h1[static_cast<size_t>(j)];
    s.h2[static_cast<size_t>(i)] = acc > 0 ? acc : 0.0;
  }

  s.h2_dropped = s.h2;
  s.drop_mask.assign(static_cast<size_t>(d2), 1);
  if (rng) {
    const double keep = 1.0 - mlp.dropout_rate;
    for (int i = 0; i < d2; ++i) {
      if (rng->uniform() < mlp.dropout_rate) {
        s.drop_mask[static_cast<size_t>(i)] = 0;
        s.h2_dropped[static_cast<size_t>(i)] = 0.0;
      } else {
        s.h2_dropped[static_cast<size_t>(i)] /= keep;
      }
    }
  }

  const double* w = mlp.weights[2].ptr();
  double logit = mlp.biases[2][0];
  for (int j = 0; j < d2; ++j) logit += w[j] * s.h2_dropped[static_cast<size_t>(j)];
  s.logit = logit;
  return logit;
}

}  // namespace

MonitorMLP init_mlp(int input_dim, uint64_t seed) {
  require(input_dim >= 4, ErrorCode::precondition,
          "init_mlp: input_dim must be >= 4 (halving would reach zero width), got " +
              std::to_string(input_dim));
  MonitorMLP mlp;
  mlp.input_dim = input_dim;
  mlp.seed = seed;
  mlp.layer_dims = {input_dim, input_dim / 2, input_dim / 4, 1};

  Rng rng(hash_seed(seed, 0x3150));
  for (int layer = 0; layer < 3; ++layer) {
    int fan_out = mlp.layer_dims[static_cast<size_t>(layer) + 1];
    int fan_in = mlp.layer_dims[static_cast<size_t>(layer)];
    Tensor w({fan_out, fan_in});
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Tensor({fan_out}));
  }
  return mlp;
}

double score_values(const MonitorMLP& mlp, std::span<const double> values) {
  require(static_cast<int>(values.size()) == mlp.input_dim, ErrorCode::precondition,
          "score: vector length " + std::to_string(values.size()) +
              " does not match monitor input dim " + std::to_string(mlp.input_dim));
  return sigmoid(forward_one(mlp, values, nullptr, nullptr));
}

double score(const MonitorMLP& mlp, const SafeVector& vector) {
  return score_values(mlp, vector.values);
}

double train_mode_score(const MonitorMLP& mlp, std::span<const double> values, Rng& dropout_rng) {
  require(static_cast<int>(values.size()) == mlp.input_dim, ErrorCode::precondition,
          "train_mode_score: vector length mismatch");
  return sigmoid(forward_one(mlp, values, &dropout_rng, nullptr));
}

double monitor_batch_gradients(const MonitorMLP& mlp,
                               const std::vector<std::pair<std::vector<double>, int>>& batch,
                               Rng* dropout_rng, std::vector<Tensor>& weight_grads,
                               std::vector<Tensor>& bias_grads) {
  require(!batch.empty(), ErrorCode::precondition, "monitor_batch_gradients: empty batch");
  const int d0 = mlp.layer_dims[0], d1 = mlp.layer_dims[1], d2 = mlp.layer_dims[2];
  weight_grads.clear();
  bias_grads.clear();
  for (int layer = 0; layer < 3; ++layer) {
    weight_grads.push_back(Tensor(mlp.weights[static_cast<size_t>(layer)].shape));
    bias_grads.push_back(Tensor(mlp.biases[static_cast<size_t>(layer)].shape));
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double keep = 1.0 - mlp.dropout_rate;
  double loss = 0.0;

  for (const auto& [x, label] : batch) {
    require(static_cast<int>(x.size()) == d0, ErrorCode::precondition,
            "monitor_batch_gradients: vector length mismatch");
    ForwardScratch s;
    double logit = forward_one(mlp, x, dropout_rng, &s);
    double target = static_cast<double>(label);
    loss += bce_logit(logit, target) * inv_b;

    // dL/dlogit
    double dlogit = (sigmoid(logit) - target) * inv_b;

    // layer 3
    for (int j = 0; j < d2; ++j)
      weight_grads[2].data[static_cast<size_t>(j)] += dlogit * s.h2_dropped[static_cast<size_t>(j)];
    bias_grads[2].data[0] += dlogit;

    // back through dropout into h2
    std::vector<double> dh2(static_cast<size_t>(d2), 0.0);
    for (int j = 0; j < d2; ++j) {
      if (!s.drop_mask[static_cast<size_t>(j)]) continue;
      double scale = dropout_rng ? 1.0 / keep : 1.0;
      double g = dlogit * mlp.weights[2][static_cast<size_t>(j)] * scale;
      dh2[static_cast<size_t>(j)] = s.h2[static_cast<size_t>(j)] > 0 ? g : 0.0;
    }

    // layer 2
    std::vector<double> dh1(static_cast<size_t>(d1), 0.0);
    for (int i = 0; i < d2; ++i) {
      double g = dh2[static_cast<size_t>(i)];
      if (g == 0.0) continue;
      const double* w = mlp.weights[1].ptr() + static_cast<size_t>(i) * d1;
      double* wg = weight_grads[1].ptr() + static_cast<size_t>(i) * d1;
      for (int j = 0; j < d1; ++j) {
        wg[j] += g * s.h1[static_cast<size_t>(j)];
        dh1[static_cast<size_t>(j)] += g * w[j];
      }
      bias_grads[1].data[static_cast<size_t>(i)] += g;
    }
    for (int j = 0; j < d1; ++j)
      if (s.h1[static_cast<size_t>(j)] <= 0) dh1[static_cast<size_t>(j)] = 0.0;

    // layer 1
    for (int i = 0; i < d1; ++i) {
      double g = dh1[static_cast<size_t>(i)];
      if (g == 0.0) continue;
      double* wg = weight_grads[0].ptr() + static_cast<size_t>(i) * d0;
      for (int j = 0; j < d0; ++j) wg[j] += g * x[static_cast<size_t>(j)];
      bias_grads[0].data[static_cast<size_t>(i)] += g;
    }
  }
  return loss;
}

MonitorTrainResult train_monitor(MonitorMLP& mlp,
                                 const std::vector<std::vector<LabeledSafeVector>>& per_image,
                                 const MonitorTrainConfig& config) {
  require(!per_image.empty(), ErrorCode::precondition, "train_monitor: empty stream");
  bool has0 = false, has1 = false;
  size_t total = 0;
  for (const auto& image_vecs : per_image) {
    for (const auto& v : image_vecs) {
      (v.label == 0 ? has0 : has1) = true;
      ++total;
    }
  }
  require(total > 0, ErrorCode::precondition, "train_monitor: no vectors in stream");

  MonitorTrainResult result;
  if (!has0 || !has1) {
    result.warning = "degenerate training stream: only one label present; model not deployable";
  }

  // momentum buffers
  std::vector<Tensor> vel_w, vel_b;
  for (int layer = 0; layer < 3; ++layer) {
    vel_w.push_back(Tensor(mlp.weights[static_cast<size_t>(layer)].shape));
    vel_b.push_back(Tensor(mlp.biases[static_cast<size_t>(layer)].shape));
  }

  Rng dropout_rng(hash_seed(config.seed, 0xD20));
  std::vector<size_t> order(per_image.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Tensor> wg, bg;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(hash_seed(config.seed, 0xE90c + static_cast<uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    int steps = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.images_per_batch)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(config.images_per_batch));
      std::vector<std::pair<std::vector<double>, int>> batch;
      for (size_t k = start; k < stop; ++k) {
        for (const auto& v : per_image[order[k]]) {
          batch.emplace_back(v.vector.values, v.label);
        }
      }
      if (batch.empty()) continue;

      double loss = monitor_batch_gradients(mlp, batch, &dropout_rng, wg, bg);
      require(std::isfinite(loss), ErrorCode::numeric, "monitor training loss diverged");

      for (int layer = 0; layer < 3; ++layer) {
        Tensor& w = mlp.weights[static_cast<size_t>(layer)];
        Tensor& b = mlp.biases[static_cast<size_t>(layer)];
        for (size_t i = 0; i < w.data.size(); ++i) {
          vel_w[static_cast<size_t>(layer)].data[i] =
              config.momentum * vel_w[static_cast<size_t>(layer)].data[i] +
              wg[static_cast<size_t>(layer)].data[i];
          w.data[i] -= config.learning_rate * vel_w[static_cast<size_t>(layer)].data[i];
        }
        for (size_t i = 0; i < b.data.size(); ++i) {
          vel_b[static_cast<size_t>(layer)].data[i] =
              config.momentum * vel_b[static_cast<size_t>(layer)].data[i] +
              bg[static_cast<size_t>(layer)].data[i];
          b.data[i] -= config.learning_rate * vel_b[static_cast<size_t>(layer)].data[i];
        }
      }

      LossHistoryEntry entry;
      entry.epoch = epoch + 1;
      entry.step = ++steps;
      entry.loss = loss;
      result.history.push_back(entry);
      epoch_loss += loss;
    }
    result.epoch_mean_loss.push_back(epoch_loss / std::max(1, steps));
  }

  result.deployable = has0 && has1;
  mlp.deployable = result.deployable;
  return result;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_monitor(const MonitorMLP& mlp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write monitor checkpoint: " + path);
  out.write("SAFEMLP1", 8);
  put_le<uint32_t>(out, static_cast<uint32_t>(mlp.input_dim));
  put_le<uint64_t>(out, mlp.seed);
  float eps = static_cast<float>(mlp.epsilon_255);
  uint32_t eps_bits;
  std::memcpy(&eps_bits, &eps, 4);
  put_le<uint32_t>(out, eps_bits);
  put_le<uint64_t>(out, mlp.subset_hash);
  put_le<uint32_t>(out, mlp.deployable ? 1 : 0);
  for (int layer = 0; layer < 3; ++layer) {
    for (const Tensor* t : {&mlp.weights[static_cast<size_t>(layer)],
                            &mlp.biases[static_cast<size_t>(layer)]}) {
      put_le<uint32_t>(out, static_cast<uint32_t>(t->numel()));
      for (double v : t->data) {
        float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le<uint32_t>(out, bits);
      }
    }
  }
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

MonitorMLP load_monitor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open monitor checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, "SAFEMLP1", 8) == 0, ErrorCode::parse,
          "not a monitor checkpoint (bad magic): " + path);
  uint32_t input_dim = get_le<uint32_t>(in);
  uint64_t seed = get_le<uint64_t>(in);
  uint32_t eps_bits = get_le<uint32_t>(in);
  float eps;
  std::memcpy(&eps, &eps_bits, 4);
  uint64_t subset_hash = get_le<uint64_t>(in);
  uint32_t deployable = get_le<uint32_t>(in);

  MonitorMLP mlp = init_mlp(static_cast<int>(input_dim), seed);
  mlp.epsilon_255 = eps;
  mlp.subset_hash = subset_hash;
  mlp.deployable = deployable != 0;
  for (int layer = 0; layer < 3; ++layer) {
    for (Tensor* t : {&mlp.weights[static_cast<size_t>(layer)],
                      &mlp.biases[static_cast<size_t>(layer)]}) {
      uint32_t n = get_le<uint32_t>(in);
      require(n == static_cast<uint32_t>(t->numel()), ErrorCode::parse,
              "monitor checkpoint: block size mismatch");
      for (double& v : t->data) {
        uint32_t bits = get_le<uint32_t>(in);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
      }
    }
  }
  require(in.good(), ErrorCode::io, "truncated monitor checkpoint: " + path);
  return mlp;
}

void write_loss_history_csv(const std::string& path,
                            const std::vector<LossHistoryEntry>& history) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write loss history: " + path);
  out << "epoch,step,loss\n";
  for (const auto& e : history) out << e.epoch << "," << e.step << "," << e.loss << "\n";
}

}  // namespace safeood
