#pragma once

#include <span>
#include <string>
#include <vector>

#include "safeood/rng.hpp"
#include "safeood/tensor.hpp"
#include "safeood/types.hpp"

namespace safeood {

// Feature-monitoring MLP: three weight layers d -> d/2 -> d/4 -> 1 with
// rectified-linear hidden activations, dropout before the final layer
// (training only) and a logistic-sigmoid output score in (0, 1).
struct MonitorMLP {
  int input_dim = 0;
  std::vector<int> layer_dims;     // {d, d/2, d/4, 1}
  std::vector<Tensor> weights;     // weights[i]: {layer_dims[i+1], layer_dims[i]}
  std::vector<Tensor> biases;      // biases[i]: {layer_dims[i+1]}
  double dropout_rate = 0.5;
  bool deployable = false;

  // checkpoint metadata
  uint64_t seed = 0;
  double epsilon_255 = 0.0;
  uint64_t subset_hash = 0;
};

// Xavier/Glorot uniform weights (bound sqrt(6/(fan_in+fan_out))), zero
// biases; deterministic in the seed. input_dim < 4 would halve to a zero
// width and is rejected.
MonitorMLP init_mlp(int input_dim, uint64_t seed);

struct MonitorTrainConfig {
  int epochs = 5;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double dropout = 0.5;
  int images_per_batch = 32;
  uint64_t seed = 0;
};

struct LossHistoryEntry {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
};

struct MonitorTrainResult {
  std::vector<LossHistoryEntry> history;
  std::vector<double> epoch_mean_loss;
  bool deployable = false;
  std::string warning;
};

// Input is grouped by source image; one optimizer step consumes all vectors
// from images_per_batch consecutive images (variable vector count per step).
// Image order reshuffles every epoch from the config seed. A single-label
// stream trains but is flagged non-deployable with a warning.
MonitorTrainResult train_monitor(MonitorMLP& mlp,
                                 const std::vector<std::vector<LabeledSafeVector>>& per_image,
                                 const MonitorTrainConfig& config);

// Deterministic inference-mode score in (0, 1); higher = more OOD.
double score(const MonitorMLP& mlp, const SafeVector& vector);
double score_values(const MonitorMLP& mlp, std::span<const double> values);

// Training-mode forward/backward for one batch; exposed for gradient checks.
// Returns mean BCE over the batch and fills parameter gradients (same shapes
// as weights/biases). Pass a null rng to disable dropout.
double monitor_batch_gradients(const MonitorMLP& mlp,
                               const std::vector<std::pair<std::vector<double>, int>>& batch,
                               Rng* dropout_rng, std::vector<Tensor>& weight_grads,
                               std::vector<Tensor>& bias_grads);

// Training-mode forward only (dropout active); used by the dropout contract.
double train_mode_score(const MonitorMLP& mlp, std::span<const double> values, Rng& dropout_rng);

// Checkpoint: `SAFEMLP1` magic + header (input_dim, seed, epsilon, subset
// hash) + little-endian float32 weight blocks in layer order.
void save_monitor(const MonitorMLP& mlp, const std::string& path);
MonitorMLP load_monitor(const std::string& path);

void write_loss_history_csv(const std::string& path, const std::vector<LossHistoryEntry>& history);

}  // namespace safeood
