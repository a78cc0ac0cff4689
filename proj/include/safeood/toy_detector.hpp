#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "safeood/backbone.hpp"
#include "safeood/image.hpp"
#include "safeood/nn.hpp"
#include "safeood/synth.hpp"
#include "safeood/types.hpp"

namespace safeood {

// Anything that can serve per-layer feature maps for an image. The toy
// detector implements this; diagnostics are written against the interface so
// they can be exercised with synthetic extractors as well.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> hooked_layer_ids() const = 0;
  // One forward pass; returned maps are the post-BatchNorm activations of
  // the requested layers, in the requested order. Unknown id -> lookup error.
  virtual std::vector<FeatureMap> extract_feature_maps(const Image& image,
                                                       const std::vector<std::string>& layer_ids)
      const = 0;
};

struct ToyDetectorConfig {
  int input_size = 64;
  int num_classes = 3;
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64};
  int head_channels = 48;
  double anchor_px = 18.0;

  // training
  int epochs = 20;
  int batch_size = 16;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double recall_gate = 0.7;
  double recall_conf_threshold = 0.5;
  double obj_pos_weight = 4.0;
  double box_loss_weight = 2.0;
  uint64_t seed = 0;
};

struct TrainLogEntry {
  int epoch = 0;
  double loss = 0.0;
  double val_recall = 0.0;
};

struct DetectorTrainResult {
  std::vector<TrainLogEntry> log;
  double final_val_recall = 0.0;
};

// Miniature residual+BatchNorm backbone (one projection-shortcut conv+BN per
// stage) with a dense single-stage detection head on an 8x8 grid. Small
// enough that full input-gradient passes run on CPU in milliseconds.
class ToyDetector : public FeatureExtractor {
 public:
  explicit ToyDetector(ToyDetectorConfig cfg);

  const ToyDetectorConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }

  // Layer-graph description mirroring data/toy_backbone.json; the shape
  // probe in verify_hooks() checks it against actual activations.
  BackboneDescription backbone_description() const;
  std::vector<LayerSpec> layer_specs() const;  // identify_safe_layers(description)
  void verify_hooks(const BackboneDescription& desc) const;

  // FeatureExtractor
  std::vector<std::string> hooked_layer_ids() const override;
  std::vector<FeatureMap> extract_feature_maps(const Image& image,
                                               const std::vector<std::string>& layer_ids)
      const override;

  std::vector<Detection> detect(const Image& image, double confidence_threshold) const;
  double detection_loss(const Image& image, const std::vector<Annotation>& annotations) const;
  // dJ/dpixels with the model frozen (BatchNorm running statistics).
  Image loss_input_gradient(const Image& image, const std::vector<Annotation>& annotations) const;

  DetectorTrainResult train(const Dataset& train_split, const Dataset& val_split);
  double validation_recall(const Dataset& val_split) const;

  uint64_t weights_hash() const;
  void save(const std::string& path) const;
  static ToyDetector load(const std::string& path);

  static void write_train_log_csv(const std::string& path, const std::vector<TrainLogEntry>& log);

 private:
  struct Unit {  // conv + BatchNorm
    Conv2d conv;
    BatchNorm2d bn;
  };
  struct Stage {
    Unit b1_conv1, b1_conv2, proj, b2_conv1, b2_conv2;
  };

  struct UnitCache {
    Tensor x;        // conv input
    Tensor bn_out;   // post-BatchNorm
    BatchNorm2d::Cache bn_cache;
  };
  struct StageCache {
    UnitCache a1, a2, p, c1, c2;
    Tensor block1_out, block2_out;  // post-add ReLU outputs
  };
  struct ForwardCache {
    Tensor input;
    UnitCache stem;
    Tensor stem_relu;
    StageCache stages[3];
    Tensor upsampled;
    UnitCache head1;
    Tensor head1_relu;
    Tensor head_out;
  };

  Tensor forward(const Tensor& x, bool training, ForwardCache* cache,
                 std::map<std::string, Tensor>* capture,
                 const std::vector<std::string>* capture_ids) const;
  Tensor backward(const ForwardCache& cache, const Tensor& grad_out, bool training,
                  bool track_param_grads);

  Tensor unit_forward(const Unit& unit, const Tensor& x, bool training, UnitCache* cache) const;
  Tensor unit_backward(Unit& unit, const UnitCache& cache, const Tensor& grad_bn_out,
                       bool training, bool track_param_grads);

  struct CellTarget {
    bool positive = false;
    int class_id = 0;
    double tx = 0, ty = 0, tw = 0, th = 0;
  };
  std::vector<CellTarget> assign_targets(const std::vector<Annotation>& annotations) const;
  // loss for one image slice of the head output; fills grad if non-null
  double loss_and_grad(const Tensor& head_out, int n, const std::vector<CellTarget>& targets,
                       Tensor* grad) const;

  void register_params(SgdMomentum& opt);
  void collect_tensors(std::vector<const Tensor*>& out) const;
  void collect_tensors(std::vector<Tensor*>& out);

  int grid() const { return cfg_.input_size / 8; }
  int head_out_channels() const { return 5 + cfg_.num_classes; }

  ToyDetectorConfig cfg_;
  Unit stem_;
  Stage stages_[3];
  Unit head1_;
  Conv2d head_out_;
  bool trained_ = false;

  friend struct DetectorSerializer;
};

// Encode a ground-truth box to grid targets / decode raw predictions; kept
// accessible for round-trip tests.
struct GridCodec {
  int grid = 8;
  double cell_px = 8.0;
  double anchor_px = 18.0;
  double clamp_logit = 3.0;

  struct Encoded {
    int cell_x = 0, cell_y = 0;
    double tx = 0, ty = 0, tw = 0, th = 0;  // tx, ty in (0,1); tw, th in log space
  };
  Encoded encode(const BoundingBox& box) const;
  BoundingBox decode(int cell_x, int cell_y, double tx_logit, double ty_logit, double tw,
                     double th) const;
};

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

}  // namespace safeood
