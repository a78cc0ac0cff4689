#include "safeood/toy_detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "safeood/error.hpp"

namespace safeood {

using nlohmann::json;

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable BCE-with-logits
inline double bce_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

void softmax_inplace(std::vector<double>& v) {
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

Tensor image_to_batch(const Image& img) {
  Tensor x({1, 3, img.height(), img.width()});
  std::copy(img.tensor.data.begin(), img.tensor.data.end(), x.data.begin());
  return x;
}

}  // namespace

GridCodec::Encoded GridCodec::encode(const BoundingBox& box) const {
  Encoded e;
  double cx = box.cx(), cy = box.cy();
  e.cell_x = std::clamp(static_cast<int>(cx / cell_px), 0, grid - 1);
  e.cell_y = std::clamp(static_cast<int>(cy / cell_px), 0, grid - 1);
  e.tx = std::clamp(cx / cell_px - e.cell_x, 0.001, 0.999);
  e.ty = std::clamp(cy / cell_px - e.cell_y, 0.001, 0.999);
  e.tw = std::clamp(std::log(std::max(box.width(), 1e-6) / anchor_px), -clamp_logit, clamp_logit);
  e.th = std::clamp(std::log(std::max(box.height(), 1e-6) / anchor_px), -clamp_logit, clamp_logit);
  return e;
}

BoundingBox GridCodec::decode(int cell_x, int cell_y, double tx_logit, double ty_logit, double tw,
                              double th) const {
  double cx = (cell_x + sigmoid(tx_logit)) * cell_px;
  double cy = (cell_y + sigmoid(ty_logit)) * cell_px;
  double w = anchor_px * std::exp(std::clamp(tw, -clamp_logit, clamp_logit));
  double h = anchor_px * std::exp(std::clamp(th, -clamp_logit, clamp_logit));
  return BoundingBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
    return a.class_id < b.class_id;
  });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(d.box, k.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

ToyDetector::ToyDetector(ToyDetectorConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.input_size % 16 == 0 && cfg_.input_size >= 32, ErrorCode::config,
          "input_size must be a multiple of 16 and >= 32");
  require(cfg_.stage_channels.size() == 3, ErrorCode::config, "exactly 3 stages expected");
  require(cfg_.num_classes >= 1, ErrorCode::config, "num_classes must be >= 1");

  Rng rng(hash_seed(cfg_.seed, 0xD37));
  const auto& ch = cfg_.stage_channels;

  stem_.conv.init(3, cfg_.stem_channels, 3, 2, 1, rng);
  stem_.bn.init(cfg_.stem_channels);
  int prev = cfg_.stem_channels;
  for (int s = 0; s < 3; ++s) {
    Stage& st = stages_[s];
    st.b1_conv1.conv.init(prev, ch[s], 3, 2, 1, rng);
    st.b1_conv1.bn.init(ch[s]);
    st.b1_conv2.conv.init(ch[s], ch[s], 3, 1, 1, rng);
    st.b1_conv2.bn.init(ch[s]);
    st.proj.conv.init(prev, ch[s], 1, 2, 0, rng);
    st.proj.bn.init(ch[s]);
    st.b2_conv1.conv.init(ch[s], ch[s], 3, 1, 1, rng);
    st.b2_conv1.bn.init(ch[s]);
    st.b2_conv2.conv.init(ch[s], ch[s], 3, 1, 1, rng);
    st.b2_conv2.bn.init(ch[s]);
    prev = ch[s];
  }
  head1_.conv.init(prev, cfg_.head_channels, 3, 1, 1, rng);
  head1_.bn.init(cfg_.head_channels);
  head_out_.init(cfg_.head_channels, head_out_channels(), 1, 1, 0, rng);

  verify_hooks(backbone_description());
}

BackboneDescription ToyDetector::backbone_description() const {
  BackboneDescription d;
  d.name = "toy_backbone";
  auto add = [&](const std::string& id, LayerKind kind, int channels, int stride,
                 std::vector<std::string> inputs, LayerPath path) {
    BackboneLayer l;
    l.id = id;
    l.kind = kind;
    l.channels = channels;
    l.stride = stride;
    l.inputs = std::move(inputs);
    l.followed_by_batchnorm = true;
    l.path = path;
    d.layers.push_back(std::move(l));
  };
  add("stem", LayerKind::other, cfg_.stem_channels, 2, {}, LayerPath::main);
  std::vector<std::string> prev = {"stem"};
  for (int s = 0; s < 3; ++s) {
    std::string p = "s" + std::to_string(s + 1);
    int ch = cfg_.stage_channels[static_cast<size_t>(s)];
    int stride = 4 << s;
    add(p + ".b1.conv1", LayerKind::block_conv_bn, ch, stride, prev, LayerPath::main);
    add(p + ".b1.conv2", LayerKind::block_conv_bn, ch, stride, {p + ".b1.conv1"}, LayerPath::main);
    add(p + ".proj", LayerKind::residual_shortcut_conv_bn, ch, stride, prev, LayerPath::shortcut);
    add(p + ".b2.conv1", LayerKind::block_conv_bn, ch, stride, {p + ".b1.conv2", p + ".proj"},
        LayerPath::main);
    add(p + ".b2.conv2", LayerKind::block_conv_bn, ch, stride, {p + ".b2.conv1"}, LayerPath::main);
    prev = {p + ".b2.conv2", p + ".b1.conv2"};
  }
  add("head.conv1", LayerKind::head_conv, cfg_.head_channels, 8, prev, LayerPath::main);
  return d;
}

std::vector<LayerSpec> ToyDetector::layer_specs() const {
  return identify_safe_layers(backbone_description());
}

std::vector<std::string> ToyDetector::hooked_layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : backbone_description().layers) ids.push_back(l.id);
  return ids;
}

void ToyDetector::verify_hooks(const BackboneDescription& desc) const {
  // one-time shape probe: forward a blank image and check every hooked
  // layer's channels and ceil-divided spatial extents against the description
  Image blank(cfg_.input_size, cfg_.input_size);
  std::vector<std::string> ids;
  for (const auto& l : desc.layers) ids.push_back(l.id);
  std::vector<FeatureMap> maps = extract_feature_maps(blank, ids);
  for (size_t i = 0; i < desc.layers.size(); ++i) {
    const BackboneLayer& l = desc.layers[i];
    const FeatureMap& m = maps[i];
    int expect_h = (cfg_.input_size + l.stride - 1) / l.stride;
    require(m.channels() == l.channels, ErrorCode::structural,
            "shape probe: layer '" + l.id + "' has " + std::to_string(m.channels()) +
                " channels, description says " + std::to_string(l.channels));
    require(m.height() == expect_h && m.width() == expect_h, ErrorCode::structural,
            "shape probe: layer '" + l.id + "' spatial " + std::to_string(m.height()) + "x" +
                std::to_string(m.width()) + " does not match stride " + std::to_string(l.stride));
  }
}

Tensor ToyDetector::unit_forward(const Unit& unit, const Tensor& x, bool training,
                                 UnitCache* cache) const {
  Tensor conv_out = unit.conv.forward(x);
  Tensor bn_out;
  if (training) {
    bn_out = const_cast<BatchNorm2d&>(unit.bn).forward_train(conv_out, cache->bn_cache);
  } else {
    bn_out = unit.bn.forward_eval(conv_out);
  }
  if (cache) {
    cache->x = x;
    cache->bn_out = bn_out;
  }
  return bn_out;
}

Tensor ToyDetector::unit_backward(Unit& unit, const UnitCache& cache, const Tensor& grad_bn_out,
                                  bool training, bool track_param_grads) {
  Tensor grad_conv = training ? unit.bn.backward_train(grad_bn_out, cache.bn_cache, track_param_grads)
                              : unit.bn.backward_eval(grad_bn_out);
  return unit.conv.backward(cache.x, grad_conv, track_param_grads);
}

Tensor ToyDetector::forward(const Tensor& x, bool training, ForwardCache* cache,
                            std::map<std::string, Tensor>* capture,
                            const std::vector<std::string>* capture_ids) const {
  auto want = [&](const std::string& id) {
    return capture_ids &&
           std::find(capture_ids->begin(), capture_ids->end(), id) != capture_ids->end();
  };
  auto grab = [&](const std::string& id, const Tensor& t) {
    if (capture && want(id)) (*capture)[id] = t;
  };

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = x;

  Tensor y = unit_forward(stem_, x, training, &c.stem);
  grab("stem", y);
  y = relu(y);
  c.stem_relu = y;

  for (int s = 0; s < 3; ++s) {
    const Stage& st = stages_[s];
    StageCache& sc = c.stages[s];
    std::string p = "s" + std::to_string(s + 1);

    Tensor a = unit_forward(st.b1_conv1, y, training, &sc.a1);
    grab(p + ".b1.conv1", a);
    Tensor a_relu = relu(a);
    Tensor b = unit_forward(st.b1_conv2, a_relu, training, &sc.a2);
    grab(p + ".b1.conv2", b);
    Tensor proj = unit_forward(st.proj, y, training, &sc.p);
    grab(p + ".proj", proj);
    Tensor block1 = relu(add(b, proj));
    sc.block1_out = block1;

    Tensor c1 = unit_forward(st.b2_conv1, block1, training, &sc.c1);
    grab(p + ".b2.conv1", c1);
    c1 = relu(c1);
    sc.c2.x = c1;
    Tensor c2 = unit_forward(st.b2_conv2, c1, training, &sc.c2);
    grab(p + ".b2.conv2", c2);
    Tensor block2 = relu(add(c2, block1));
    sc.block2_out = block2;
    y = block2;
  }

  Tensor up = upsample_nearest2x(y);
  c.upsampled = up;
  Tensor h = unit_forward(head1_, up, training, &c.head1);
  grab("head.conv1", h);
  h = relu(h);
  c.head1_relu = h;
  Tensor out = head_out_.forward(h);
  c.head_out = out;
  return out;
}

Tensor ToyDetector::backward(const ForwardCache& c, const Tensor& grad_out, bool training,
                             bool track_param_grads) {
  Tensor g = head_out_.backward(c.head1_relu, grad_out, track_param_grads);
  g = relu_backward(c.head1_relu, g);
  g = unit_backward(head1_, c.head1, g, training, track_param_grads);
  g = upsample_nearest2x_backward(g);

  for (int s = 2; s >= 0; --s) {
    Stage& st = stages_[s];
    const StageCache& sc = c.stages[s];

    // block 2 (identity shortcut)
    g = relu_backward(sc.block2_out, g);
    Tensor g_c2 = unit_backward(st.b2_conv2, sc.c2, g, training, track_param_grads);
    g_c2 = relu_backward(sc.c2.x, g_c2);
    Tensor g_block1 = unit_backward(st.b2_conv1, sc.c1, g_c2, training, track_param_grads);
    g_block1 = add(g_block1, g);  // skip path

    // block 1 (projection shortcut)
    g_block1 = relu_backward(sc.block1_out, g_block1);
    Tensor g_b = unit_backward(st.b1_conv2, sc.a2, g_block1, training, track_param_grads);
    g_b = relu_backward(sc.a2.x, g_b);
    Tensor g_in_main = unit_backward(st.b1_conv1, sc.a1, g_b, training, track_param_grads);
    Tensor g_in_proj = unit_backward(st.proj, sc.p, g_block1, training, track_param_grads);
    g = add(g_in_main, g_in_proj);
  }

  g = relu_backward(c.stem_relu, g);
  g = unit_backward(stem_, c.stem, g, training, track_param_grads);
  return g;
}

std::vector<FeatureMap> ToyDetector::extract_feature_maps(
    const Image& image, const std::vector<std::string>& layer_ids) const {
  if (layer_ids.empty()) return {};
  BackboneDescription desc = backbone_description();
  std::map<std::string, int> stride_of;
  for (const auto& l : desc.layers) stride_of[l.id] = l.stride;
  for (const auto& id : layer_ids) {
    require(stride_of.count(id) > 0, ErrorCode::lookup, "unknown layer id: " + id);
  }
  require(image.height() == cfg_.input_size && image.width() == cfg_.input_size,
          ErrorCode::precondition, "extract_feature_maps: image does not match model input size");

  std::map<std::string, Tensor> capture;
  forward(image_to_batch(image), false, nullptr, &capture, &layer_ids);

  std::vector<FeatureMap> maps;
  maps.reserve(layer_ids.size());
  for (const auto& id : layer_ids) {
    const Tensor& t = capture.at(id);
    FeatureMap m;
    m.layer_id = id;
    m.stride = stride_of[id];
    m.tensor = Tensor({t.dim(1), t.dim(2), t.dim(3)});
    std::copy(t.data.begin(), t.data.end(), m.tensor.data.begin());
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<ToyDetector::CellTarget> ToyDetector::assign_targets(
    const std::vector<Annotation>& annotations) const {
  const int G = grid();
  GridCodec codec{G, static_cast<double>(cfg_.input_size) / G, cfg_.anchor_px, 3.0};
  std::vector<CellTarget> targets(static_cast<size_t>(G) * G);
  for (const Annotation& ann : annotations) {
    GridCodec::Encoded e = codec.encode(ann.box);
    CellTarget& t = targets[static_cast<size_t>(e.cell_y) * G + e.cell_x];
    if (t.positive) continue;  // one object per cell; later boxes skipped
    t.positive = true;
    t.class_id = ann.class_id;
    t.tx = e.tx;
    t.ty = e.ty;
    t.tw = e.tw;
    t.th = e.th;
  }
  return targets;
}

double ToyDetector::loss_and_grad(const Tensor& head_out, int n,
                                  const std::vector<CellTarget>& targets, Tensor* grad) const {
  const int G = grid();
  const int K = cfg_.num_classes;
  const double cells = static_cast<double>(G) * G;

  int npos = 0;
  for (const auto& t : targets)
    if (t.positive) ++npos;
  const double pos_norm = std::max(1, npos);

  double loss = 0.0;
  for (int gy = 0; gy < G; ++gy) {
    for (int gx = 0; gx < G; ++gx) {
      const CellTarget& t = targets[static_cast<size_t>(gy) * G + gx];
      const double obj_logit = head_out.at(n, 0, gy, gx);
      const double obj_target = t.positive ? 1.0 : 0.0;
      const double w_obj = (t.positive ? cfg_.obj_pos_weight : 1.0) / cells;
      loss += w_obj * bce_logit(obj_logit, obj_target);
      if (grad) grad->at(n, 0, gy, gx) += w_obj * (sigmoid(obj_logit) - obj_target);

      if (!t.positive) continue;

      // box L1 in the offset/log parameterization
      const double target_t[4] = {t.tx, t.ty, t.tw, t.th};
      for (int k = 0; k < 4; ++k) {
        const double raw = head_out.at(n, 1 + k, gy, gx);
        double pred, dpred_draw;
        if (k < 2) {
          pred = sigmoid(raw);
          dpred_draw = pred * (1.0 - pred);
        } else {
          pred = raw;
          dpred_draw = 1.0;
        }
        const double diff = pred - target_t[k];
        loss += cfg_.box_loss_weight * std::abs(diff) / pos_norm;
        if (grad) {
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          grad->at(n, 1 + k, gy, gx) += cfg_.box_loss_weight * sgn * dpred_draw / pos_norm;
        }
      }

      // class cross-entropy
      std::vector<double> logits(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k) logits[static_cast<size_t>(k)] = head_out.at(n, 5 + k, gy, gx);
      std::vector<double> probs = logits;
      softmax_inplace(probs);
      loss += -std::log(std::max(probs[static_cast<size_t>(t.class_id)], 1e-12)) / pos_norm;
      if (grad) {
        for (int k = 0; k < K; ++k) {
          double d = probs[static_cast<size_t>(k)] - (k == t.class_id ? 1.0 : 0.0);
          grad->at(n, 5 + k, gy, gx) += d / pos_norm;
        }
      }
    }
  }
  return loss;
}

double ToyDetector::detection_loss(const Image& image,
                                   const std::vector<Annotation>& annotations) const {
  Tensor out = forward(image_to_batch(image), false, nullptr, nullptr, nullptr);
  double loss = loss_and_grad(out, 0, assign_targets(annotations), nullptr);
  require(std::isfinite(loss), ErrorCode::numeric, "detection loss is not finite");
  return loss;
}

Image ToyDetector::loss_input_gradient(const Image& image,
                                       const std::vector<Annotation>& annotations) const {
  ForwardCache cache;
  Tensor out = const_cast<ToyDetector*>(this)->forward(image_to_batch(image), false, &cache,
                                                       nullptr, nullptr);
  Tensor grad_out(out.shape);
  double loss = loss_and_grad(out, 0, assign_targets(annotations), &grad_out);
  require(std::isfinite(loss), ErrorCode::numeric, "detection loss is not finite");
  Tensor gx = const_cast<ToyDetector*>(this)->backward(cache, grad_out, false, false);

  Image grad(image.height(), image.width());
  std::copy(gx.data.begin(), gx.data.end(), grad.tensor.data.begin());
  for (double v : grad.tensor.data) {
    require(std::isfinite(v), ErrorCode::numeric,
            "input gradient is not finite (loss=" + std::to_string(loss) + ")");
  }
  return grad;
}

std::vector<Detection> ToyDetector::detect(const Image& image,
                                           double confidence_threshold) const {
  require(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, ErrorCode::precondition,
          "confidence threshold must be in [0, 1]");
  const int G = grid();
  const int K = cfg_.num_classes;
  GridCodec codec{G, static_cast<double>(cfg_.input_size) / G, cfg_.anchor_px, 3.0};

  Tensor out = forward(image_to_batch(image), false, nullptr, nullptr, nullptr);

  std::vector<Detection> candidates;
  for (int gy = 0; gy < G; ++gy) {
    for (int gx = 0; gx < G; ++gx) {
      double obj = sigmoid(out.at(0, 0, gy, gx));
      std::vector<double> probs(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k) probs[static_cast<size_t>(k)] = out.at(0, 5 + k, gy, gx);
      softmax_inplace(probs);
      int cls = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      double conf = obj * probs[static_cast<size_t>(cls)];

      BoundingBox box = codec.decode(gx, gy, out.at(0, 1, gy, gx), out.at(0, 2, gy, gx),
                                     out.at(0, 3, gy, gx), out.at(0, 4, gy, gx));
      auto clipped = clip_box(box, image.width(), image.height());
      if (!clipped) continue;

      Detection d;
      d.box = *clipped;
      d.class_id = cls;
      d.confidence = conf;
      d.class_probs = std::move(probs);
      candidates.push_back(std::move(d));
    }
  }

  std::vector<Detection> kept = nms(std::move(candidates), 0.5);
  std::vector<Detection> result;
  for (auto& d : kept)
    if (d.confidence >= confidence_threshold) result.push_back(std::move(d));
  return result;
}

double ToyDetector::validation_recall(const Dataset& val_split) const {
  int total = 0, matched = 0;
  for (size_t i = 0; i < val_split.items.size(); ++i) {
    const auto& item = val_split.items[i];
    if (item.annotations.empty()) continue;
    Image img = val_split.load_image(i);
    std::vector<Detection> dets = detect(img, cfg_.recall_conf_threshold);
    for (const Annotation& gt : item.annotations) {
      ++total;
      for (const Detection& d : dets) {
        if (d.class_id == gt.class_id && iou(d.box, gt.box) >= 0.5) {
          ++matched;
          break;
        }
      }
    }
  }
  return total > 0 ? static_cast<double>(matched) / total : 0.0;
}

void ToyDetector::register_params(SgdMomentum& opt) {
  auto add_unit = [&](Unit& u) {
    opt.add(&u.conv.weight, &u.conv.wgrad, true);
    opt.add(&u.conv.bias, &u.conv.bgrad, false);
    opt.add(&u.bn.gamma, &u.bn.ggrad, false);
    opt.add(&u.bn.beta, &u.bn.bgrad, false);
  };
  add_unit(stem_);
  for (auto& st : stages_) {
    add_unit(st.b1_conv1);
    add_unit(st.b1_conv2);
    add_unit(st.proj);
    add_unit(st.b2_conv1);
    add_unit(st.b2_conv2);
  }
  add_unit(head1_);
  opt.add(&head_out_.weight, &head_out_.wgrad, true);
  opt.add(&head_out_.bias, &head_out_.bgrad, false);
}

DetectorTrainResult ToyDetector::train(const Dataset& train_split, const Dataset& val_split) {
  require(!train_split.items.empty(), ErrorCode::precondition, "empty training split");
  require(!val_split.items.empty(), ErrorCode::precondition, "empty validation split");

  const size_t n = train_split.items.size();
  std::vector<Image> images;
  images.reserve(n);
  for (size_t i = 0; i < n; ++i) images.push_back(train_split.load_image(i));
  std::vector<std::vector<CellTarget>> targets;
  targets.reserve(n);
  for (const auto& item : train_split.items) targets.push_back(assign_targets(item.annotations));

  SgdMomentum opt;
  opt.lr = cfg_.lr;
  opt.momentum = cfg_.momentum;
  opt.weight_decay = cfg_.weight_decay;
  register_params(opt);

  DetectorTrainResult result;
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    Rng shuffle_rng(hash_seed(cfg_.seed, 0x7A17 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int steps = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg_.batch_size)) {
      const size_t bsz = std::min(static_cast<size_t>(cfg_.batch_size), n - start);
      Tensor batch({static_cast<int>(bsz), 3, cfg_.input_size, cfg_.input_size});
      for (size_t b = 0; b < bsz; ++b) {
        const Image& img = images[order[start + b]];
        std::copy(img.tensor.data.begin(), img.tensor.data.end(),
                  batch.data.begin() + static_cast<int64_t>(b) * img.tensor.numel());
      }

      ForwardCache cache;
      Tensor out = forward(batch, true, &cache, nullptr, nullptr);
      Tensor grad_out(out.shape);
      double loss = 0.0;
      for (size_t b = 0; b < bsz; ++b)
        loss += loss_and_grad(out, static_cast<int>(b), targets[order[start + b]], &grad_out);
      loss /= static_cast<double>(bsz);
      for (double& g : grad_out.data) g /= static_cast<double>(bsz);
      require(std::isfinite(loss), ErrorCode::numeric, "training loss diverged");

      opt.zero_grad();
      backward(cache, grad_out, true, true);
      opt.step();
      epoch_loss += loss;
      ++steps;
    }

    trained_ = true;  // evaluation below runs with frozen statistics
    TrainLogEntry entry;
    entry.epoch = epoch + 1;
    entry.loss = epoch_loss / std::max(1, steps);
    entry.val_recall = validation_recall(val_split);
    result.log.push_back(entry);
  }

  result.final_val_recall = result.log.empty() ? 0.0 : result.log.back().val_recall;
  if (result.final_val_recall < cfg_.recall_gate) {
    std::ostringstream msg;
    msg << "detector failed to converge: validation recall " << result.final_val_recall
        << " below gate " << cfg_.recall_gate << " after " << cfg_.epochs << " epochs; last loss "
        << (result.log.empty() ? 0.0 : result.log.back().loss);
    fail(ErrorCode::training_failure, msg.str());
  }
  return result;
}

void ToyDetector::collect_tensors(std::vector<const Tensor*>& out) const {
  auto add_unit = [&](const Unit& u) {
    out.push_back(&u.conv.weight);
    out.push_back(&u.conv.bias);
    out.push_back(&u.bn.gamma);
    out.push_back(&u.bn.beta);
    out.push_back(&u.bn.running_mean);
    out.push_back(&u.bn.running_var);
  };
  add_unit(stem_);
  for (const auto& st : stages_) {
    add_unit(st.b1_conv1);
    add_unit(st.b1_conv2);
    add_unit(st.proj);
    add_unit(st.b2_conv1);
    add_unit(st.b2_conv2);
  }
  add_unit(head1_);
  out.push_back(&head_out_.weight);
  out.push_back(&head_out_.bias);
}

void ToyDetector::collect_tensors(std::vector<Tensor*>& out) {
  std::vector<const Tensor*> tensors;
  collect_tensors(tensors);
  for (const Tensor* t : tensors) out.push_back(const_cast<Tensor*>(t));
}

uint64_t ToyDetector::weights_hash() const {
  std::vector<const Tensor*> tensors;
  collect_tensors(tensors);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* t : tensors)
    h = fnv1a(t->data.data(), t->data.size() * sizeof(double), h);
  return h;
}

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void put_f32_block(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(t.numel()));
  for (double v : t.data) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

void get_f32_block(std::istream& in, Tensor& t) {
  uint32_t n = get_u32(in);
  require(n == static_cast<uint32_t>(t.numel()), ErrorCode::parse,
          "detector checkpoint: weight block size mismatch");
  for (double& v : t.data) {
    uint32_t bits = get_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
}

}  // namespace

void ToyDetector::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write checkpoint: " + path);
  out.write("SAFEDET1", 8);
  put_u32(out, 1);  // format version

  json cfg;
  cfg["input_size"] = cfg_.input_size;
  cfg["num_classes"] = cfg_.num_classes;
  cfg["stem_channels"] = cfg_.stem_channels;
  cfg["stage_channels"] = cfg_.stage_channels;
  cfg["head_channels"] = cfg_.head_channels;
  cfg["anchor_px"] = cfg_.anchor_px;
  cfg["seed"] = cfg_.seed;
  std::string cfg_text = cfg.dump();
  put_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::vector<const Tensor*> tensors;
  collect_tensors(tensors);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const Tensor* t : tensors) put_f32_block(out, *t);
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

ToyDetector ToyDetector::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, "SAFEDET1", 8) == 0, ErrorCode::parse,
          "not a detector checkpoint (bad magic): " + path);
  uint32_t version = get_u32(in);
  require(version == 1, ErrorCode::parse, "unsupported detector checkpoint version");

  uint32_t cfg_len = get_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  json cfg_json = json::parse(cfg_text);

  ToyDetectorConfig cfg;
  cfg.input_size = cfg_json["input_size"].get<int>();
  cfg.num_classes = cfg_json["num_classes"].get<int>();
  cfg.stem_channels = cfg_json["stem_channels"].get<int>();
  cfg.stage_channels = cfg_json["stage_channels"].get<std::vector<int>>();
  cfg.head_channels = cfg_json["head_channels"].get<int>();
  cfg.anchor_px = cfg_json["anchor_px"].get<double>();
  cfg.seed = cfg_json["seed"].get<uint64_t>();

  ToyDetector det(cfg);
  std::vector<Tensor*> tensors;
  det.collect_tensors(tensors);
  uint32_t count = get_u32(in);
  require(count == tensors.size(), ErrorCode::parse, "detector checkpoint: tensor count mismatch");
  for (Tensor* t : tensors) get_f32_block(in, *t);
  require(in.good(), ErrorCode::io, "truncated checkpoint: " + path);
  det.trained_ = true;
  return det;
}

void ToyDetector::write_train_log_csv(const std::string& path,
                                      const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write training log: " + path);
  out << "epoch,loss,val_recall\n";
  for (const auto& e : log) out << e.epoch << "," << e.loss << "," << e.val_recall << "\n";
}

}  // namespace safeood
