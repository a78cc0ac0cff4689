#include "safeood/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "safeood/error.hpp"

namespace safeood {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_kind_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::id_train: return "id_train";
    case SplitKind::id_val: return "id_val";
    case SplitKind::id_test: return "id_test";
    case SplitKind::ood_test: return "ood_test";
  }
  return "id_train";
}

SplitKind split_kind_from_name(const std::string& name) {
  if (name == "id_train") return SplitKind::id_train;
  if (name == "id_val") return SplitKind::id_val;
  if (name == "id_test") return SplitKind::id_test;
  if (name == "ood_test") return SplitKind::ood_test;
  fail(ErrorCode::config, "unknown split kind: " + name);
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::star: return "star";
    case ShapeKind::cross: return "cross";
  }
  return "circle";
}

namespace {

constexpr int kGlobalCategoryId[5] = {1, 2, 3, 4, 5};  // indexed by ShapeKind

const std::vector<ShapeKind> kIdClasses = {ShapeKind::circle, ShapeKind::square,
                                           ShapeKind::triangle};
const std::vector<ShapeKind> kOodClasses = {ShapeKind::star, ShapeKind::cross};

bool point_in_polygon(const std::vector<double>& xs, const std::vector<double>& ys, double px,
                      double py) {
  bool inside = false;
  size_t n = xs.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((ys[i] > py) != (ys[j] > py)) {
      double t = (py - ys[j]) / (ys[i] - ys[j]);
      double xint = xs[j] + t * (xs[i] - xs[j]);
      if (px < xint) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

bool shape_contains(ShapeKind shape, double cx, double cy, double size, double rotation,
                    double px, double py) {
  const double dx = px - cx, dy = py - cy;
  const double c = std::cos(rotation), s = std::sin(rotation);
  const double u = c * dx + s * dy;   // rotated frame
  const double v = -s * dx + c * dy;
  const double half = 0.5 * size;
  switch (shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= half * half;
    case ShapeKind::square:
      return std::abs(u) <= half && std::abs(v) <= half;
    case ShapeKind::triangle: {
      std::vector<double> xs(3), ys(3);
      for (int k = 0; k < 3; ++k) {
        double a = rotation + M_PI / 2.0 + k * 2.0 * M_PI / 3.0;
        xs[k] = cx + half * std::cos(a);
        ys[k] = cy + half * std::sin(a);
      }
      return point_in_polygon(xs, ys, px, py);
    }
    case ShapeKind::star: {
      std::vector<double> xs(10), ys(10);
      const double inner = 0.42 * half;
      for (int k = 0; k < 10; ++k) {
        double r = (k % 2 == 0) ? half : inner;
        double a = rotation - M_PI / 2.0 + k * M_PI / 5.0;
        xs[k] = cx + r * std::cos(a);
        ys[k] = cy + r * std::sin(a);
      }
      return point_in_polygon(xs, ys, px, py);
    }
    case ShapeKind::cross: {
      const double arm = size / 6.0;
      return (std::abs(u) <= half && std::abs(v) <= arm) ||
             (std::abs(v) <= half && std::abs(u) <= arm);
    }
  }
  return false;
}

namespace {

struct PlacedObject {
  SceneObject obj;
  std::vector<uint8_t> mask;  // image_size * image_size
};

// Rasterizes at pixel centers; returns false if the mask is empty or touches
// the image border (object must lie fully inside).
bool rasterize(const SceneObject& o, int n, std::vector<uint8_t>& mask, BoundingBox& tight) {
  mask.assign(static_cast<size_t>(n) * n, 0);
  int minx = n, miny = n, maxx = -1, maxy = -1;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (shape_contains(o.shape, o.cx, o.cy, o.size, o.rotation, x + 0.5, y + 0.5)) {
        mask[static_cast<size_t>(y) * n + x] = 1;
        minx = std::min(minx, x);
        miny = std::min(miny, y);
        maxx = std::max(maxx, x);
        maxy = std::max(maxy, y);
      }
    }
  }
  if (maxx < 0) return false;
  if (minx == 0 || miny == 0 || maxx == n - 1 || maxy == n - 1) return false;
  tight = BoundingBox{static_cast<double>(minx), static_cast<double>(miny),
                      static_cast<double>(maxx + 1), static_cast<double>(maxy + 1)};
  return true;
}

bool try_make_scene(Rng& rng, const SceneSpec& spec, const std::vector<ShapeKind>& classes,
                    Scene& out) {
  const int n = spec.image_size;
  double bg[3];
  for (double& c : bg) c = rng.uniform(0.05, 0.95);

  Scene scene;
  scene.image = Image(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c)
        scene.image.at(c, y, x) = std::clamp(bg[c] + rng.normal(0.0, spec.bg_noise_sigma), 0.0, 1.0);

  const int count = static_cast<int>(rng.uniform_int(spec.min_objects, spec.max_objects));
  std::vector<PlacedObject> placed;
  for (int i = 0; i < count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_place_attempts && !ok; ++attempt) {
      SceneObject o;
      o.shape = classes[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(classes.size()) - 1))];
      o.size = rng.uniform(spec.min_size, spec.max_size);
      o.rotation = rng.uniform(0.0, 2.0 * M_PI);
      const double margin = 0.75 * o.size + 1.0;  // covers a rotated square's circumradius
      if (2.0 * margin >= n) continue;
      o.cx = rng.uniform(margin, n - margin);
      o.cy = rng.uniform(margin, n - margin);
      for (int t = 0; t < 100; ++t) {
        for (double& c : o.color) c = rng.uniform(0.0, 1.0);
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(o.color[c] - bg[c]));
        if (d >= spec.min_color_contrast) break;
      }
      PlacedObject p;
      p.obj = o;
      if (!rasterize(o, n, p.mask, p.obj.tight_box)) continue;
      bool overlaps = false;
      for (const auto& q : placed) {
        if (iou(p.obj.tight_box, q.obj.tight_box) >= spec.max_pair_iou) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      placed.push_back(std::move(p));
      ok = true;
    }
    if (!ok) return false;
  }

  for (const auto& p : placed) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (p.mask[static_cast<size_t>(y) * n + x])
          for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = p.obj.color[c];
    scene.objects.push_back(p.obj);
  }
  out = std::move(scene);
  return true;
}

}  // namespace

Scene make_scene(uint64_t scene_seed, const SceneSpec& spec, const std::vector<ShapeKind>& classes,
                 int* regenerations) {
  require(!classes.empty(), ErrorCode::precondition, "make_scene: empty class set");
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(hash_seed(scene_seed, attempt));
    Scene scene;
    if (try_make_scene(rng, spec, classes, scene)) return scene;
    if (regenerations) ++(*regenerations);
    require(attempt < 64, ErrorCode::precondition,
            "make_scene: placement failed repeatedly; scene spec over-constrained");
  }
}

GenStats generate_split(SplitKind kind, int n_images, uint64_t seed, const std::string& out_dir,
                        const SceneSpec& spec) {
  require(n_images >= 1, ErrorCode::precondition, "generate_split: n_images must be >= 1");
  const bool ood = kind == SplitKind::ood_test;
  const std::vector<ShapeKind>& classes = ood ? kOodClasses : kIdClasses;

  fs::create_directories(fs::path(out_dir) / "images");

  const uint64_t split_seed = hash_seed(seed, static_cast<uint64_t>(kind) + 0x5afe);
  GenStats stats;

  json images = json::array();
  json annotations = json::array();
  int next_ann_id = 1;
  for (int i = 0; i < n_images; ++i) {
    Scene scene = make_scene(hash_seed(split_seed, static_cast<uint64_t>(i)), spec, classes,
                             &stats.scene_regenerations);
    std::ostringstream name;
    name << split_kind_name(kind) << "_";
    name.width(5);
    name.fill('0');
    name << i;
    std::string file_name = name.str() + ".png";
    write_png((fs::path(out_dir) / "images" / file_name).string(), scene.image);

    images.push_back({{"id", i + 1},
                      {"file_name", file_name},
                      {"width", spec.image_size},
                      {"height", spec.image_size}});
    for (const auto& o : scene.objects) {
      const BoundingBox& b = o.tight_box;
      annotations.push_back(
          {{"id", next_ann_id++},
           {"image_id", i + 1},
           {"category_id", kGlobalCategoryId[static_cast<int>(o.shape)]},
           {"bbox", {static_cast<int>(b.x1), static_cast<int>(b.y1),
                     static_cast<int>(b.width()), static_cast<int>(b.height())}}});
      ++stats.annotations;
    }
    ++stats.images;
  }

  json categories = json::array();
  for (ShapeKind s : classes)
    categories.push_back({{"id", kGlobalCategoryId[static_cast<int>(s)]}, {"name", shape_name(s)}});

  json doc;
  doc["images"] = images;
  doc["annotations"] = annotations;
  doc["categories"] = categories;

  std::ofstream out((fs::path(out_dir) / "annotations.json").string(), std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write annotations under " + out_dir);
  out << doc.dump(2) << "\n";
  return stats;
}

Dataset load_coco_style(const std::string& annotation_file, const std::string& image_root) {
  std::ifstream in(annotation_file);
  require(in.good(), ErrorCode::io, "cannot open annotation file: " + annotation_file);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::parse, std::string("annotation file: ") + e.what());
  }

  auto need = [&](const json& j, const char* key, const std::string& path) -> const json& {
    require(j.is_object() && j.contains(key), ErrorCode::parse,
            "schema violation at " + path + ": missing '" + key + "'");
    return j[key];
  };
  require(doc.is_object(), ErrorCode::parse, "schema violation at $: object required");
  const json& jimages = need(doc, "images", "$");
  const json& janns = need(doc, "annotations", "$");
  const json& jcats = need(doc, "categories", "$");
  require(jimages.is_array(), ErrorCode::parse, "schema violation at $.images: array required");
  require(janns.is_array(), ErrorCode::parse, "schema violation at $.annotations: array required");
  require(jcats.is_array(), ErrorCode::parse, "schema violation at $.categories: array required");

  Dataset ds;
  ds.image_root = image_root;

  // categories -> dense ids in ascending original-id order
  std::map<int, std::string> cats;
  for (size_t i = 0; i < jcats.size(); ++i) {
    std::string path = "$.categories[" + std::to_string(i) + "]";
    int id = need(jcats[i], "id", path).get<int>();
    std::string cname = need(jcats[i], "name", path).get<std::string>();
    require(cats.emplace(id, cname).second, ErrorCode::parse,
            "schema violation at " + path + ": duplicate category id");
  }
  std::map<int, int> dense;
  for (const auto& [id, cname] : cats) {
    dense[id] = static_cast<int>(ds.category_names.size());
    ds.category_names.push_back(cname);
  }

  std::map<int, size_t> item_by_id;
  for (size_t i = 0; i < jimages.size(); ++i) {
    std::string path = "$.images[" + std::to_string(i) + "]";
    DatasetItem item;
    item.image_id = need(jimages[i], "id", path).get<int>();
    item.file_name = need(jimages[i], "file_name", path).get<std::string>();
    item.width = need(jimages[i], "width", path).get<int>();
    item.height = need(jimages[i], "height", path).get<int>();
    require(item_by_id.emplace(item.image_id, ds.items.size()).second, ErrorCode::parse,
            "schema violation at " + path + ": duplicate image id");
    ds.items.push_back(std::move(item));
  }

  for (size_t i = 0; i < janns.size(); ++i) {
    std::string path = "$.annotations[" + std::to_string(i) + "]";
    int image_id = need(janns[i], "image_id", path).get<int>();
    int category_id = need(janns[i], "category_id", path).get<int>();
    const json& bbox = need(janns[i], "bbox", path);
    require(bbox.is_array() && bbox.size() == 4, ErrorCode::parse,
            "schema violation at " + path + ".bbox: [x,y,w,h] required");
    auto img_it = item_by_id.find(image_id);
    require(img_it != item_by_id.end(), ErrorCode::parse,
            "schema violation at " + path + ": unknown image_id " + std::to_string(image_id));
    auto cat_it = dense.find(category_id);
    require(cat_it != dense.end(), ErrorCode::parse,
            "schema violation at " + path + ": unknown category_id " + std::to_string(category_id));
    Annotation ann;
    double x = bbox[0].get<double>(), y = bbox[1].get<double>();
    double w = bbox[2].get<double>(), h = bbox[3].get<double>();
    ann.box = BoundingBox{x, y, x + w, y + h};
    ann.class_id = cat_it->second;
    ds.items[img_it->second].annotations.push_back(ann);
  }

  // every referenced image must exist on disk
  std::vector<std::string> missing;
  for (const auto& item : ds.items) {
    fs::path p = fs::path(image_root) / item.file_name;
    if (!fs::exists(p)) missing.push_back(item.file_name + " (id " + std::to_string(item.image_id) + ")");
  }
  if (!missing.empty()) {
    std::string msg = "missing image files:";
    for (size_t i = 0; i < std::min<size_t>(missing.size(), 10); ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " ... (" + std::to_string(missing.size()) + " total)";
    fail(ErrorCode::lookup, msg);
  }
  return ds;
}

Dataset load_split_dir(const std::string& dir) {
  return load_coco_style((fs::path(dir) / "annotations.json").string(),
                         (fs::path(dir) / "images").string());
}

Image Dataset::load_image(size_t index) const {
  const DatasetItem& item = items.at(index);
  return read_png((fs::path(image_root) / item.file_name).string());
}

void assert_disjoint_classes(const Dataset& a, const Dataset& b) {
  std::set<std::string> sa(a.category_names.begin(), a.category_names.end());
  for (const auto& name : b.category_names) {
    require(sa.find(name) == sa.end(), ErrorCode::precondition,
            "ID/OOD splits share class '" + name + "'");
  }
}

}  // namespace safeood
