#pragma once

#include <string>
#include <vector>

#include "safeood/image.hpp"
#include "safeood/rng.hpp"
#include "safeood/types.hpp"

namespace safeood {

enum class SplitKind { id_train, id_val, id_test, ood_test };

const char* split_kind_name(SplitKind kind);
SplitKind split_kind_from_name(const std::string& name);

// ID and OOD class sets are disjoint by construction; the global category
// ids are circle=1, square=2, triangle=3, star=4, cross=5.
enum class ShapeKind { circle, square, triangle, star, cross };

const char* shape_name(ShapeKind s);

// Geometric inside-test of a shape at a continuous image point. Shared by
// the renderer and usable by mask oracles with independent sampling.
bool shape_contains(ShapeKind shape, double cx, double cy, double size, double rotation,
                    double px, double py);

struct SceneSpec {
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  double min_size = 10.0;
  double max_size = 28.0;
  double bg_noise_sigma = 0.03;
  double max_pair_iou = 0.2;
  int max_place_attempts = 1000;
  double min_color_contrast = 0.25;  // L-inf distance between object and base color
};

struct SceneObject {
  ShapeKind shape = ShapeKind::circle;
  double cx = 0, cy = 0, size = 0, rotation = 0;
  double color[3] = {0, 0, 0};
  BoundingBox tight_box;  // from the rendered mask
};

struct Scene {
  Image image;
  std::vector<SceneObject> objects;
};

// Renders one scene; on placement failure the whole scene is regenerated
// from a fresh sub-seed (regen counter incremented).
Scene make_scene(uint64_t scene_seed, const SceneSpec& spec, const std::vector<ShapeKind>& classes,
                 int* regenerations = nullptr);

struct GenStats {
  int images = 0;
  int annotations = 0;
  int scene_regenerations = 0;
};

// Writes out_dir/images/*.png and out_dir/annotations.json (COCO-style).
// Pure function of (kind, n_images, seed, spec): reruns are byte-identical.
GenStats generate_split(SplitKind kind, int n_images, uint64_t seed, const std::string& out_dir,
                        const SceneSpec& spec = {});

struct DatasetItem {
  int image_id = 0;
  std::string file_name;
  int width = 0, height = 0;
  std::vector<Annotation> annotations;  // class_id remapped to dense [0, K)
};

struct Dataset {
  std::string image_root;
  std::vector<DatasetItem> items;
  std::vector<std::string> category_names;  // dense id -> name

  int num_classes() const { return static_cast<int>(category_names.size()); }
  Image load_image(size_t index) const;
};

// COCO-style schema:
//   {"images":[{"id","file_name","width","height"}],
//    "annotations":[{"id","image_id","category_id","bbox":[x,y,w,h]}],
//    "categories":[{"id","name"}]}
// bbox in absolute pixels, xywh. Category ids are remapped to dense [0, K)
// in ascending original-id order.
Dataset load_coco_style(const std::string& annotation_file, const std::string& image_root);

// Convenience: out_dir as written by generate_split.
Dataset load_split_dir(const std::string& dir);

// Fails when two splits supposed to be ID vs OOD share class names.
void assert_disjoint_classes(const Dataset& a, const Dataset& b);

}  // namespace safeood
