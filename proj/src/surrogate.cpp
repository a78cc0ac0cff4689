#include "safeood/surrogate.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "safeood/error.hpp"

namespace safeood {

Image fgsm_perturb(const Image& image, const ToyDetector& detector,
                   const std::vector<Annotation>& targets, const PerturbConfig& config) {
  require(config.epsilon_255 >= 0.0, ErrorCode::precondition, "fgsm_perturb: epsilon must be >= 0");

  if (config.epsilon_255 == 0.0) return image;  // bit-identical output

  Image grad = detector.loss_input_gradient(image, targets);
  const double eps = config.epsilon_255 / 255.0;

  Image out(image.height(), image.width());
  for (size_t i = 0; i < image.tensor.data.size(); ++i) {
    double g = grad.tensor.data[i];
    double sgn = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    double v = image.tensor.data[i] + eps * sgn;
    out.tensor.data[i] = config.clip_to_range ? std::clamp(v, 0.0, 1.0) : v;
  }
  return out;
}

PairGenStats generate_training_pairs(
    const Dataset& dataset, const ToyDetector& detector,
    const std::vector<std::string>& layer_ids, const SurrogateConfig& config,
    const std::function<void(size_t image_index, std::vector<LabeledSafeVector>&&)>& sink) {
  require(!dataset.items.empty(), ErrorCode::precondition, "generate_training_pairs: empty dataset");
  require(!layer_ids.empty(), ErrorCode::precondition, "generate_training_pairs: no layers");

  PairGenStats stats;
  const double img_size = detector.config().input_size;

  for (size_t i = 0; i < dataset.items.size(); ++i) {
    Image clean = dataset.load_image(i);

    // boxes come from the clean image only; the perturbed pass reuses them
    std::vector<Detection> dets = detector.detect(clean, config.confidence_threshold);
    ++stats.images_processed;
    if (dets.empty()) {
      ++stats.images_without_boxes;
      continue;
    }

    Image perturbed =
        fgsm_perturb(clean, detector, dataset.items[i].annotations, config.perturb);

    std::vector<FeatureMap> clean_maps = detector.extract_feature_maps(clean, layer_ids);
    std::vector<FeatureMap> pert_maps = detector.extract_feature_maps(perturbed, layer_ids);

    std::vector<LabeledSafeVector> out;
    for (const Detection& det : dets) {
      auto clipped = clip_box(det.box, img_size, img_size);
      if (!clipped) {
        ++stats.degenerate_boxes_skipped;
        continue;
      }
      LabeledSafeVector clean_vec;
      clean_vec.vector = build_safe_vector(clean_maps, *clipped, config.roi);
      clean_vec.vector.source_detection = det;
      clean_vec.label = 0;
      LabeledSafeVector pert_vec;
      pert_vec.vector = build_safe_vector(pert_maps, *clipped, config.roi);
      pert_vec.vector.source_detection = det;
      pert_vec.label = 1;
      out.push_back(std::move(clean_vec));
      out.push_back(std::move(pert_vec));
      stats.vectors_emitted += 2;
    }
    if (!out.empty()) sink(i, std::move(out));
  }
  return stats;
}

namespace {

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, sizeof(T));
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

void write_vector_cache(const std::string& path, const std::vector<CacheRecord>& records) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  // write to a temp file then rename so concurrent writers stay last-write-wins
  fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write vector cache: " + path);
    out.write("SAFEVEC1", 8);
    for (const CacheRecord& r : records) {
      put_le<uint32_t>(out, r.image_id);
      put_le<uint32_t>(out, r.box_index);
      put_le<uint32_t>(out, r.label);
      uint32_t eps_bits;
      std::memcpy(&eps_bits, &r.epsilon_255, 4);
      put_le<uint32_t>(out, eps_bits);
      put_le<uint64_t>(out, r.layer_subset_hash);
      put_le<uint32_t>(out, static_cast<uint32_t>(r.values.size()));
      for (float f : r.values) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le<uint32_t>(out, bits);
      }
    }
    require(out.good(), ErrorCode::io, "write failed: " + path);
  }
  fs::rename(tmp, target);
}

std::vector<CacheRecord> read_vector_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open vector cache: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, "SAFEVEC1", 8) == 0, ErrorCode::parse,
          "not a vector cache (bad magic): " + path);

  std::vector<CacheRecord> records;
  while (true) {
    CacheRecord r;
    r.image_id = get_le<uint32_t>(in);
    if (in.eof()) break;
    r.box_index = get_le<uint32_t>(in);
    r.label = get_le<uint32_t>(in);
    uint32_t eps_bits = get_le<uint32_t>(in);
    std::memcpy(&r.epsilon_255, &eps_bits, 4);
    r.layer_subset_hash = get_le<uint64_t>(in);
    uint32_t n = get_le<uint32_t>(in);
    require(in.good(), ErrorCode::parse, "truncated vector cache: " + path);
    r.values.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
      uint32_t bits = get_le<uint32_t>(in);
      std::memcpy(&r.values[i], &bits, 4);
    }
    require(in.good(), ErrorCode::parse, "truncated vector cache: " + path);
    records.push_back(std::move(r));
  }
  return records;
}

std::string vector_cache_path(const std::string& cache_dir, const std::string& split_tag,
                              double epsilon_255, uint64_t subset_hash) {
  std::ostringstream name;
  name << split_tag << "_eps" << epsilon_255 << "_" << std::hex << subset_hash << ".safevec";
  return (std::filesystem::path(cache_dir) / name.str()).string();
}

}  // namespace safeood
