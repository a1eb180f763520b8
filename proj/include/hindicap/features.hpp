#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "hindicap/eigen_types.hpp"

namespace hindicap {

struct ImageFeature {
  std::string image_id;
  VectorXf vector;
  std::string backend_name;
};

/// Maps image bytes to a fixed-length vector. Implementations must be deterministic
/// and callable from several threads.
class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual std::string name() const = 0;
  virtual int feature_dim() const = 0;
  /// Square input side in pixels; 0 when the backend does not look at pixels.
  virtual int input_size() const = 0;
  /// Human-readable preprocessing recipe, recorded in cache manifests.
  virtual std::string preprocessing() const = 0;
  virtual VectorXf extract(const std::string& image_id, std::span<const unsigned char> image_bytes) const = 0;
};

ImageFeature extract_feature(const FeatureBackend& backend, const std::string& image_id,
                             std::span<const unsigned char> image_bytes);

/// Seeded pseudo-feature keyed by (seed, image_id), unit Euclidean norm.
ImageFeature stub_extract(const std::string& image_id, int dim, std::uint64_t seed);

class StubBackend : public FeatureBackend {
 public:
  StubBackend(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  std::string name() const override { return "stub"; }
  int feature_dim() const override { return dim_; }
  int input_size() const override { return 0; }
  std::string preprocessing() const override { return "none (seeded pseudo-random, unit norm)"; }
  VectorXf extract(const std::string& image_id, std::span<const unsigned char>) const override;

 private:
  int dim_;
  std::uint64_t seed_;
};

enum class CnnArchitecture { kVgg16, kResNet50, kInceptionV3 };

struct CnnSpec {
  CnnArchitecture architecture;
  std::string name;
  int feature_dim;
  int input_size;
  /// "caffe": BGR, per-channel mean subtraction. "tf": RGB scaled to [-1, 1].
  std::string mode;
};

CnnSpec cnn_spec(CnnArchitecture architecture);
CnnSpec cnn_spec(const std::string& name);

/// Decodes and resizes an image into an NCHW float blob for the given network.
/// Throws ArgumentError for undecodable bytes. Returned as a flat row-major buffer.
std::vector<float> preprocess_image(const CnnSpec& spec, std::span<const unsigned char> image_bytes);

/// Pretrained CNN run through OpenCV's DNN module. The model file must be the network
/// with its classification head removed (ONNX, or Caffe prototxt + caffemodel),
/// so its output is the penultimate layer. Weights are loaded lazily on first use.
class CnnBackend : public FeatureBackend {
 public:
  /// `weights` is an .onnx file, or a .caffemodel with `config` the .prototxt.
  /// `output_layer` optionally names the layer to read when the file still has its head.
  CnnBackend(CnnArchitecture architecture, std::filesystem::path weights, std::filesystem::path config = {},
             std::string output_layer = {});
  ~CnnBackend() override;

  std::string name() const override { return spec_.name; }
  int feature_dim() const override { return spec_.feature_dim; }
  int input_size() const override { return spec_.input_size; }
  std::string preprocessing() const override;
  VectorXf extract(const std::string& image_id, std::span<const unsigned char> image_bytes) const override;

 private:
  struct Net;
  CnnSpec spec_;
  std::filesystem::path weights_;
  std::filesystem::path config_;
  std::string output_layer_;
  mutable std::mutex mutex_;
  mutable std::unique_ptr<Net> net_;
};

/// Builds a backend by name: vgg16 | resnet50 | inceptionv3 | stub. CNN weights are looked up
/// as <weights_dir>/<name>.onnx.
std::unique_ptr<FeatureBackend> make_backend(const std::string& name, const std::filesystem::path& weights_dir,
                                             int stub_dim = 64, std::uint64_t stub_seed = 0);

/// Extracts every .jpg/.jpeg/.png in `dir` (sorted by filename; the filename is the image id).
std::vector<ImageFeature> extract_directory(const FeatureBackend& backend, const std::filesystem::path& dir,
                                            unsigned threads = 1);

class FeatureCache {
 public:
  FeatureCache() = default;
  FeatureCache(std::string backend, int dim) : backend_(std::move(backend)), dim_(dim) {}

  const std::string& backend() const { return backend_; }
  int feature_dim() const { return dim_; }
  std::size_t size() const { return features_.size(); }
  bool contains(const std::string& id) const { return features_.count(id) > 0; }
  /// Throws LoadError naming the image when missing.
  const ImageFeature& at(const std::string& id) const;
  void insert(ImageFeature feature);
  const std::map<std::string, ImageFeature>& items() const { return features_; }
  std::string preprocessing;

 private:
  std::string backend_;
  int dim_ = 0;
  std::map<std::string, ImageFeature> features_;
};

/// Cache directory: manifest.json (format, version, backend, feature_dim, count, dtype,
/// preprocessing, crc32, ids) plus features.bin holding `count * feature_dim`
/// little-endian float32 values in manifest id order.
void save_feature_cache(const std::vector<ImageFeature>& features, const std::filesystem::path& dir,
                        const std::string& preprocessing = {});
void save_feature_cache(const FeatureCache& cache, const std::filesystem::path& dir);

/// Empty expectations are not checked.
FeatureCache load_feature_cache(const std::filesystem::path& dir, const std::string& expected_backend = {},
                                int expected_dim = 0);

} // namespace hindicap
