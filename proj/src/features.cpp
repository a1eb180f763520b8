#include "hindicap/features.hpp"

#include "hindicap/error.hpp"
#include "hindicap/io.hpp"

#include <json.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <future>
#include <random>

namespace hindicap {

namespace fs = std::filesystem;

ImageFeature extract_feature(const FeatureBackend& backend, const std::string& image_id,
                             std::span<const unsigned char> image_bytes) {
  ImageFeature f{image_id, backend.extract(image_id, image_bytes), backend.name()};
  if (f.vector.size() != backend.feature_dim())
    throw DimensionError(backend.name() + " produced " + std::to_string(f.vector.size()) + " values, expected " +
                         std::to_string(backend.feature_dim()));
  if (!f.vector.allFinite()) throw IntegrityError("non-finite feature for " + image_id);
  return f;
}

ImageFeature stub_extract(const std::string& image_id, int dim, std::uint64_t seed) {
  if (dim < 1) throw ArgumentError("stub feature dimension must be >= 1");
  std::vector<std::uint32_t> key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (unsigned char c : image_id) key.push_back(c);
  std::seed_seq seq(key.begin(), key.end());
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  const double n = v.norm();
  if (n == 0.0) v[0] = 1.0; else v /= n;
  return {image_id, v.cast<float>(), "stub"};
}

VectorXf StubBackend::extract(const std::string& image_id, std::span<const unsigned char>) const {
  return stub_extract(image_id, dim_, seed_).vector;
}

CnnSpec cnn_spec(CnnArchitecture architecture) {
  switch (architecture) {
    case CnnArchitecture::kVgg16: return {architecture, "vgg16", 4096, 224, "caffe"};
    case CnnArchitecture::kResNet50: return {architecture, "resnet50", 2048, 224, "caffe"};
    case CnnArchitecture::kInceptionV3: return {architecture, "inceptionv3", 2048, 299, "tf"};
  }
  throw ArgumentError("unknown CNN architecture");
}

CnnSpec cnn_spec(const std::string& name) {
  if (name == "vgg16") return cnn_spec(CnnArchitecture::kVgg16);
  if (name == "resnet50") return cnn_spec(CnnArchitecture::kResNet50);
  if (name == "inceptionv3") return cnn_spec(CnnArchitecture::kInceptionV3);
  throw ArgumentError("unknown backend: " + name);
}

std::vector<float> preprocess_image(const CnnSpec& spec, std::span<const unsigned char> image_bytes) {
  if (image_bytes.empty()) throw ArgumentError("empty image");
  cv::Mat raw(1, static_cast<int>(image_bytes.size()), CV_8UC1, const_cast<unsigned char*>(image_bytes.data()));
  cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ArgumentError("cannot decode image");
  cv::Mat blob;
  const cv::Size size(spec.input_size, spec.input_size);
  if (spec.mode == "caffe") {
    // Keras "caffe" preprocessing: BGR order, ImageNet channel means subtracted, no scaling.
    blob = cv::dnn::blobFromImage(bgr, 1.0, size, cv::Scalar(103.939, 116.779, 123.68), false, false, CV_32F);
  } else {
    blob = cv::dnn::blobFromImage(bgr, 1.0 / 127.5, size, cv::Scalar(127.5, 127.5, 127.5), true, false, CV_32F);
  }
  const auto* data = blob.ptr<float>();
  return std::vector<float>(data, data + blob.total());
}

struct CnnBackend::Net {
  cv::dnn::Net net;
};

CnnBackend::CnnBackend(CnnArchitecture architecture, fs::path weights, fs::path config, std::string output_layer)
    : spec_(cnn_spec(architecture)),
      weights_(std::move(weights)),
      config_(std::move(config)),
      output_layer_(std::move(output_layer)) {}

CnnBackend::~CnnBackend() = default;

std::string CnnBackend::preprocessing() const {
  return spec_.mode == "caffe" ? "resize " + std::to_string(spec_.input_size) +
                                     ", BGR, subtract mean (103.939, 116.779, 123.68)"
                               : "resize " + std::to_string(spec_.input_size) + ", RGB, scale to [-1, 1]";
}

VectorXf CnnBackend::extract(const std::string&, std::span<const unsigned char> image_bytes) const {
  if (!fs::exists(weights_))
    throw LoadError("weights for " + spec_.name + " not found at " + weights_.string() +
                    "; download or export the headless pretrained network (see README) and point --weights-dir at it");
  const auto input = preprocess_image(spec_, image_bytes);
  std::lock_guard lock(mutex_);
  if (!net_) {
    auto loaded = std::make_unique<Net>();
    loaded->net = config_.empty() ? cv::dnn::readNet(weights_.string()) : cv::dnn::readNet(weights_.string(), config_.string());
    if (loaded->net.empty()) throw LoadError("could not load network from " + weights_.string());
    net_ = std::move(loaded);
  }
  const int shape[] = {1, 3, spec_.input_size, spec_.input_size};
  cv::Mat blob(4, shape, CV_32F, const_cast<float*>(input.data()));
  net_->net.setInput(blob);
  cv::Mat out = output_layer_.empty() ? net_->net.forward() : net_->net.forward(output_layer_);
  out = out.reshape(1, 1);
  if (out.total() != static_cast<std::size_t>(spec_.feature_dim))
    throw DimensionError(spec_.name + " network produced " + std::to_string(out.total()) + " values, expected " +
                         std::to_string(spec_.feature_dim) + "; is the classification head removed?");
  VectorXf v(spec_.feature_dim);
  std::memcpy(v.data(), out.ptr<float>(), sizeof(float) * v.size());
  return v;
}

std::unique_ptr<FeatureBackend> make_backend(const std::string& name, const fs::path& weights_dir, int stub_dim,
                                             std::uint64_t stub_seed) {
  if (name == "stub") return std::make_unique<StubBackend>(stub_dim, stub_seed);
  const auto spec = cnn_spec(name);
  return std::make_unique<CnnBackend>(spec.architecture, weights_dir / (name + ".onnx"));
}

std::vector<ImageFeature> extract_directory(const FeatureBackend& backend, const fs::path& dir, unsigned threads) {
  if (!fs::is_directory(dir)) throw LoadError("image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageFeature> out(files.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < files.size(); i += step) {
      const auto bytes = io::read_file(files[i]);
      out[i] = extract_feature(backend, files[i].filename().string(),
                               std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
    }
  };
  threads = std::max(1u, threads);
  std::vector<std::future<void>> jobs;
  for (unsigned t = 0; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t, threads));
  for (auto& j : jobs) j.get();
  return out;
}

const ImageFeature& FeatureCache::at(const std::string& id) const {
  auto it = features_.find(id);
  if (it == features_.end()) throw LoadError("no cached feature for image " + id);
  return it->second;
}

void FeatureCache::insert(ImageFeature feature) {
  if (feature.vector.size() != dim_)
    throw DimensionError("feature for " + feature.image_id + " has " + std::to_string(feature.vector.size()) +
                         " values, cache holds " + std::to_string(dim_));
  if (feature.backend_name != backend_)
    throw ArgumentError("feature backend " + feature.backend_name + " does not match cache backend " + backend_);
  auto id = feature.image_id;
  features_.insert_or_assign(std::move(id), std::move(feature));
}

namespace {

constexpr const char* kCacheFormat = "hindicap-feature-cache";
constexpr int kCacheVersion = 1;

void append_le(std::string& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

} // namespace

void save_feature_cache(const std::vector<ImageFeature>& features, const fs::path& dir, const std::string& preprocessing) {
  if (features.empty()) throw ArgumentError("refusing to save an empty feature cache");
  const auto& backend = features.front().backend_name;
  const auto dim = features.front().vector.size();
  std::string data;
  data.reserve(features.size() * static_cast<std::size_t>(dim) * 4);
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& f : features) {
    if (f.backend_name != backend) throw ArgumentError("mixed backends in one feature cache");
    if (f.vector.size() != dim) throw DimensionError("mixed feature dimensions in one cache");
    if (!f.vector.allFinite()) throw IntegrityError("non-finite feature for " + f.image_id);
    for (Eigen::Index i = 0; i < dim; ++i) append_le(data, f.vector[i]);
    ids.push_back(f.image_id);
  }
  nlohmann::json manifest = {{"format", kCacheFormat},
                             {"version", kCacheVersion},
                             {"backend", backend},
                             {"feature_dim", dim},
                             {"count", features.size()},
                             {"dtype", "float32-le"},
                             {"preprocessing", preprocessing},
                             {"data_file", "features.bin"},
                             {"crc32", io::crc32(data)},
                             {"ids", ids}};
  fs::create_directories(dir);
  // Data first, manifest last: a cache without a manifest is never loadable.
  fs::remove(dir / "manifest.json");
  io::write_file_atomic(dir / "features.bin", data);
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

void save_feature_cache(const FeatureCache& cache, const fs::path& dir) {
  std::vector<ImageFeature> features;
  for (const auto& [id, f] : cache.items()) features.push_back(f);
  save_feature_cache(features, dir, cache.preprocessing);
}

FeatureCache load_feature_cache(const fs::path& dir, const std::string& expected_backend, int expected_dim) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw LoadError("feature cache manifest missing: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path));
    if (manifest.at("format") != kCacheFormat) throw IntegrityError("not a feature cache: " + dir.string());
    if (manifest.at("version") != kCacheVersion)
      throw IntegrityError("unsupported feature cache version " + manifest.at("version").dump());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("corrupt feature cache manifest: " + std::string(e.what()));
  }
  const std::string backend = manifest["backend"];
  const int dim = manifest["feature_dim"];
  const std::size_t count = manifest["count"];
  if (!expected_backend.empty() && backend != expected_backend)
    throw ArgumentError("feature cache was built with backend " + backend + ", expected " + expected_backend);
  if (expected_dim > 0 && dim != expected_dim)
    throw DimensionError("feature cache has dimension " + std::to_string(dim) + ", expected " +
                         std::to_string(expected_dim));
  const auto& ids = manifest["ids"];
  if (!ids.is_array() || ids.size() != count) throw IntegrityError("feature cache id list does not match its count");
  const auto data = io::read_file(dir / manifest.value("data_file", "features.bin"));
  if (data.size() != count * static_cast<std::size_t>(dim) * 4)
    throw IntegrityError("feature cache data is " + std::to_string(data.size()) + " bytes, manifest implies " +
                         std::to_string(count * static_cast<std::size_t>(dim) * 4));
  if (io::crc32(data) != manifest["crc32"].get<std::uint32_t>()) throw IntegrityError("feature cache checksum mismatch");

  FeatureCache cache(backend, dim);
  cache.preprocessing = manifest.value("preprocessing", "");
  for (std::size_t n = 0; n < count; ++n) {
    ImageFeature f{ids[n].get<std::string>(), VectorXf(dim), backend};
    const char* base = data.data() + n * static_cast<std::size_t>(dim) * 4;
    for (int i = 0; i < dim; ++i) f.vector[i] = read_le(base + 4 * i);
    if (!f.vector.allFinite()) throw IntegrityError("non-finite value in cached feature " + f.image_id);
    cache.insert(std::move(f));
  }
  return cache;
}

} // namespace hindicap
