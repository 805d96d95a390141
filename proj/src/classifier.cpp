#include "turing/classifier.hpp"

#include <httplib.h>

#include <array>
#include <cstdlib>
#include <json.hpp>

#include "turing/dataset.hpp"
#include "turing/error.hpp"
#include "turing/parallel.hpp"
#include "turing/rng.hpp"
#include "turing/tensor_io.hpp"

namespace turing::classify {
namespace {

std::string shape_text(const nn::Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

std::string image_key(const Image& image) {
  const std::vector<std::uint8_t> bytes = to_f32le(image);
  return std::string(bytes.begin(), bytes.end());
}

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

void check_batch(const Classifier& classifier, const std::vector<Image>& images) {
  const nn::Shape s = classifier.input_shape();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.channels() != s.channels || im.height() != s.height || im.width() != s.width) {
      throw ValidationError("classify: image " + std::to_string(i) + " has shape " + im.shape_string() +
                            ", classifier " + classifier.name() + " expects " + shape_text(s));
    }
  }
}

// ---- builtin toy -------------------------------------------------------

namespace {

nn::ConvNet toy_net(std::uint64_t seed, nn::Shape shape, int n_classes) {
  require(shape.channels == 3, "builtin_toy_classifier: input must have 3 channels");
  require(shape.height >= 8 && shape.width >= 8, "builtin_toy_classifier: input must be at least 8x8");
  require(n_classes >= 2, "builtin_toy_classifier: need at least 2 classes");
  nn::NetConfig config;
  config.input = shape;
  config.channels = {8, 16, 16};
  config.kernel = 3;
  config.stride = 2;
  config.bias_std = 0.1;
  config.seed = derive_seed(seed, "toy-classifier");
  return nn::make_random_net(config);
}

constexpr Index kCalibrationImages = 256;

}  // namespace

ToyClassifier::ToyClassifier(std::uint64_t seed, nn::Shape shape, int n_classes)
    : seed_(seed), net_(toy_net(seed, shape, n_classes)) {
  const Index features = net_.shape(net_.depth()).channels;
  Rng rng = make_rng(seed, "toy-readout");
  std::normal_distribution<double> normal(0.0, 1.0);
  readout_.resize(n_classes, features);
  for (Index k = 0; k < readout_.size(); ++k) readout_.data()[k] = normal(rng);

  const std::vector<Image> calibration =
      data::synthetic_images(kCalibrationImages, shape, derive_seed(seed, "toy-calibration"));
  Eigen::MatrixXd pooled_all(features, kCalibrationImages);
  feature_mean_ = Eigen::VectorXd::Zero(features);
  feature_scale_ = Eigen::VectorXd::Ones(features);
  for (Index n = 0; n < kCalibrationImages; ++n) pooled_all.col(n) = pooled(calibration[static_cast<std::size_t>(n)]);
  feature_mean_ = pooled_all.rowwise().mean();
  const Eigen::MatrixXd centred = pooled_all.colwise() - feature_mean_;
  for (Index f = 0; f < features; ++f) {
    const double sd = std::sqrt(centred.row(f).squaredNorm() / static_cast<double>(kCalibrationImages));
    feature_scale_[f] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
}

std::string ToyClassifier::name() const { return "builtin:" + std::to_string(seed_); }

Eigen::VectorXd ToyClassifier::pooled(const Image& image) const {
  const Eigen::VectorXd x = (quantize_f32(image).flat().array() - 127.5) / 64.0;
  const Eigen::VectorXd f = net_.features(x, net_.depth());
  const nn::Shape& s = net_.shape(net_.depth());
  const Index cells = s.height * s.width;
  Eigen::VectorXd out(s.channels);
  for (Index c = 0; c < s.channels; ++c) out[c] = f.segment(c * cells, cells).mean();
  return out;
}

Eigen::VectorXd ToyClassifier::logits(const Image& image) const {
  return readout_ * (pooled(image) - feature_mean_).cwiseProduct(feature_scale_);
}

int ToyClassifier::classify(const Image& image) const { return static_cast<int>(nn::argmax(logits(image))); }

std::vector<int> ToyClassifier::classify_batch(const std::vector<Image>& images) const {
  check_batch(*this, images);
  std::vector<int> labels(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) labels[i] = classify(images[i]);
  return labels;
}

ClassifierHandle builtin_toy_classifier(std::uint64_t seed, nn::Shape shape, int n_classes) {
  return std::make_shared<ToyClassifier>(seed, shape, n_classes);
}

// ---- remote ------------------------------------------------------------

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t k = 0; k < kAlphabet.size(); ++k) lookup[std::uint8_t(kAlphabet[k])] = static_cast<int>(k);
  require(text.size() % 4 == 0, "base64: length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = lookup[std::uint8_t(ch)];
      require(d >= 0 && pad == 0, "base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out += static_cast<char>((v >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(v & 0xFF);
  }
  return out;
}

std::string encode_classify_request(const std::vector<Image>& images, std::size_t begin, std::size_t end) {
  require(begin < end && end <= images.size(), "encode_classify_request: bad range");
  std::vector<std::uint8_t> raw;
  for (std::size_t i = begin; i < end; ++i) append_f32le(images[i], raw);
  const Image& first = images[begin];
  nlohmann::json body;
  body["shape"] = {end - begin, first.channels(), first.height(), first.width()};
  body["dtype"] = "f32le";
  body["data"] = base64_encode(std::string(raw.begin(), raw.end()));
  return body.dump();
}

std::vector<int> decode_classify_response(const std::string& body, std::size_t expected) {
  nlohmann::json parsed = nlohmann::json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("labels") || !parsed["labels"].is_array()) {
    throw ClassifierError(ClassifierErrc::MalformedBody, "response is not {\"labels\": [...]}");
  }
  std::vector<int> labels;
  for (const auto& v : parsed["labels"]) {
    if (!v.is_number_integer()) throw ClassifierError(ClassifierErrc::MalformedBody, "non-integer label");
    labels.push_back(v.get<int>());
  }
  if (labels.size() != expected) {
    throw ClassifierError(ClassifierErrc::ShapeMismatch, "expected " + std::to_string(expected) + " labels, got " +
                                                             std::to_string(labels.size()));
  }
  return labels;
}

RemoteClassifier::RemoteClassifier(RemoteOptions options) : options_(std::move(options)) {
  require(options_.batch_limit >= 1, "remote classifier: batch limit must be >= 1");
  require(options_.max_in_flight >= 1, "remote classifier: in-flight limit must be >= 1");
  require(options_.timeout_s > 0.0, "remote classifier: timeout must be positive");
  require(options_.input.size() > 0, "remote classifier: empty input shape");
  const std::string prefix = "http://";
  require(options_.base_url.rfind(prefix, 0) == 0, "remote classifier: only http:// URLs are supported, got '" +
                                                        options_.base_url + "'");
  std::string rest = options_.base_url.substr(prefix.size());
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    path_prefix_ = rest.substr(slash);
    rest = rest.substr(0, slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
  const auto colon = rest.rfind(':');
  host_ = rest.substr(0, colon);
  if (colon != std::string::npos) {
    try {
      port_ = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("remote classifier: bad port in '" + options_.base_url + "'");
    }
  }
  require(!host_.empty(), "remote classifier: missing host in '" + options_.base_url + "'");
}

std::vector<int> RemoteClassifier::post_chunk(const std::vector<Image>& images, std::size_t begin,
                                              std::size_t end) const {
  httplib::Client client(host_, port_);
  const auto seconds = static_cast<time_t>(options_.timeout_s);
  const auto micros = static_cast<time_t>((options_.timeout_s - static_cast<double>(seconds)) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  const auto res = client.Post(path_prefix_ + "/v1/classify", encode_classify_request(images, begin, end),
                               "application/json");
  if (!res) {
    throw ClassifierError(ClassifierErrc::Transport, options_.base_url + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ClassifierError(ClassifierErrc::HttpStatus, options_.base_url + " returned HTTP " +
                                                          std::to_string(res->status));
  }
  return decode_classify_response(res->body, end - begin);
}

std::vector<int> RemoteClassifier::classify_batch(const std::vector<Image>& images) const {
  check_batch(*this, images);
  if (images.empty()) return {};
  const std::size_t limit = static_cast<std::size_t>(options_.batch_limit);
  const std::size_t chunks = (images.size() + limit - 1) / limit;
  std::vector<std::vector<int>> parts(chunks);
  parallel_for(chunks, options_.max_in_flight, [&](std::size_t k) {
    parts[k] = post_chunk(images, k * limit, std::min(images.size(), (k + 1) * limit));
  });
  std::vector<int> labels;
  labels.reserve(images.size());
  for (const auto& part : parts) labels.insert(labels.end(), part.begin(), part.end());
  return labels;
}

ClassifierHandle remote_classifier(RemoteOptions options) {
  return std::make_shared<RemoteClassifier>(std::move(options));
}

// ---- cache -------------------------------------------------------------

CachedClassifier::CachedClassifier(ClassifierHandle inner) : inner_(std::move(inner)) {
  require(inner_ != nullptr, "cached: null classifier");
}

std::size_t CachedClassifier::size() const {
  std::shared_lock lock(mutex_);
  return labels_.size();
}

std::vector<int> CachedClassifier::classify_batch(const std::vector<Image>& images) const {
  check_batch(*this, images);
  std::vector<std::string> keys(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) keys[i] = image_key(images[i]);

  std::vector<int> labels(images.size(), -1);
  std::vector<bool> known(images.size(), false);
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (auto it = labels_.find(keys[i]); it != labels_.end()) {
        labels[i] = it->second;
        known[i] = true;
      }
    }
  }

  // Distinct misses in first-seen order.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<Image> misses;
  std::vector<std::string> miss_keys;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (known[i] || slot.count(keys[i])) continue;
    slot.emplace(keys[i], misses.size());
    misses.push_back(images[i]);
    miss_keys.push_back(keys[i]);
  }
  if (misses.empty()) return labels;

  const std::vector<int> fresh = inner_->classify_batch(misses);
  calls_.fetch_add(1);
  images_.fetch_add(static_cast<long>(misses.size()));
  if (fresh.size() != misses.size()) {
    throw ClassifierError(ClassifierErrc::ShapeMismatch, "wrapped classifier returned wrong label count");
  }
  {
    std::unique_lock lock(mutex_);
    for (std::size_t k = 0; k < misses.size(); ++k) labels_.emplace(miss_keys[k], fresh[k]);
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!known[i]) labels[i] = fresh[slot.at(keys[i])];
  }
  return labels;
}

std::shared_ptr<CachedClassifier> cached(ClassifierHandle inner) {
  return std::make_shared<CachedClassifier>(std::move(inner));
}

ClassifierHandle make_classifier(const std::string& spec, const RemoteOptions& remote_defaults) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "builtin") {
    std::uint64_t seed = kDefaultToySeed;
    if (!arg.empty()) {
      try {
        std::size_t used = 0;
        seed = std::stoull(arg, &used);
        require(used == arg.size(), "");
      } catch (const std::exception&) {
        throw ValidationError("classifier spec '" + spec + "': builtin seed must be a non-negative integer");
      }
    }
    return builtin_toy_classifier(seed, remote_defaults.input);
  }
  if (kind == "remote") {
    RemoteOptions options = remote_defaults;
    options.base_url = arg;
    if (const char* env = std::getenv(kClassifierUrlEnv); env != nullptr && *env != '\0') options.base_url = env;
    require(!options.base_url.empty(), "classifier spec '" + spec + "': remote needs a URL (or " +
                                           std::string(kClassifierUrlEnv) + ")");
    return remote_classifier(std::move(options));
  }
  throw ValidationError("classifier spec '" + spec + "': expected builtin:<seed> or remote:<url>");
}

}  // namespace turing::classify
