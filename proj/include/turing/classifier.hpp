#ifndef TURING_CLASSIFIER_HPP
#define TURING_CLASSIFIER_HPP

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "turing/conv_net.hpp"
#include "turing/core_tensors.hpp"

namespace turing::classify {

// Black-box argmax classifier over 0..255 images. Implementations are
// immutable after construction and classify_batch is reentrant.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<int> classify_batch(const std::vector<Image>& images) const = 0;
  virtual nn::Shape input_shape() const = 0;
  virtual std::string name() const = 0;
};

using ClassifierHandle = std::shared_ptr<const Classifier>;

// Throws ValidationError unless every image has the classifier's input shape.
void check_batch(const Classifier& classifier, const std::vector<Image>& images);

inline constexpr std::uint64_t kDefaultToySeed = 42;

// 3 conv layers (3x3, stride 2, ReLU), global average pooling and a linear
// readout. Pixels are rounded to float32 and mapped to (x - 127.5) / 64
// before the forward pass, so labels depend only on the wire bytes. Pooled
// features are standardized with statistics of a seeded calibration set, so
// the random readout spreads labels over the classes.
class ToyClassifier final : public Classifier {
 public:
  ToyClassifier(std::uint64_t seed, nn::Shape shape, int n_classes);
  std::vector<int> classify_batch(const std::vector<Image>& images) const override;
  nn::Shape input_shape() const override { return net_.input_shape(); }
  std::string name() const override;
  int classify(const Image& image) const;
  Eigen::VectorXd logits(const Image& image) const;

 private:
  Eigen::VectorXd pooled(const Image& image) const;

  std::uint64_t seed_;
  nn::ConvNet net_;
  Eigen::MatrixXd readout_;
  Eigen::VectorXd feature_mean_;
  Eigen::VectorXd feature_scale_;
};

ClassifierHandle builtin_toy_classifier(std::uint64_t seed, nn::Shape shape = {3, 32, 32}, int n_classes = 10);

struct RemoteOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  double timeout_s = 30.0;
  int batch_limit = 64;
  int max_in_flight = 4;
  nn::Shape input{3, 32, 32};
};

// Client of POST {base_url}/v1/classify. Batches larger than batch_limit are
// split into consecutive chunks, at most max_in_flight of them outstanding.
class RemoteClassifier final : public Classifier {
 public:
  explicit RemoteClassifier(RemoteOptions options);
  std::vector<int> classify_batch(const std::vector<Image>& images) const override;
  nn::Shape input_shape() const override { return options_.input; }
  std::string name() const override { return "remote:" + options_.base_url; }
  const RemoteOptions& options() const noexcept { return options_; }

 private:
  std::vector<int> post_chunk(const std::vector<Image>& images, std::size_t begin, std::size_t end) const;

  RemoteOptions options_;
  std::string host_;
  int port_ = 80;
  std::string path_prefix_;
};

ClassifierHandle remote_classifier(RemoteOptions options);

// Request body for a chunk of images; exposed for the protocol tests.
std::string encode_classify_request(const std::vector<Image>& images, std::size_t begin, std::size_t end);
// Labels of a response body; ClassifierError(MalformedBody/ShapeMismatch) on bad input.
std::vector<int> decode_classify_response(const std::string& body, std::size_t expected);

// Label cache keyed by the exact float32 bytes of each image.
class CachedClassifier final : public Classifier {
 public:
  explicit CachedClassifier(ClassifierHandle inner);
  std::vector<int> classify_batch(const std::vector<Image>& images) const override;
  nn::Shape input_shape() const override { return inner_->input_shape(); }
  std::string name() const override { return inner_->name(); }

  // classify_batch calls forwarded to the wrapped classifier, and the images in them.
  long underlying_calls() const noexcept { return calls_.load(); }
  long underlying_images() const noexcept { return images_.load(); }
  std::size_t size() const;

 private:
  ClassifierHandle inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, int> labels_;
  mutable std::atomic<long> calls_{0};
  mutable std::atomic<long> images_{0};
};

std::shared_ptr<CachedClassifier> cached(ClassifierHandle inner);

inline constexpr const char* kClassifierUrlEnv = "TURING_CLASSIFIER_URL";

// "builtin:<seed>" or "remote:<url>". A remote spec takes its URL from
// TURING_CLASSIFIER_URL when that variable is set.
ClassifierHandle make_classifier(const std::string& spec, const RemoteOptions& remote_defaults = {});

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace turing::classify

#endif  // TURING_CLASSIFIER_HPP
