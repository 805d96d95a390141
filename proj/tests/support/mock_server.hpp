#ifndef TURING_TESTS_MOCK_SERVER_HPP
#define TURING_TESTS_MOCK_SERVER_HPP

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace mock {

// In-process server for POST /v1/classify. Each image's label comes from
// `labeler(pixels)`; by default the first pixel value, rounded.
class ClassifierServer {
 public:
  enum class Mode { Ok, ServerError, MalformedBody, WrongCount };
  using Labeler = std::function<int(const std::vector<float>& pixels)>;

  explicit ClassifierServer(Labeler labeler = {});
  ~ClassifierServer();
  ClassifierServer(const ClassifierServer&) = delete;
  ClassifierServer& operator=(const ClassifierServer&) = delete;

  std::string url() const;
  void set_mode(Mode mode) { mode_ = mode; }

  long batches() const { return batches_.load(); }
  long images() const { return images_.load(); }
  long largest_batch() const { return largest_.load(); }
  void reset_counts();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  Labeler labeler_;
  std::atomic<Mode> mode_{Mode::Ok};
  std::atomic<long> batches_{0};
  std::atomic<long> images_{0};
  std::atomic<long> largest_{0};
};

}  // namespace mock

#endif  // TURING_TESTS_MOCK_SERVER_HPP
