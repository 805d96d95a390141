#ifndef TURING_ATTACK_HPP
#define TURING_ATTACK_HPP

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turing/classifier.hpp"
#include "turing/cma_es.hpp"
#include "turing/core_tensors.hpp"
#include "turing/dataset.hpp"
#include "turing/turing_ca.hpp"

namespace turing::attack {

enum class Variant { SimpleCA, KernelAndInit, KernelOnly };

Variant parse_variant(const std::string& name);  // simple | kernel-init | kernel-only
const char* to_string(Variant v);

// Everything about a parametrization except the optimized values.
struct AttackMeta {
  Variant variant = Variant::SimpleCA;
  int kernel_size = 13;  // L
  ca::MixKind mix = ca::MixKind::Independent;
  double budget = 10.0;  // ||eps||_inf
  Index height = 32;
  Index width = 32;
  int tiles = ca::kDefaultTiles;
  std::uint64_t init_seed = 0;  // KernelOnly
  int max_steps = ca::kDefaultStepCap;
  BoundaryMode boundary = BoundaryMode::Periodic;

  void validate() const;
  // Kernel reals: L^2 (independent, summation), 3L^2 (filter3d), 3L^2 + 9 (pointwise).
  Index kernel_param_count() const;
  Index tile_param_count() const { return 3 * static_cast<Index>(tiles) * tiles; }
  Index dimension() const;
};

struct AttackParams {
  AttackMeta meta;
  int l1 = 1;  // SimpleCA
  int l2 = 1;
  Eigen::VectorXd kernel;  // KernelAndInit, KernelOnly
  ca::InitMap init;        // SimpleCA, KernelAndInit

  friend bool operator==(const AttackParams& a, const AttackParams& b);
};

// Layout: SimpleCA [l1, l2, tiles...]; KernelAndInit [kernel..., tiles...];
// KernelOnly [kernel...]. Tiles are stored as logits +/-1.
Eigen::VectorXd encode_params(const AttackParams& theta);
// l1, l2 round half up and clamp to [1, L]; l1 = l2 = L lowers l2 to L - 1.
// Tile logits >= 0 decode to +1.
AttackParams decode_params(const Eigen::VectorXd& x, const AttackMeta& meta);

AttackParams random_params(const AttackMeta& meta, Rng& rng);

// Initial state, kernel spec and mixing strategy the parameters describe.
ca::PatternState initial_state(const AttackParams& theta);
ca::KernelSpec kernel_spec(const AttackParams& theta);
ca::MixStrategy mix_strategy(const AttackParams& theta);

ca::CaResult render_pattern(const AttackParams& theta);
// budget x the CA's +/-1 pattern.
Perturbation render_perturbation(const AttackParams& theta);

struct FoolingReport {
  double fooling_rate = 0;
  Index n_images = 0;
  std::vector<bool> flips;
  long queries_used = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double budget = 0;
  double wall_time_s = 0;
};

// Holds the clean labels of a fixed image set, so every evaluate() costs one
// pass over the perturbed images only.
class FoolingRateEvaluator {
 public:
  FoolingRateEvaluator(classify::ClassifierHandle classifier, std::vector<Image> images, int threads = 1);

  // Perturbed images are clip(x + eps, 0, 255).
  FoolingReport evaluate(const Perturbation& eps) const;
  const std::vector<int>& clean_labels() const noexcept { return clean_; }
  const std::vector<Image>& images() const noexcept { return images_; }
  const classify::Classifier& classifier() const noexcept { return *classifier_; }

 private:
  classify::ClassifierHandle classifier_;
  std::vector<Image> images_;
  std::vector<int> clean_;
  int threads_;
};

FoolingReport fooling_rate(const classify::ClassifierHandle& classifier, const std::vector<Image>& images,
                           const Perturbation& eps);

struct AttackConfig {
  AttackMeta meta;
  long query_budget = 250;
  std::uint64_t seed = 0;
  double sigma0 = 1.0;
  std::optional<int> lambda;
  int threads = 1;
};

struct AttackResult {
  AttackParams best;
  Perturbation perturbation;
  FoolingReport report;  // on the training images
  std::vector<cma::TraceEntry> trace;
  std::string stop_reason;
};

// CMA-ES on -FR(render(decode(x))). Each candidate evaluation is one query.
AttackResult optimize_attack(const classify::ClassifierHandle& classifier, const std::vector<Image>& train,
                             const AttackConfig& config);

struct SweepRow {
  int kernel_size = 0;
  double kernel_init_fr = 0;
  double kernel_only_min = 0;
  double kernel_only_mean = 0;
  double kernel_only_max = 0;
  long queries_used = 0;
};

inline constexpr int kSweepInitializations = 10;

// Per size: one KernelAndInit optimization, and `initializations` KernelOnly
// optimizations with different random initial states.
std::vector<SweepRow> sweep_filter_size(const classify::ClassifierHandle& classifier,
                                        const std::vector<Image>& images, const std::vector<int>& sizes,
                                        const AttackConfig& base, int initializations = kSweepInitializations);

struct TransferTable {
  std::vector<std::string> perturbations;
  std::vector<std::string> classifiers;
  Eigen::MatrixXd fooling_rates;  // rows: perturbations, cols: classifiers
};

TransferTable transfer_eval(const std::vector<std::pair<std::string, Perturbation>>& perturbations,
                            const std::vector<classify::ClassifierHandle>& classifiers,
                            const std::vector<Image>& images, int threads = 1);

}  // namespace turing::attack

#endif  // TURING_ATTACK_HPP
