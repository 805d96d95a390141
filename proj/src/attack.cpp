#include "turing/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>

#include "turing/error.hpp"
#include "turing/parallel.hpp"
#include "turing/rng.hpp"

namespace turing::attack {

Variant parse_variant(const std::string& name) {
  if (name == "simple") return Variant::SimpleCA;
  if (name == "kernel-init") return Variant::KernelAndInit;
  if (name == "kernel-only") return Variant::KernelOnly;
  throw ValidationError("unknown attack variant '" + name + "' (expected simple, kernel-init or kernel-only)");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::SimpleCA: return "simple";
    case Variant::KernelAndInit: return "kernel-init";
    case Variant::KernelOnly: return "kernel-only";
  }
  return "?";
}

void AttackMeta::validate() const {
  require(kernel_size >= 1 && kernel_size % 2 == 1, "attack: kernel size L must be odd and positive");
  require(budget > 0.0 && std::isfinite(budget), "attack: budget must be positive");
  require(height >= kernel_size && width >= kernel_size, "attack: pattern must be at least L x L");
  require(tiles >= 1, "attack: tiles must be positive");
  require(max_steps >= 0, "attack: max steps must be non-negative");
  if (variant == Variant::SimpleCA) {
    require(kernel_size >= 3, "attack: simple variant needs L >= 3");
    require(mix == ca::MixKind::Independent, "attack: simple variant uses independent channels");
  }
}

Index AttackMeta::kernel_param_count() const {
  const Index l2 = static_cast<Index>(kernel_size) * kernel_size;
  switch (mix) {
    case ca::MixKind::Independent:
    case ca::MixKind::Summation: return l2;
    case ca::MixKind::Filter3D: return 3 * l2;
    case ca::MixKind::Pointwise: return 3 * l2 + 9;
  }
  return l2;
}

Index AttackMeta::dimension() const {
  switch (variant) {
    case Variant::SimpleCA: return 2 + tile_param_count();
    case Variant::KernelAndInit: return kernel_param_count() + tile_param_count();
    case Variant::KernelOnly: return kernel_param_count();
  }
  return 0;
}

namespace {

bool same_meta(const AttackMeta& a, const AttackMeta& b) {
  return a.variant == b.variant && a.kernel_size == b.kernel_size && a.mix == b.mix && a.budget == b.budget &&
         a.height == b.height && a.width == b.width && a.tiles == b.tiles && a.init_seed == b.init_seed &&
         a.max_steps == b.max_steps && a.boundary == b.boundary;
}

bool uses_init_map(Variant v) { return v != Variant::KernelOnly; }
bool uses_kernel(Variant v) { return v != Variant::SimpleCA; }

int decode_extent(double x, int L) {
  const double r = std::floor(x + 0.5);
  return static_cast<int>(std::clamp(r, 1.0, static_cast<double>(L)));
}

ca::InitMap tiles_from_logits(const Eigen::Ref<const Eigen::VectorXd>& logits, const AttackMeta& meta) {
  ca::InitMap map;
  map.tiles = meta.tiles;
  map.tile_size = std::max<int>(1, static_cast<int>(meta.height / meta.tiles));
  map.tile_values = Tensor3(3, meta.tiles, meta.tiles);
  for (Index k = 0; k < logits.size(); ++k) map.tile_values.flat()[k] = logits[k] >= 0.0 ? 1.0 : -1.0;
  return map;
}

Grid2D slice_grid(const Eigen::VectorXd& v, Index offset, int L) {
  Grid2D g(L, L);
  for (Index k = 0; k < static_cast<Index>(L) * L; ++k) g.data()[k] = v[offset + k];
  return g;
}

}  // namespace

bool operator==(const AttackParams& a, const AttackParams& b) {
  if (!same_meta(a.meta, b.meta)) return false;
  if (a.meta.variant == Variant::SimpleCA && (a.l1 != b.l1 || a.l2 != b.l2)) return false;
  if (uses_kernel(a.meta.variant) && a.kernel != b.kernel) return false;
  if (uses_init_map(a.meta.variant) &&
      (a.init.tiles != b.init.tiles || !(a.init.tile_values == b.init.tile_values))) {
    return false;
  }
  return true;
}

Eigen::VectorXd encode_params(const AttackParams& theta) {
  const AttackMeta& meta = theta.meta;
  meta.validate();
  Eigen::VectorXd x(meta.dimension());
  Index offset = 0;
  if (meta.variant == Variant::SimpleCA) {
    x[0] = theta.l1;
    x[1] = theta.l2;
    offset = 2;
  } else {
    require(theta.kernel.size() == meta.kernel_param_count(), "encode_params: kernel has wrong length");
    x.head(theta.kernel.size()) = theta.kernel;
    offset = theta.kernel.size();
  }
  if (uses_init_map(meta.variant)) {
    require(theta.init.tile_values.size() == meta.tile_param_count(), "encode_params: init map has wrong size");
    x.segment(offset, meta.tile_param_count()) = theta.init.tile_values.flat();
  }
  return x;
}

AttackParams decode_params(const Eigen::VectorXd& x, const AttackMeta& meta) {
  meta.validate();
  require(x.size() == meta.dimension(), "decode_params: expected " + std::to_string(meta.dimension()) +
                                            " values for variant " + to_string(meta.variant) + ", got " +
                                            std::to_string(x.size()));
  require(x.allFinite(), "decode_params: non-finite parameter");
  AttackParams theta;
  theta.meta = meta;
  Index offset = 0;
  if (meta.variant == Variant::SimpleCA) {
    const int L = meta.kernel_size;
    theta.l1 = decode_extent(x[0], L);
    theta.l2 = decode_extent(x[1], L);
    if (theta.l1 == L && theta.l2 == L) theta.l2 = L - 1;
    offset = 2;
  } else {
    theta.kernel = x.head(meta.kernel_param_count());
    offset = meta.kernel_param_count();
  }
  if (uses_init_map(meta.variant)) {
    theta.init = tiles_from_logits(x.segment(offset, meta.tile_param_count()), meta);
  }
  return theta;
}

AttackParams random_params(const AttackMeta& meta, Rng& rng) {
  meta.validate();
  AttackParams theta;
  theta.meta = meta;
  if (meta.variant == Variant::SimpleCA) {
    std::uniform_int_distribution<int> extent(1, meta.kernel_size);
    do {
      theta.l1 = extent(rng);
      theta.l2 = extent(rng);
    } while (theta.l1 == meta.kernel_size && theta.l2 == meta.kernel_size);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    theta.kernel.resize(meta.kernel_param_count());
    for (Index k = 0; k < theta.kernel.size(); ++k) theta.kernel[k] = normal(rng);
  }
  if (uses_init_map(meta.variant)) {
    Eigen::VectorXd logits(meta.tile_param_count());
    for (Index k = 0; k < logits.size(); ++k) logits[k] = random_sign(rng);
    theta.init = tiles_from_logits(logits, meta);
  }
  return theta;
}

ca::PatternState initial_state(const AttackParams& theta) {
  const AttackMeta& meta = theta.meta;
  if (uses_init_map(meta.variant)) return ca::expand_init_to(theta.init, meta.height, meta.width);
  Rng rng = make_rng(meta.init_seed, "init");
  return ca::random_state(3, meta.height, meta.width, rng);
}

ca::KernelSpec kernel_spec(const AttackParams& theta) {
  const AttackMeta& meta = theta.meta;
  if (meta.variant == Variant::SimpleCA) return ca::RectKernel{meta.kernel_size, theta.l1, theta.l2};
  const Index l2 = static_cast<Index>(meta.kernel_size) * meta.kernel_size;
  if (meta.mix == ca::MixKind::Independent || meta.mix == ca::MixKind::Summation) {
    return ca::FreeKernel{meta.kernel_size, theta.kernel.head(l2)};
  }
  // Filter3D and Pointwise carry their own taps; the shared kernel is unused.
  return ca::FreeKernel{meta.kernel_size, Eigen::VectorXd::Zero(l2)};
}

ca::MixStrategy mix_strategy(const AttackParams& theta) {
  const AttackMeta& meta = theta.meta;
  const int L = meta.kernel_size;
  const Index l2 = static_cast<Index>(L) * L;
  switch (meta.mix) {
    case ca::MixKind::Independent: return ca::Independent{};
    case ca::MixKind::Summation: return ca::Summation{};
    case ca::MixKind::Filter3D: {
      ca::Filter3D f;
      for (int d = 0; d < 3; ++d) f.slices[d] = slice_grid(theta.kernel, d * l2, L);
      return f;
    }
    case ca::MixKind::Pointwise: {
      ca::Pointwise p;
      for (int c = 0; c < 3; ++c) p.kernels[c] = slice_grid(theta.kernel, c * l2, L);
      for (int k = 0; k < 9; ++k) p.mix(k / 3, k % 3) = theta.kernel[3 * l2 + k];
      return p;
    }
  }
  return ca::Independent{};
}

ca::CaResult render_pattern(const AttackParams& theta) {
  theta.meta.validate();
  return ca::run_ca(initial_state(theta), kernel_spec(theta), mix_strategy(theta), theta.meta.max_steps,
                    theta.meta.boundary);
}

Perturbation render_perturbation(const AttackParams& theta) {
  Perturbation eps = render_pattern(theta).state.cells;
  eps.flat() *= theta.meta.budget;
  return eps;
}

// ---- fooling rate ------------------------------------------------------

namespace {

std::vector<int> classify_parallel(const classify::Classifier& classifier, const std::vector<Image>& images,
                                   int threads) {
  const std::size_t n = images.size();
  const std::size_t parts = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  std::vector<std::vector<int>> chunks(parts);
  parallel_for(parts, threads, [&](std::size_t k) {
    const std::size_t begin = n * k / parts;
    const std::size_t end = n * (k + 1) / parts;
    chunks[k] = classifier.classify_batch(std::vector<Image>(images.begin() + begin, images.begin() + end));
  });
  std::vector<int> labels;
  labels.reserve(n);
  for (const auto& c : chunks) labels.insert(labels.end(), c.begin(), c.end());
  if (labels.size() != n) throw ClassifierError(ClassifierErrc::ShapeMismatch, "classifier returned wrong label count");
  return labels;
}

}  // namespace

FoolingRateEvaluator::FoolingRateEvaluator(classify::ClassifierHandle classifier, std::vector<Image> images,
                                           int threads)
    : classifier_(std::move(classifier)), images_(std::move(images)), threads_(std::max(threads, 1)) {
  require(classifier_ != nullptr, "fooling_rate: null classifier");
  require(!images_.empty(), "fooling_rate: image set is empty");
  for (const Image& im : images_) {
    require(im.same_shape(images_.front()), "fooling_rate: images differ in shape");
  }
  clean_ = classify_parallel(*classifier_, images_, threads_);
}

FoolingReport FoolingRateEvaluator::evaluate(const Perturbation& eps) const {
  require(eps.same_shape(images_.front()), "fooling_rate: perturbation shape " + eps.shape_string() +
                                               " does not match images " + images_.front().shape_string());
  require(eps.all_finite(), "fooling_rate: perturbation is not finite");
  const auto start = std::chrono::steady_clock::now();
  const double bound = std::max(eps.max_abs(), 1.0);
  std::vector<Image> perturbed;
  perturbed.reserve(images_.size());
  for (const Image& im : images_) perturbed.push_back(apply_perturbation(im, eps, bound, PatternScaling::Prescaled));
  const std::vector<int> labels = classify_parallel(*classifier_, perturbed, threads_);

  FoolingReport report;
  report.n_images = static_cast<Index>(images_.size());
  report.flips.resize(images_.size());
  Index flipped = 0;
  for (std::size_t i = 0; i < images_.size(); ++i) {
    report.flips[i] = labels[i] != clean_[i];
    flipped += report.flips[i] ? 1 : 0;
  }
  report.fooling_rate = static_cast<double>(flipped) / static_cast<double>(report.n_images);
  report.queries_used = 1;
  report.budget = eps.max_abs();
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

FoolingReport fooling_rate(const classify::ClassifierHandle& classifier, const std::vector<Image>& images,
                           const Perturbation& eps) {
  return FoolingRateEvaluator(classifier, images).evaluate(eps);
}

// ---- optimization ------------------------------------------------------

AttackResult optimize_attack(const classify::ClassifierHandle& classifier, const std::vector<Image>& train,
                             const AttackConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const AttackMeta& meta = config.meta;
  meta.validate();
  const FoolingRateEvaluator evaluator(classifier, train);

  Rng x0_rng = make_rng(config.seed, "x0");
  const Eigen::VectorXd x0 = encode_params(random_params(meta, x0_rng));

  // Report of every evaluated candidate, keyed by its exact bytes, so the
  // winner's report needs no extra query.
  std::mutex mutex;
  std::map<std::string, FoolingReport> reports;
  const cma::Objective objective = [&](const Eigen::VectorXd& x) {
    FoolingReport r = evaluator.evaluate(render_perturbation(decode_params(x, meta)));
    const double value = -r.fooling_rate;
    const std::string key(reinterpret_cast<const char*>(x.data()), sizeof(double) * static_cast<std::size_t>(x.size()));
    std::lock_guard lock(mutex);
    reports.emplace(key, std::move(r));
    return value;
  };

  cma::CmaOptions options;
  options.lambda = config.lambda;
  cma::EvalBudget budget{config.query_budget, 0};
  const cma::OptimizeResult opt =
      cma::cma_optimize(objective, x0, config.sigma0, budget, derive_seed(config.seed, "cma"), options, config.threads);

  AttackResult result;
  result.best = decode_params(opt.best_x, meta);
  result.perturbation = render_perturbation(result.best);
  result.trace = opt.trace;
  result.stop_reason = opt.stop_reason;
  const std::string key(reinterpret_cast<const char*>(opt.best_x.data()),
                        sizeof(double) * static_cast<std::size_t>(opt.best_x.size()));
  result.report = reports.at(key);
  result.report.queries_used = budget.evaluations_used;
  result.report.variant = to_string(meta.variant);
  result.report.seed = config.seed;
  result.report.budget = meta.budget;
  result.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<SweepRow> sweep_filter_size(const classify::ClassifierHandle& classifier,
                                        const std::vector<Image>& images, const std::vector<int>& sizes,
                                        const AttackConfig& base, int initializations) {
  require(!sizes.empty(), "sweep: no kernel sizes");
  require(initializations >= 1, "sweep: need at least one initialization");
  for (int L : sizes) require(L >= 3 && L % 2 == 1, "sweep: sizes must be odd and >= 3, got " + std::to_string(L));

  std::vector<SweepRow> rows;
  for (int L : sizes) {
    SweepRow row;
    row.kernel_size = L;
    const std::string tag = "L" + std::to_string(L);

    AttackConfig ki = base;
    ki.meta.variant = Variant::KernelAndInit;
    ki.meta.kernel_size = L;
    ki.seed = derive_seed(base.seed, tag + "/kernel-init");
    const AttackResult kr = optimize_attack(classifier, images, ki);
    row.kernel_init_fr = kr.report.fooling_rate;
    row.queries_used += kr.report.queries_used;

    std::vector<double> frs;
    for (int k = 0; k < initializations; ++k) {
      AttackConfig ko = base;
      ko.meta.variant = Variant::KernelOnly;
      ko.meta.kernel_size = L;
      ko.meta.init_seed = derive_seed(base.seed, tag + "/init/" + std::to_string(k));
      ko.seed = derive_seed(base.seed, tag + "/kernel-only/" + std::to_string(k));
      const AttackResult r = optimize_attack(classifier, images, ko);
      frs.push_back(r.report.fooling_rate);
      row.queries_used += r.report.queries_used;
    }
    row.kernel_only_min = *std::min_element(frs.begin(), frs.end());
    row.kernel_only_max = *std::max_element(frs.begin(), frs.end());
    double sum = 0;
    for (double f : frs) sum += f;
    row.kernel_only_mean = std::clamp(sum / static_cast<double>(frs.size()), row.kernel_only_min, row.kernel_only_max);
    rows.push_back(row);
  }
  return rows;
}

TransferTable transfer_eval(const std::vector<std::pair<std::string, Perturbation>>& perturbations,
                            const std::vector<classify::ClassifierHandle>& classifiers,
                            const std::vector<Image>& images, int threads) {
  require(!classifiers.empty(), "transfer: need at least one classifier");
  require(!perturbations.empty(), "transfer: need at least one perturbation");
  TransferTable table;
  table.fooling_rates.resize(static_cast<Index>(perturbations.size()), static_cast<Index>(classifiers.size()));
  for (const auto& [name, eps] : perturbations) table.perturbations.push_back(name);
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    table.classifiers.push_back(classifiers[c]->name());
    const FoolingRateEvaluator evaluator(classifiers[c], images, threads);
    for (std::size_t r = 0; r < perturbations.size(); ++r) {
      table.fooling_rates(static_cast<Index>(r), static_cast<Index>(c)) =
          evaluator.evaluate(perturbations[r].second).fooling_rate;
    }
  }
  return table;
}

}  // namespace turing::attack
