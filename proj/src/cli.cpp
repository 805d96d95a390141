#include "turing/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <ostream>

#include "turing/attack.hpp"
#include "turing/boyd_uap.hpp"
#include "turing/error.hpp"
#include "turing/fourier.hpp"
#include "turing/png_io.hpp"
#include "turing/sfa.hpp"
#include "turing/tensor_io.hpp"

namespace turing::cli {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
};

struct ClassifierOptions {
  std::string spec = "builtin:42";
  int input_size = 32;
  double timeout_s = 30.0;
  int batch_limit = 64;
  int max_in_flight = 4;
  Index n_images = 200;
};

// Options that describe where and how fast a run executes rather than what it
// computes; they go to the "runtime" object instead of "config".
bool is_runtime_option(const std::string& name) {
  return name == "help" || name == "config" || name == "threads" || name == "out-dir";
}

json config_of(const CLI::App& sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (is_runtime_option(name) || name.empty()) continue;
    std::vector<std::string> values = opt->count() > 0 ? opt->reduced_results() : std::vector<std::string>{};
    if (values.empty()) {
      const std::string d = opt->get_default_str();
      if (d.empty()) continue;
      values = {d};
    }
    if (opt->get_expected_max() > 1) {
      config[name] = values;
    } else {
      config[name] = values.front();
    }
  }
  return config;
}

void add_common(CLI::App& sub, Common& common) {
  sub.add_option("--config", "key=value file merged before the flags; flags win");
  sub.add_option("--seed", common.seed, "Master seed for all random sub-streams")->capture_default_str();
  sub.add_option("--threads", common.threads, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
  sub.add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
}

void add_classifier(CLI::App& sub, ClassifierOptions& c, bool with_spec = true) {
  if (with_spec) {
    sub.add_option("--classifier", c.spec, "builtin:<seed> or remote:<url>")->capture_default_str();
  }
  sub.add_option("--input-size", c.input_size, "Classifier input height = width")
      ->check(CLI::Range(8, 4096))
      ->capture_default_str();
  sub.add_option("--timeout", c.timeout_s, "Remote request timeout in seconds")->capture_default_str();
  sub.add_option("--batch-limit", c.batch_limit, "Remote batch limit")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--max-in-flight", c.max_in_flight, "Concurrent remote requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub.add_option("--n-images", c.n_images, "Synthetic images to evaluate on")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

nn::Shape input_shape(const ClassifierOptions& c) { return {3, c.input_size, c.input_size}; }

classify::ClassifierHandle make_handle(const std::string& spec, const ClassifierOptions& c) {
  classify::RemoteOptions remote;
  remote.timeout_s = c.timeout_s;
  remote.batch_limit = c.batch_limit;
  remote.max_in_flight = c.max_in_flight;
  remote.input = input_shape(c);
  return classify::make_classifier(spec, remote);
}

std::vector<Image> dataset(const ClassifierOptions& c, std::uint64_t seed) {
  return data::synthetic_images(c.n_images, input_shape(c), derive_seed(seed, "data"));
}

fs::path prepare_out_dir(const Common& common) {
  const fs::path dir(common.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + common.out_dir + "'");
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json runtime_of(const Common& common, Clock::time_point start) {
  return {{"threads", common.threads},
          {"out_dir", common.out_dir},
          {"wall_time_s", std::chrono::duration<double>(Clock::now() - start).count()}};
}

json flips_json(const std::vector<bool>& flips) {
  json out = json::array();
  for (bool f : flips) out.push_back(f ? 1 : 0);
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

json theta_json(const attack::AttackParams& theta) {
  const attack::AttackMeta& m = theta.meta;
  json j = {{"variant", attack::to_string(m.variant)},
            {"kernel_size", m.kernel_size},
            {"mix", ca::to_string(m.mix)},
            {"budget", m.budget},
            {"height", m.height},
            {"width", m.width},
            {"tiles", m.tiles},
            {"max_steps", m.max_steps},
            {"boundary", to_string(m.boundary)}};
  if (m.variant == attack::Variant::SimpleCA) {
    j["l1"] = theta.l1;
    j["l2"] = theta.l2;
  } else {
    j["kernel"] = vector_json(theta.kernel);
  }
  if (m.variant == attack::Variant::KernelOnly) {
    j["init_seed"] = m.init_seed;
  } else {
    j["init_tiles"] = vector_json(theta.init.tile_values.flat());
  }
  return j;
}

void save_pattern(const fs::path& dir, const std::string& stem, const Tensor3& t, bool sign_pattern, json& files) {
  save_tensor(t, dir / (stem + ".tpat"));
  const std::vector<std::uint8_t> png = sign_pattern ? pattern_to_png(t) : signed_tensor_to_png(t);
  write_file_bytes(dir / (stem + ".png"), png);
  files.push_back(stem + ".tpat");
  files.push_back(stem + ".png");
}

// ---- gen ---------------------------------------------------------------

struct GenOptions {
  std::string kernel = "ring";
  double r_in = 2.0;
  double r_out = 3.5;
  int L = 13;
  int l1 = 3;
  int l2 = 3;
  std::vector<double> elements;
  int size = 64;
  int channels = 3;
  std::string mix = "independent";
  std::string init = "random";
  int tiles = ca::kDefaultTiles;
  int steps = ca::kDefaultStepCap;
  std::string boundary = "periodic";
  std::string name = "pattern";
};

ca::KernelSpec gen_kernel(const GenOptions& o) {
  if (o.kernel == "ring") return ca::RingKernel{o.r_in, o.r_out};
  if (o.kernel == "rect") return ca::RectKernel{o.L, o.l1, o.l2};
  if (o.kernel == "free") {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(o.elements.size()))));
    require(side * side == static_cast<int>(o.elements.size()) && side > 0,
            "free kernel: --elements must hold L^2 values for an odd L");
    return ca::FreeKernel{side, Eigen::Map<const Eigen::VectorXd>(o.elements.data(), side * side)};
  }
  throw ValidationError("unknown kernel '" + o.kernel + "' (expected ring, rect or free)");
}

ca::MixStrategy gen_mix(const GenOptions& o, int size, std::uint64_t seed) {
  const ca::MixKind kind = ca::parse_mix_kind(o.mix);
  if (kind != ca::MixKind::Independent) require(o.channels == 3, "channel mixing needs --channels 3");
  Rng rng = make_rng(seed, "mix-taps");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_grid = [&] {
    Grid2D g(size, size);
    for (Index k = 0; k < g.size(); ++k) g.data()[k] = normal(rng);
    return g;
  };
  switch (kind) {
    case ca::MixKind::Independent: return ca::Independent{};
    case ca::MixKind::Summation: return ca::Summation{};
    case ca::MixKind::Filter3D: {
      ca::Filter3D f;
      for (auto& s : f.slices) s = random_grid();
      return f;
    }
    case ca::MixKind::Pointwise: {
      ca::Pointwise p;
      for (auto& k : p.kernels) k = random_grid();
      for (int k = 0; k < 9; ++k) p.mix(k / 3, k % 3) = normal(rng);
      return p;
    }
  }
  return ca::Independent{};
}

int cmd_gen(const CLI::App& sub, const GenOptions& o, const Common& common, std::ostream& out) {
  const auto start = Clock::now();
  require(o.channels == 1 || o.channels == 3, "--channels must be 1 or 3");
  const ca::KernelSpec spec = gen_kernel(o);
  ca::validate(spec);
  const int ksize = ca::kernel_size(spec);
  require(o.size >= ksize, "--size must be at least the kernel size " + std::to_string(ksize));
  const BoundaryMode mode = parse_boundary_mode(o.boundary);
  const ca::MixStrategy mix = gen_mix(o, ksize, common.seed);

  Rng rng = make_rng(common.seed, "init");
  ca::PatternState init;
  if (o.init == "random") {
    init = ca::random_state(o.channels, o.size, o.size, rng);
  } else if (o.init == "tiles") {
    require(o.tiles >= 1, "--tiles must be positive");
    const ca::InitMap map = ca::random_init_map(o.channels, o.tiles, std::max(1, o.size / o.tiles), rng);
    init = ca::expand_init_to(map, o.size, o.size);
  } else {
    throw ValidationError("unknown --init '" + o.init + "' (expected random or tiles)");
  }

  const ca::CaResult result = ca::run_ca(init, spec, mix, o.steps, mode);
  const fs::path dir = prepare_out_dir(common);
  json files = json::array();
  save_pattern(dir, o.name, result.state.cells, true, files);

  json report = {{"command", "gen"},
                 {"config", config_of(sub)},
                 {"seed", common.seed},
                 {"kernel", ca::describe(spec)},
                 {"kernel_size", ksize},
                 {"steps", result.state.step_count},
                 {"fixed_point", result.fixed_point},
                 {"cap_hit", result.cap_hit},
                 {"files", files}};
  try {
    report["wavelength"] = fourier::dominant_wavelength(result.state.cells);
  } catch (const NumericalError&) {
    report["wavelength"] = nullptr;
  }
  files.push_back(o.name + ".json");
  report["files"] = files;
  report["runtime"] = runtime_of(common, start);
  write_json(dir / (o.name + ".json"), report);
  out << "gen: " << ca::describe(spec) << ", " << result.state.step_count << " steps"
      << (result.fixed_point ? " (fixed point)" : " (step cap)") << " -> " << (dir / (o.name + ".tpat")).string()
      << "\n";
  return kOk;
}

// ---- attack ------------------------------------------------------------

struct AttackOptions {
  std::string variant = "simple";
  long queries = 250;
  int L = 13;
  std::string mix = "independent";
  double budget = 10.0;
  double sigma0 = 1.0;
  int lambda = 0;
  int tiles = ca::kDefaultTiles;
  int steps = ca::kDefaultStepCap;
  Index eval_images = 0;
};

attack::AttackConfig attack_config(const AttackOptions& o, const ClassifierOptions& c, const Common& common) {
  attack::AttackConfig config;
  config.meta.variant = attack::parse_variant(o.variant);
  config.meta.kernel_size = o.L;
  config.meta.mix = ca::parse_mix_kind(o.mix);
  config.meta.budget = o.budget;
  config.meta.height = c.input_size;
  config.meta.width = c.input_size;
  config.meta.tiles = o.tiles;
  config.meta.max_steps = o.steps;
  config.meta.init_seed = derive_seed(common.seed, "init");
  config.meta.validate();
  config.query_budget = o.queries;
  config.seed = common.seed;
  config.sigma0 = o.sigma0;
  if (o.lambda > 0) config.lambda = o.lambda;
  config.threads = common.threads;
  return config;
}

int cmd_attack(const CLI::App& sub, const AttackOptions& o, const ClassifierOptions& c, const Common& common,
               std::ostream& out) {
  const auto start = Clock::now();
  const attack::AttackConfig config = attack_config(o, c, common);
  const classify::ClassifierHandle classifier = make_handle(c.spec, c);
  const std::vector<Image> train = dataset(c, common.seed);
  const fs::path dir = prepare_out_dir(common);

  const attack::AttackResult result = attack::optimize_attack(classifier, train, config);
  const ca::CaResult ca_run = attack::render_pattern(result.best);

  json files = json::array();
  write_json(dir / "theta.json", theta_json(result.best));
  files.push_back("theta.json");
  save_pattern(dir, "perturbation", result.perturbation, false, files);

  std::string trace;
  for (const cma::TraceEntry& t : result.trace) {
    trace += json({{"generation", t.generation},
                   {"evaluations_used", t.evaluations_used},
                   {"best_f", t.best_f},
                   {"sigma", t.sigma},
                   {"mean_norm", t.mean_norm}})
                 .dump() +
             "\n";
  }
  write_text_file(dir / "trace.jsonl", trace);
  files.push_back("trace.jsonl");

  json report = {{"command", "attack"},
                 {"config", config_of(sub)},
                 {"seed", common.seed},
                 {"variant", attack::to_string(config.meta.variant)},
                 {"classifier", classifier->name()},
                 {"budget", config.meta.budget},
                 {"query_budget", config.query_budget},
                 {"queries_used", result.report.queries_used},
                 {"stop_reason", result.stop_reason},
                 {"fooling_rate", result.report.fooling_rate},
                 {"n_images", result.report.n_images},
                 {"flips", flips_json(result.report.flips)},
                 {"ca", {{"steps", ca_run.state.step_count}, {"fixed_point", ca_run.fixed_point}, {"cap_hit", ca_run.cap_hit}}}};
  if (o.eval_images > 0) {
    const std::vector<Image> held_out =
        data::synthetic_images(o.eval_images, input_shape(c), derive_seed(common.seed, "eval-data"));
    const attack::FoolingReport eval =
        attack::FoolingRateEvaluator(classifier, held_out, common.threads).evaluate(result.perturbation);
    report["eval"] = {{"n_images", eval.n_images}, {"fooling_rate", eval.fooling_rate}};
  }
  files.push_back("report.json");
  report["files"] = files;
  report["runtime"] = runtime_of(common, start);
  write_json(dir / "report.json", report);
  out << "attack: " << attack::to_string(config.meta.variant) << " FR " << result.report.fooling_rate << " after "
      << result.report.queries_used << "/" << config.query_budget << " queries -> " << dir.string() << "\n";
  return kOk;
}

// ---- eval --------------------------------------------------------------

struct EvalOptions {
  std::string perturbation;
  double scale_to = 0.0;
};

Perturbation load_perturbation(const std::string& path, double scale_to) {
  Tensor3 t = load_tensor(path);
  require(scale_to >= 0.0, "--scale-to must be non-negative");
  if (scale_to > 0.0) {
    require(t.max_abs() > 0.0, "--scale-to: perturbation '" + path + "' is all zeros");
    return fourier::scale_to_budget(t, scale_to);
  }
  return t;
}

int cmd_eval(const CLI::App& sub, const EvalOptions& o, const ClassifierOptions& c, const Common& common,
             std::ostream& out) {
  const auto start = Clock::now();
  const Perturbation eps = load_perturbation(o.perturbation, o.scale_to);
  const classify::ClassifierHandle classifier = make_handle(c.spec, c);
  const std::vector<Image> images = dataset(c, common.seed);
  const attack::FoolingReport r = attack::FoolingRateEvaluator(classifier, images, common.threads).evaluate(eps);
  const fs::path dir = prepare_out_dir(common);
  json report = {{"command", "eval"},
                 {"config", config_of(sub)},
                 {"seed", common.seed},
                 {"classifier", classifier->name()},
                 {"max_abs", eps.max_abs()},
                 {"fooling_rate", r.fooling_rate},
                 {"n_images", r.n_images},
                 {"flips", flips_json(r.flips)},
                 {"runtime", runtime_of(common, start)}};
  write_json(dir / "eval.json", report);
  out << "eval: FR " << r.fooling_rate << " on " << r.n_images << " images\n";
  return kOk;
}

// ---- transfer ----------------------------------------------------------

struct TransferOptions {
  std::vector<std::string> perturbations;
  std::vector<std::string> classifiers{"builtin:42", "builtin:7"};
  double scale_to = 0.0;
};

int cmd_transfer(const CLI::App& sub, const TransferOptions& o, const ClassifierOptions& c, const Common& common,
                 std::ostream& out) {
  const auto start = Clock::now();
  std::vector<std::pair<std::string, Perturbation>> eps;
  for (const std::string& p : o.perturbations) {
    eps.emplace_back(fs::path(p).stem().string(), load_perturbation(p, o.scale_to));
  }
  std::vector<classify::ClassifierHandle> classifiers;
  for (const std::string& spec : o.classifiers) classifiers.push_back(make_handle(spec, c));
  const std::vector<Image> images = dataset(c, common.seed);
  const attack::TransferTable table = attack::transfer_eval(eps, classifiers, images, common.threads);

  const fs::path dir = prepare_out_dir(common);
  std::string csv = "perturbation";
  for (const std::string& name : table.classifiers) csv += "," + name;
  csv += "\n";
  json rows = json::array();
  for (std::size_t r = 0; r < table.perturbations.size(); ++r) {
    csv += table.perturbations[r];
    json row = json::array();
    for (std::size_t k = 0; k < table.classifiers.size(); ++k) {
      const double fr = table.fooling_rates(static_cast<Index>(r), static_cast<Index>(k));
      csv += "," + format_double(fr);
      row.push_back(fr);
    }
    csv += "\n";
    rows.push_back(row);
  }
  write_text_file(dir / "transfer.csv", csv);
  write_json(dir / "transfer.json", {{"command", "transfer"},
                                     {"config", config_of(sub)},
                                     {"seed", common.seed},
                                     {"perturbations", table.perturbations},
                                     {"classifiers", table.classifiers},
                                     {"fooling_rates", rows},
                                     {"runtime", runtime_of(common, start)}});
  out << "transfer: " << table.perturbations.size() << " x " << table.classifiers.size() << " -> "
      << (dir / "transfer.csv").string() << "\n";
  return kOk;
}

// ---- fourier -----------------------------------------------------------

struct FourierOptions {
  std::string pattern;
  std::vector<std::string> rules{"max", "max-1", "0.9*max"};
  double budget = 10.0;
};

int cmd_fourier(const CLI::App& sub, const FourierOptions& o, const ClassifierOptions& c, const Common& common,
                std::ostream& out) {
  const auto start = Clock::now();
  const Tensor3 pattern = load_tensor(o.pattern);
  std::vector<fourier::ThresholdRule> rules;
  for (const std::string& r : o.rules) rules.push_back(fourier::ThresholdRule::parse(r));
  const classify::ClassifierHandle classifier = make_handle(c.spec, c);
  const attack::FoolingRateEvaluator evaluator(classifier, dataset(c, common.seed), common.threads);
  const fourier::SfaReport sfa = fourier::sfa_report(pattern, evaluator, rules, o.budget);

  const fs::path dir = prepare_out_dir(common);
  json rows = json::array();
  for (std::size_t k = 0; k < sfa.rows.size(); ++k) {
    const fourier::SfaRow& row = sfa.rows[k];
    json files = json::array();
    save_pattern(dir, "filtered_" + std::to_string(k), row.filtered, false, files);
    rows.push_back({{"rule", row.rule},
                    {"kept", row.kept},
                    {"kept_total", row.kept_total},
                    {"fr_before", row.fr_before},
                    {"fr_after", row.fr_after},
                    {"max_imag_residue", row.max_imag_residue},
                    {"files", files}});
  }
  write_json(dir / "sfa.json", {{"command", "fourier"},
                                {"config", config_of(sub)},
                                {"seed", common.seed},
                                {"classifier", classifier->name()},
                                {"budget", sfa.budget},
                                {"fr_before", sfa.fr_before},
                                {"rows", rows},
                                {"runtime", runtime_of(common, start)}});
  out << "fourier: " << sfa.rows.size() << " rules, FR before " << sfa.fr_before << "\n";
  for (const auto& row : sfa.rows) out << "  " << row.rule << ": kept " << row.kept_total << ", FR " << row.fr_after << "\n";
  return kOk;
}

// ---- boyd --------------------------------------------------------------

struct BoydOptions {
  std::vector<int> layers{1, 2, 3};
  Index batch = 16;
  int max_iters = 100;
  std::uint64_t net_seed = boyd::kBundledNetSeed;
  std::vector<Index> gram_batches{4, 256};
  Index mc_samples = 100000;
  std::vector<double> c_values{0.25, 0.5, 0.9};
  Index circulant_size = 16;
};

int cmd_boyd(const CLI::App& sub, const BoydOptions& o, const Common& common, std::ostream& out) {
  const auto start = Clock::now();
  require(o.batch >= 1, "--batch must be positive");
  const nn::ConvNet net = boyd::depth_diagnostic_net(o.net_seed);
  const std::vector<Eigen::VectorXd> batch =
      boyd::random_inputs(net.input_shape(), o.batch, derive_seed(common.seed, "boyd-batch"));
  const std::vector<boyd::LayerPattern> patterns =
      boyd::depth_feature_size(net, batch, o.layers, derive_seed(common.seed, "boyd"), o.max_iters);

  const fs::path dir = prepare_out_dir(common);
  json layers = json::array();
  for (const boyd::LayerPattern& p : patterns) {
    json files = json::array();
    save_pattern(dir, "boyd_layer" + std::to_string(p.layer), p.pattern, true, files);
    layers.push_back({{"layer", p.layer},
                      {"wavelength", p.wavelength},
                      {"iterations", p.iterations},
                      {"converged", p.converged},
                      {"activation_rate", p.activation_rate},
                      {"files", files}});
  }

  const nn::ConvNet gram_net = boyd::gram_diagnostic_net(o.net_seed);
  json conv = json::array();
  for (int layer = 1; layer <= gram_net.depth(); ++layer) {
    for (const Index b : o.gram_batches) {
      require(b >= 1, "--gram-batches entries must be positive");
      const auto inputs = boyd::random_inputs(gram_net.input_shape(), b, derive_seed(common.seed, "gram-batch"));
      const double score =
          boyd::convolutionality_score(boyd::batch_gram(gram_net, inputs, layer), gram_net.input_shape());
      conv.push_back({{"layer", layer}, {"batch", b}, {"score", score}});
    }
  }

  json theorem = json::array();
  const Eigen::MatrixXd b = boyd::symmetric_circulant({2.0, 1.0}, o.circulant_size);
  for (const double c : o.c_values) {
    const boyd::Theorem1Report r =
        boyd::theorem1_mc_check(b, {c, {}}, o.mc_samples, derive_seed(common.seed, "theorem1/" + format_double(c)));
    theorem.push_back({{"c", c},
                       {"samples", r.samples},
                       {"max_abs_deviation", r.max_abs_deviation},
                       {"bound", r.bound},
                       {"max_z_score", r.max_z_score},
                       {"z_threshold", r.z_threshold},
                       {"entries_tested", r.entries_tested},
                       {"within_bound", r.within_bound}});
  }

  write_json(dir / "boyd.json", {{"command", "boyd"},
                                 {"config", config_of(sub)},
                                 {"seed", common.seed},
                                 {"layers", layers},
                                 {"convolutionality", conv},
                                 {"theorem1", theorem},
                                 {"runtime", runtime_of(common, start)}});
  out << "boyd: wavelengths";
  for (const auto& p : patterns) out << " L" << p.layer << "=" << p.wavelength;
  out << "\n";
  return kOk;
}

// ---- sweep -------------------------------------------------------------

struct SweepOptions {
  std::vector<int> sizes{3, 7, 13};
  long queries = 100;
  int inits = attack::kSweepInitializations;
  std::string mix = "independent";
  double budget = 10.0;
  double sigma0 = 1.0;
};

int cmd_sweep(const CLI::App& sub, const SweepOptions& o, const ClassifierOptions& c, const Common& common,
              std::ostream& out) {
  const auto start = Clock::now();
  attack::AttackConfig base;
  base.meta.mix = ca::parse_mix_kind(o.mix);
  base.meta.budget = o.budget;
  base.meta.height = c.input_size;
  base.meta.width = c.input_size;
  base.query_budget = o.queries;
  base.seed = common.seed;
  base.sigma0 = o.sigma0;
  base.threads = common.threads;
  const classify::ClassifierHandle classifier = make_handle(c.spec, c);
  const std::vector<attack::SweepRow> rows =
      attack::sweep_filter_size(classifier, dataset(c, common.seed), o.sizes, base, o.inits);

  const fs::path dir = prepare_out_dir(common);
  std::string csv = "kernel_size,kernel_init_fr,kernel_only_min,kernel_only_mean,kernel_only_max,queries_used\n";
  json table = json::array();
  for (const attack::SweepRow& r : rows) {
    csv += std::to_string(r.kernel_size) + "," + format_double(r.kernel_init_fr) + "," +
           format_double(r.kernel_only_min) + "," + format_double(r.kernel_only_mean) + "," +
           format_double(r.kernel_only_max) + "," + std::to_string(r.queries_used) + "\n";
    table.push_back({{"kernel_size", r.kernel_size},
                     {"kernel_init_fr", r.kernel_init_fr},
                     {"kernel_only_min", r.kernel_only_min},
                     {"kernel_only_mean", r.kernel_only_mean},
                     {"kernel_only_max", r.kernel_only_max},
                     {"queries_used", r.queries_used}});
  }
  write_text_file(dir / "sweep.csv", csv);
  write_json(dir / "sweep.json", {{"command", "sweep"},
                                  {"config", config_of(sub)},
                                  {"seed", common.seed},
                                  {"classifier", classifier->name()},
                                  {"rows", table},
                                  {"runtime", runtime_of(common, start)}});
  out << "sweep: " << rows.size() << " sizes -> " << (dir / "sweep.csv").string() << "\n";
  return kOk;
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

bool names_flag(const std::string& arg, const std::string& flag) {
  return arg == flag || arg.rfind(flag + "=", 0) == 0;
}

// Removes --config FILE from args and appends every key of FILE whose flag is
// not given explicitly. Repeated keys become repeated flags.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), "--config needs a file name");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;

  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  const std::vector<std::string> explicit_args = args;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    require(!key.empty(), path + ":" + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    const bool given = std::any_of(explicit_args.begin(), explicit_args.end(),
                                   [&](const std::string& a) { return names_flag(a, flag); });
    if (given) continue;
    args.push_back(flag);
    args.push_back(value);
  }
  return args;
}

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args = merge_config(raw_args);
  CLI::App app{"Turing-pattern universal adversarial perturbations", "turing_uap"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Common cg, ca_, ce, ct, cf, cb, cs;

  ClassifierOptions copts;

  GenOptions gen;
  CLI::App* g = app.add_subcommand("gen", "Generate a Turing pattern from CA parameters");
  add_common(*g, cg);
  g->add_option("--kernel", gen.kernel, "ring | rect | free")->capture_default_str();
  g->add_option("--r-in", gen.r_in, "Ring inner radius")->capture_default_str();
  g->add_option("--r-out", gen.r_out, "Ring outer radius")->capture_default_str();
  g->add_option("--L", gen.L, "Rect kernel size")->capture_default_str();
  g->add_option("--l1", gen.l1, "Rect positive block height")->capture_default_str();
  g->add_option("--l2", gen.l2, "Rect positive block width")->capture_default_str();
  g->add_option("--elements", gen.elements, "Free kernel elements, row-major")->delimiter(',');
  g->add_option("--size", gen.size, "Grid height = width")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--channels", gen.channels, "1 or 3")->capture_default_str();
  g->add_option("--mix", gen.mix, "independent | summation | filter3d | pointwise")->capture_default_str();
  g->add_option("--init", gen.init, "random | tiles")->capture_default_str();
  g->add_option("--tiles", gen.tiles, "Tiles per side for --init tiles")->capture_default_str();
  g->add_option("--steps", gen.steps, "CA step cap")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--boundary", gen.boundary, "periodic | zero")->capture_default_str();
  g->add_option("--name", gen.name, "Output file stem")->capture_default_str();

  AttackOptions atk;
  CLI::App* a = app.add_subcommand("attack", "Optimize a CA perturbation against a classifier");
  add_common(*a, ca_);
  add_classifier(*a, copts);
  a->add_option("--variant", atk.variant, "simple | kernel-init | kernel-only")->capture_default_str();
  a->add_option("--queries", atk.queries, "Query budget (candidate evaluations)")->capture_default_str();
  a->add_option("--L", atk.L, "Kernel size")->capture_default_str();
  a->add_option("--mix", atk.mix, "Channel mixing for the kernel variants")->capture_default_str();
  a->add_option("--budget", atk.budget, "Max-norm of the perturbation")->capture_default_str();
  a->add_option("--sigma0", atk.sigma0, "Initial CMA-ES step size")->capture_default_str();
  a->add_option("--lambda", atk.lambda, "CMA-ES population (0: default)")->capture_default_str();
  a->add_option("--tiles", atk.tiles, "Init map tiles per side")->capture_default_str();
  a->add_option("--steps", atk.steps, "CA step cap")->capture_default_str();
  a->add_option("--eval-images", atk.eval_images, "Held-out images to report FR on (0: none)")->capture_default_str();

  EvalOptions ev;
  CLI::App* e = app.add_subcommand("eval", "Fooling rate of a stored perturbation");
  add_common(*e, ce);
  add_classifier(*e, copts);
  e->add_option("--perturbation", ev.perturbation, "TPAT file")->required();
  e->add_option("--scale-to", ev.scale_to, "Rescale to this max-norm first (0: as stored)")->capture_default_str();

  TransferOptions tr;
  CLI::App* t = app.add_subcommand("transfer", "Fooling rates of perturbations across classifiers");
  add_common(*t, ct);
  add_classifier(*t, copts, false);
  t->add_option("--perturbation", tr.perturbations, "TPAT files (repeatable)")->required();
  t->add_option("--classifier", tr.classifiers, "Classifier specs (repeatable)")->capture_default_str();
  t->add_option("--scale-to", tr.scale_to, "Rescale to this max-norm first (0: as stored)")->capture_default_str();

  FourierOptions fo;
  CLI::App* f = app.add_subcommand("fourier", "Single-Fourier-attack report of a stored pattern");
  add_common(*f, cf);
  add_classifier(*f, copts);
  f->add_option("--pattern", fo.pattern, "TPAT file")->required();
  f->add_option("--rules", fo.rules, "Threshold rules: max, max-1, 0.9*max, log-max-1")->capture_default_str();
  f->add_option("--budget", fo.budget, "Max-norm both versions are scaled to")->capture_default_str();

  BoydOptions bo;
  CLI::App* b = app.add_subcommand("boyd", "Boyd-iteration diagnostics on the bundled toy nets");
  add_common(*b, cb);
  b->get_option("--seed")->default_val(boyd::kBundledNetSeed);
  b->add_option("--layers", bo.layers, "Layers to attack")->delimiter(',')->capture_default_str();
  b->add_option("--batch", bo.batch, "Inputs in the batch Jacobian")->capture_default_str();
  b->add_option("--max-iters", bo.max_iters, "Boyd iteration cap")->capture_default_str();
  b->add_option("--net-seed", bo.net_seed, "Seed of the bundled networks")->capture_default_str();
  b->add_option("--gram-batches", bo.gram_batches, "Batch sizes for the Gram scores")->delimiter(',')->capture_default_str();
  b->add_option("--mc-samples", bo.mc_samples, "Monte-Carlo samples for the expectation check")->capture_default_str();
  b->add_option("--c", bo.c_values, "Activation probabilities")->delimiter(',')->capture_default_str();
  b->add_option("--circulant-size", bo.circulant_size, "Size of the circulant test matrix")->capture_default_str();

  SweepOptions sw;
  CLI::App* s = app.add_subcommand("sweep", "Fooling rate against kernel size");
  add_common(*s, cs);
  add_classifier(*s, copts);
  s->add_option("--sizes", sw.sizes, "Odd kernel sizes")->delimiter(',')->capture_default_str();
  s->add_option("--queries", sw.queries, "Query budget per optimization")->capture_default_str();
  s->add_option("--inits", sw.inits, "Random initializations for kernel-only")->capture_default_str();
  s->add_option("--mix", sw.mix, "Channel mixing")->capture_default_str();
  s->add_option("--budget", sw.budget, "Max-norm of the perturbation")->capture_default_str();
  s->add_option("--sigma0", sw.sigma0, "Initial CMA-ES step size")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  }

  if (*g) return cmd_gen(*g, gen, cg, out);
  if (*a) return cmd_attack(*a, atk, copts, ca_, out);
  if (*e) return cmd_eval(*e, ev, copts, ce, out);
  if (*t) return cmd_transfer(*t, tr, copts, ct, out);
  if (*f) return cmd_fourier(*f, fo, copts, cf, out);
  if (*b) return cmd_boyd(*b, bo, cb, out);
  if (*s) return cmd_sweep(*s, sw, copts, cs, out);
  err << "error: no subcommand\n";
  return kValidation;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  } catch (const ClassifierError& ex) {
    err << "classifier error: " << ex.what() << "\n";
    return kClassifier;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
}

}  // namespace turing::cli
