#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "golden.hpp"
#include "oracles.hpp"
#include "turing/attack.hpp"
#include "turing/cli.hpp"

using namespace turing;
using namespace turing::attack;

namespace {

class ConstantClassifier final : public classify::Classifier {
 public:
  std::vector<int> classify_batch(const std::vector<Image>& images) const override {
    return std::vector<int>(images.size(), 3);
  }
  nn::Shape input_shape() const override { return {3, 32, 32}; }
  std::string name() const override { return "constant"; }
};

// Label 1 when the first pixel is at least 128.
class ThresholdClassifier final : public classify::Classifier {
 public:
  std::vector<int> classify_batch(const std::vector<Image>& images) const override {
    std::vector<int> out;
    for (const auto& im : images) out.push_back(im(0, 0, 0) >= 128.0 ? 1 : 0);
    return out;
  }
  nn::Shape input_shape() const override { return {1, 2, 2}; }
  std::string name() const override { return "threshold"; }
};

const std::vector<ca::MixKind> kMixes{ca::MixKind::Independent, ca::MixKind::Summation, ca::MixKind::Filter3D,
                                      ca::MixKind::Pointwise};

std::vector<Image> train_images(Index n, std::uint64_t seed = 1) { return data::synthetic_images(n, {3, 32, 32}, seed); }

}  // namespace

TEST_CASE("parameter counts") {
  AttackMeta simple;
  CHECK(simple.dimension() == 149);
  CHECK(simple.tile_param_count() == 147);
  AttackMeta ki;
  ki.variant = Variant::KernelAndInit;
  CHECK(ki.dimension() == 169 + 147);
  ki.mix = ca::MixKind::Filter3D;
  CHECK(ki.kernel_param_count() == 3 * 169);
  ki.mix = ca::MixKind::Pointwise;
  CHECK(ki.kernel_param_count() == 3 * 169 + 9);
  AttackMeta ko;
  ko.variant = Variant::KernelOnly;
  ko.kernel_size = 7;
  CHECK(ko.dimension() == 49);
  for (auto v : {Variant::SimpleCA, Variant::KernelAndInit, Variant::KernelOnly}) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("random"), ValidationError);
}

TEST_CASE("decode conventions") {
  AttackMeta meta;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(meta.dimension());
  x[0] = 2.5;
  x[1] = 13.7;
  x[2] = -0.0;
  x[3] = -1e-9;
  AttackParams theta = decode_params(x, meta);
  CHECK(theta.l1 == 3);
  CHECK(theta.l2 == 13);
  CHECK(theta.init.tile_values.flat()[0] == 1.0);
  CHECK(theta.init.tile_values.flat()[1] == -1.0);
  CHECK(theta.init.tile_values.flat()[2] == 1.0);

  x[0] = 20;
  x[1] = 13;
  theta = decode_params(x, meta);
  CHECK(theta.l1 == 13);
  CHECK(theta.l2 == 12);
  x[0] = -4;
  CHECK(decode_params(x, meta).l1 == 1);
  CHECK_THROWS_AS(decode_params(Eigen::VectorXd::Zero(10), meta), ValidationError);
}

TEST_CASE("encode and decode round trip") {
  Rng rng(3);
  for (auto v : {Variant::SimpleCA, Variant::KernelAndInit, Variant::KernelOnly}) {
    for (auto mix : kMixes) {
      if (v == Variant::SimpleCA && mix != ca::MixKind::Independent) continue;
      AttackMeta meta;
      meta.variant = v;
      meta.mix = mix;
      meta.kernel_size = 7;
      for (int k = 0; k < 5; ++k) {
        const AttackParams theta = random_params(meta, rng);
        CHECK(decode_params(encode_params(theta), meta) == theta);
        CHECK(encode_params(theta).size() == meta.dimension());
      }
    }
  }
}

TEST_CASE("rendered perturbations are deterministic sign patterns at the budget") {
  Rng rng(4);
  for (auto v : {Variant::SimpleCA, Variant::KernelAndInit, Variant::KernelOnly}) {
    for (auto mix : kMixes) {
      if (v == Variant::SimpleCA && mix != ca::MixKind::Independent) continue;
      AttackMeta meta;
      meta.variant = v;
      meta.mix = mix;
      meta.kernel_size = 5;
      meta.init_seed = 9;
      const AttackParams theta = random_params(meta, rng);
      const Perturbation eps = render_perturbation(theta);
      CHECK(eps.channels() == 3);
      CHECK(eps.height() == 32);
      CHECK((eps.flat().array().abs() == 10.0).all());
      CHECK(eps.max_abs() == 10.0);
      CHECK(render_perturbation(theta) == eps);
    }
  }
}

TEST_CASE("simple variant equals the manual pipeline") {
  AttackMeta meta;
  Rng rng(5);
  AttackParams theta = random_params(meta, rng);
  theta.l1 = 3;
  theta.l2 = 3;
  const ca::PatternState init = ca::expand_init_to(theta.init, 32, 32);
  const ca::CaResult run = ca::run_ca(init, ca::RectKernel{13, 3, 3}, ca::Independent{}, 64);
  Tensor3 expected = run.state.cells;
  expected.flat() *= 10.0;
  CHECK(render_perturbation(theta) == expected);
}

TEST_CASE("kernel-only variant starts from the seeded random state") {
  AttackMeta meta;
  meta.variant = Variant::KernelOnly;
  meta.kernel_size = 5;
  meta.init_seed = 77;
  Rng rng(6);
  const AttackParams theta = random_params(meta, rng);
  Rng init_rng = make_rng(77, "init");
  CHECK(initial_state(theta).cells == ca::random_state(3, 32, 32, init_rng).cells);
}

TEST_CASE("fooling rate edge cases") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  const auto images = train_images(30);
  CHECK(fooling_rate(toy, images, Perturbation(3, 32, 32)).fooling_rate == 0.0);
  Rng rng(7);
  const Perturbation eps = render_perturbation(random_params(AttackMeta{}, rng));
  CHECK(fooling_rate(std::make_shared<ConstantClassifier>(), images, eps).fooling_rate == 0.0);

  const auto thr = std::make_shared<ThresholdClassifier>();
  std::vector<Image> four;
  for (double v : {120.0, 125.0, 127.0, 10.0}) four.push_back(Image(1, 2, 2, v));
  const FoolingReport r = fooling_rate(thr, four, Perturbation(1, 2, 2, 10.0));
  CHECK(r.flips == std::vector<bool>{true, true, true, false});
  CHECK(r.fooling_rate == 0.75);
  CHECK(r.n_images == 4);
  CHECK_THROWS_AS(fooling_rate(thr, four, Perturbation(1, 3, 3)), ValidationError);
  CHECK_THROWS_AS(fooling_rate(thr, {}, Perturbation(1, 2, 2)), ValidationError);
}

TEST_CASE("fooling rate matches the brute-force oracle and ignores order") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto images = train_images(25, 100 + trial);
    AttackMeta meta;
    meta.budget = 4.0 + 3.0 * trial;
    const Perturbation eps = render_perturbation(random_params(meta, rng));
    std::vector<bool> flips;
    const double expected = oracle::fooling_rate(*toy, images, eps, &flips);
    const FoolingReport r = fooling_rate(toy, images, eps);
    CHECK(r.fooling_rate == expected);
    CHECK(r.flips == flips);
    CHECK(r.fooling_rate * 25 == std::round(r.fooling_rate * 25));

    std::reverse(images.begin(), images.end());
    std::rotate(images.begin(), images.begin() + trial, images.end());
    CHECK(fooling_rate(toy, images, eps).fooling_rate == expected);
  }
}

TEST_CASE("optimization respects the budget and is deterministic") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  const auto images = train_images(40);
  AttackConfig config;
  config.query_budget = 45;
  config.seed = 5;
  const AttackResult a = optimize_attack(toy, images, config);
  CHECK(a.report.queries_used <= 45);
  CHECK(a.report.queries_used == a.trace.back().evaluations_used);
  CHECK(a.report.variant == "simple");
  CHECK(a.report.fooling_rate == fooling_rate(toy, images, a.perturbation).fooling_rate);
  CHECK((a.perturbation.flat().array().abs() == 10.0).all());

  config.threads = 3;
  const AttackResult b = optimize_attack(toy, images, config);
  CHECK(b.best == a.best);
  CHECK(b.perturbation == a.perturbation);
  CHECK(b.report.fooling_rate == a.report.fooling_rate);

  config.query_budget = 5;
  CHECK_THROWS_AS(optimize_attack(toy, images, config), ValidationError);
}

TEST_CASE("seeded attack fooling rates") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  const auto images = train_images(60, 2);
  std::ostringstream os;
  for (auto v : {Variant::SimpleCA, Variant::KernelAndInit, Variant::KernelOnly}) {
    AttackConfig config;
    config.meta.variant = v;
    config.meta.kernel_size = v == Variant::SimpleCA ? 13 : 7;
    config.meta.init_seed = 3;
    config.query_budget = 60;
    config.seed = 11;
    const AttackResult r = optimize_attack(toy, images, config);
    os << to_string(v) << "," << cli::format_double(r.report.fooling_rate) << "," << r.report.queries_used << "\n";
  }
  CHECK(golden::matches("attack_fr_seed11.csv", os.str()));
}

TEST_CASE("sweep rows are well formed") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  const auto images = train_images(20);
  AttackConfig base;
  // One generation of the larger (kernel + init) search.
  base.query_budget = cma::default_lambda(9 + 147);
  const auto rows = sweep_filter_size(toy, images, {3}, base, 2);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].kernel_size == 3);
  CHECK(rows[0].kernel_only_min <= rows[0].kernel_only_mean);
  CHECK(rows[0].kernel_only_mean <= rows[0].kernel_only_max);
  CHECK_THROWS_AS(sweep_filter_size(toy, images, {4}, base, 2), ValidationError);
}

TEST_CASE("seeded sweep over kernel sizes") {
  const auto toy = classify::builtin_toy_classifier(classify::kDefaultToySeed);
  const auto images = train_images(50, 3);
  AttackConfig base;
  base.query_budget = 44;
  base.seed = 2;
  const auto rows = sweep_filter_size(toy, images, {3, 7, 13}, base, kSweepInitializations);
  REQUIRE(rows.size() == 3);
  std::ostringstream os;
  os << "kernel_size,kernel_init_fr,kernel_only_min,kernel_only_mean,kernel_only_max,queries_used\n";
  for (const auto& r : rows) {
    CHECK(r.kernel_only_min <= r.kernel_only_mean);
    CHECK(r.kernel_only_mean <= r.kernel_only_max);
    CHECK(r.queries_used <= 44 * (1 + kSweepInitializations));
    os << r.kernel_size << "," << cli::format_double(r.kernel_init_fr) << "," << cli::format_double(r.kernel_only_min)
       << "," << cli::format_double(r.kernel_only_mean) << "," << cli::format_double(r.kernel_only_max) << ","
       << r.queries_used << "\n";
  }
  CHECK(golden::matches("sweep_3_7_13.csv", os.str()));
}

TEST_CASE("transfer matrix") {
  const auto images = train_images(40, 4);
  const auto a = classify::builtin_toy_classifier(42);
  const auto b = classify::builtin_toy_classifier(7);
  Rng rng(9);
  AttackMeta meta;
  const Perturbation e1 = render_perturbation(random_params(meta, rng));
  meta.variant = Variant::KernelAndInit;
  meta.kernel_size = 7;
  const Perturbation e2 = render_perturbation(random_params(meta, rng));

  const TransferTable one = transfer_eval({{"e1", e1}}, {a}, images);
  REQUIRE(one.fooling_rates.rows() == 1);
  REQUIRE(one.fooling_rates.cols() == 1);
  CHECK(one.fooling_rates(0, 0) == fooling_rate(a, images, e1).fooling_rate);

  const TransferTable same = transfer_eval({{"e1", e1}, {"e2", e2}}, {a, a}, images);
  CHECK(same.fooling_rates.col(0) == same.fooling_rates.col(1));

  const TransferTable t = transfer_eval({{"e1", e1}, {"e2", e2}}, {a, b}, images, 2);
  CHECK(t.classifiers == std::vector<std::string>{"builtin:42", "builtin:7"});
  std::ostringstream os;
  for (Index r = 0; r < 2; ++r) {
    os << t.perturbations[r];
    for (Index c = 0; c < 2; ++c) {
      const double fr = t.fooling_rates(r, c);
      CHECK(std::isfinite(fr));
      CHECK(fr >= 0.0);
      CHECK(fr <= 1.0);
      os << "," << cli::format_double(fr);
    }
    os << "\n";
  }
  CHECK(golden::matches("transfer_42_7.csv", os.str()));
  CHECK_THROWS_AS(transfer_eval({{"e1", e1}}, {}, images), ValidationError);
}
