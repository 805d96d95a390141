#include "turing/turing_ca.hpp"

#include <cmath>
#include <sstream>

namespace turing::ca {
namespace {

struct RingCounts {
  int half = 0;
  int inner = 0;
  int outer = 0;
};

RingCounts count_ring(const RingKernel& ring) {
  RingCounts counts;
  counts.half = static_cast<int>(std::ceil(ring.r_out)) - 1;
  const double in2 = ring.r_in * ring.r_in;
  const double out2 = ring.r_out * ring.r_out;
  for (int m = -counts.half; m <= counts.half; ++m) {
    for (int l = -counts.half; l <= counts.half; ++l) {
      const double d2 = m * m + l * l;
      if (d2 < in2) {
        ++counts.inner;
      } else if (d2 > in2 && d2 < out2) {
        ++counts.outer;
      }
    }
  }
  return counts;
}

double l1_mass(const Grid2D& k) { return k.cwiseAbs().sum(); }

void require_sign_cells(const Tensor3& cells, const char* who) {
  require(is_sign_pattern(cells), std::string(who) + ": state entries must be +/-1");
}

void require_balanced(const Grid2D& kernel, const char* who) {
  require(is_balanced(kernel), std::string(who) + ": kernel is not balanced (|sum| = " +
                                   std::to_string(std::abs(kernel_sum(kernel))) + ")");
}

void sign_into(const Grid2D& pre, double tie_tolerance, Tensor3::ChannelMap out) {
  out = pre.unaryExpr([tie_tolerance](double v) { return tie_sign(v, tie_tolerance); });
}

}  // namespace

void validate(const KernelSpec& spec) {
  std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, RingKernel>) {
          require(std::isfinite(k.r_in) && std::isfinite(k.r_out), "ring kernel: radii must be finite");
          require(k.r_in > 0.0 && k.r_in < k.r_out,
                  "ring kernel: requires 0 < r_in < r_out (got r_in=" + std::to_string(k.r_in) +
                      ", r_out=" + std::to_string(k.r_out) + ")");
          const RingCounts counts = count_ring(k);
          require(counts.inner > 0, "ring kernel: r_in encloses no lattice point");
          require(counts.outer > 0, "ring kernel: annulus r_in < d < r_out holds no lattice point");
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          require(k.size >= 1 && k.size % 2 == 1, "rect kernel: size L must be odd and positive");
          require(k.l1 >= 1 && k.l1 <= k.size && k.l2 >= 1 && k.l2 <= k.size,
                  "rect kernel: requires 1 <= l1, l2 <= L");
          require(k.l1 * k.l2 < k.size * k.size,
                  "rect kernel: l1*l2 must be < L^2 (no negative surround otherwise)");
        } else {
          require(k.size >= 1 && k.size % 2 == 1, "free kernel: size L must be odd and positive");
          require(k.elements.size() == static_cast<Index>(k.size) * k.size,
                  "free kernel: expected L^2 elements");
          require(k.elements.allFinite(), "free kernel: elements must be finite");
        }
      },
      spec);
}

int kernel_size(const KernelSpec& spec) {
  return std::visit(
      [](const auto& k) -> int {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, RingKernel>) {
          return 2 * (static_cast<int>(std::ceil(k.r_out)) - 1) + 1;
        } else {
          return k.size;
        }
      },
      spec);
}

std::string describe(const KernelSpec& spec) {
  std::ostringstream os;
  std::visit(
      [&os](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, RingKernel>) {
          os << "ring(r_in=" << k.r_in << ", r_out=" << k.r_out << ")";
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          os << "rect(L=" << k.size << ", l1=" << k.l1 << ", l2=" << k.l2 << ")";
        } else {
          os << "free(L=" << k.size << ")";
        }
      },
      spec);
  return os.str();
}

Grid2D mean_centered(const Grid2D& elements) {
  Grid2D out = elements;
  if (out.size() == 0) return out;
  const double n = static_cast<double>(out.size());
  out.array() -= out.sum() / n;
  out.array() -= out.sum() / n;
  return out;
}

Grid2D realize_kernel(const KernelSpec& spec) {
  validate(spec);
  return std::visit(
      [](const auto& k) -> Grid2D {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, RingKernel>) {
          const RingCounts counts = count_ring(k);
          const double w = static_cast<double>(counts.outer) / counts.inner;
          const int size = 2 * counts.half + 1;
          const double in2 = k.r_in * k.r_in;
          const double out2 = k.r_out * k.r_out;
          Grid2D kernel = Grid2D::Zero(size, size);
          for (int m = -counts.half; m <= counts.half; ++m) {
            for (int l = -counts.half; l <= counts.half; ++l) {
              const double d2 = m * m + l * l;
              if (d2 < in2) {
                kernel(m + counts.half, l + counts.half) = w;
              } else if (d2 > in2 && d2 < out2) {
                kernel(m + counts.half, l + counts.half) = -1.0;
              }
            }
          }
          return kernel;
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          const int inner = k.l1 * k.l2;
          const double value = static_cast<double>(k.size * k.size - inner) / inner;
          Grid2D kernel = Grid2D::Constant(k.size, k.size, -1.0);
          kernel.block((k.size - k.l1) / 2, (k.size - k.l2) / 2, k.l1, k.l2).setConstant(value);
          return kernel;
        } else {
          Grid2D raw = Eigen::Map<const Grid2D>(k.elements.data(), k.size, k.size);
          return mean_centered(raw);
        }
      },
      spec);
}

double kernel_sum(const Grid2D& kernel) { return kernel.sum(); }

bool is_balanced(const Grid2D& kernel) { return std::abs(kernel.sum()) <= kBalanceTolerance; }

bool is_sign_pattern(const Tensor3& t) {
  return (t.flat().array().abs() == 1.0).all();
}

InitMap random_init_map(Index channels, int tiles, int tile_size, Rng& rng) {
  InitMap map;
  map.tiles = tiles;
  map.tile_size = tile_size;
  map.tile_values = Tensor3(channels, tiles, tiles);
  for (Index k = 0; k < map.tile_values.size(); ++k) map.tile_values.flat()[k] = random_sign(rng);
  return map;
}

void validate(const InitMap& map) {
  require(map.tiles >= 1 && map.tile_size >= 1, "init map: tiles and tile_size must be positive");
  require(map.tile_values.height() == map.tiles && map.tile_values.width() == map.tiles,
          "init map: tile_values must be tiles x tiles per channel");
  require(map.tile_values.channels() == 1 || map.tile_values.channels() == 3,
          "init map: 1 or 3 channels");
  require(is_sign_pattern(map.tile_values), "init map: tile values must be +/-1");
}

PatternState expand_init(const InitMap& map) {
  const Index side = static_cast<Index>(map.tiles) * map.tile_size;
  return expand_init_to(map, side, side);
}

PatternState expand_init_to(const InitMap& map, Index height, Index width) {
  validate(map);
  require(height >= 1 && width >= 1, "expand_init: grid must be non-empty");
  PatternState state;
  state.cells = Tensor3(map.tile_values.channels(), height, width);
  for (Index c = 0; c < state.cells.channels(); ++c) {
    for (Index i = 0; i < height; ++i) {
      const Index ti = i * map.tiles / height;
      for (Index j = 0; j < width; ++j) {
        state.cells(c, i, j) = map.tile_values(c, ti, j * map.tiles / width);
      }
    }
  }
  return state;
}

PatternState random_state(Index channels, Index height, Index width, Rng& rng) {
  PatternState state;
  state.cells = Tensor3(channels, height, width);
  for (Index k = 0; k < state.cells.size(); ++k) state.cells.flat()[k] = random_sign(rng);
  return state;
}

MixKind kind_of(const MixStrategy& mix) { return static_cast<MixKind>(mix.index()); }

MixKind parse_mix_kind(const std::string& name) {
  if (name == "independent") return MixKind::Independent;
  if (name == "summation") return MixKind::Summation;
  if (name == "filter3d" || name == "3d") return MixKind::Filter3D;
  if (name == "pointwise") return MixKind::Pointwise;
  throw ValidationError("unknown channel mixing '" + name +
                        "' (expected independent|summation|filter3d|pointwise)");
}

const char* to_string(MixKind kind) {
  switch (kind) {
    case MixKind::Independent: return "independent";
    case MixKind::Summation: return "summation";
    case MixKind::Filter3D: return "filter3d";
    case MixKind::Pointwise: return "pointwise";
  }
  return "unknown";
}

PatternState ca_step(const PatternState& state, const Grid2D& kernel, BoundaryMode mode) {
  require_balanced(kernel, "ca_step");
  require_sign_cells(state.cells, "ca_step");
  const double tol = kTieRelTolerance * l1_mass(kernel);
  PatternState next{Tensor3(state.cells.channels(), state.cells.height(), state.cells.width()),
                    state.step_count + 1};
  for (Index c = 0; c < state.cells.channels(); ++c) {
    sign_into(convolve2d(state.cells.channel(c), kernel, mode), tol, next.cells.channel(c));
  }
  return next;
}

PatternState ca_step_binary(const PatternState& state, const Grid2D& kernel, BoundaryMode mode) {
  require_balanced(kernel, "ca_step_binary");
  require(((state.cells.flat().array() == 0.0) || (state.cells.flat().array() == 1.0)).all(),
          "ca_step_binary: state entries must be 0 or 1");
  // The +/-1 form sees twice this pre-activation, hence half the tie band.
  const double tol = 0.5 * kTieRelTolerance * l1_mass(kernel);
  PatternState next{Tensor3(state.cells.channels(), state.cells.height(), state.cells.width()),
                    state.step_count + 1};
  for (Index c = 0; c < state.cells.channels(); ++c) {
    const Grid2D pre = convolve2d(state.cells.channel(c), kernel, mode);
    next.cells.channel(c) =
        pre.unaryExpr([tol](double v) { return 0.5 * (tie_sign(v, tol) + 1.0); });
  }
  return next;
}

PatternState ca_step_mixed(const PatternState& state, const Grid2D& kernel, const MixStrategy& mix,
                           BoundaryMode mode) {
  const Tensor3& cells = state.cells;
  if (std::holds_alternative<Independent>(mix)) return ca_step(state, kernel, mode);

  require_sign_cells(cells, "ca_step_mixed");
  require(cells.channels() == 3, std::string("ca_step_mixed: ") + to_string(kind_of(mix)) +
                                     " mixing needs a 3-channel state");
  PatternState next{Tensor3(3, cells.height(), cells.width()), state.step_count + 1};

  if (std::holds_alternative<Summation>(mix)) {
    require_balanced(kernel, "ca_step_mixed");
    const double tol = kTieRelTolerance * l1_mass(kernel);
    const Grid2D c0 = convolve2d(cells.channel(0), kernel, mode);
    const Grid2D c1 = convolve2d(cells.channel(1), kernel, mode);
    sign_into(c0, tol, next.cells.channel(0));
    sign_into(c1, tol, next.cells.channel(1));
    sign_into(c0 + c1, 2.0 * tol, next.cells.channel(2));
    return next;
  }

  if (const auto* filter = std::get_if<Filter3D>(&mix)) {
    double total = 0.0;
    double count = 0.0;
    for (const Grid2D& s : filter->slices) {
      require(s.rows() == kernel.rows() && s.cols() == kernel.cols(),
              "ca_step_mixed: 3D filter slices must match the kernel size");
      total += s.sum();
      count += static_cast<double>(s.size());
    }
    std::array<Grid2D, 3> slices;
    double mass = 0.0;
    for (int d = 0; d < 3; ++d) {
      slices[d] = filter->slices[d].array() - total / count;
    }
    // Second centring pass, as in mean_centered().
    const double residual = (slices[0].sum() + slices[1].sum() + slices[2].sum()) / count;
    for (auto& s : slices) {
      s.array() -= residual;
      mass += l1_mass(s);
    }
    const double tol = kTieRelTolerance * mass;
    for (Index c = 0; c < 3; ++c) {
      Grid2D pre = Grid2D::Zero(cells.height(), cells.width());
      for (int d = 0; d < 3; ++d) {
        const Index src = (c + d + 2) % 3;  // (c + d - 1) mod 3
        pre += convolve2d(cells.channel(src), slices[d], mode);
      }
      sign_into(pre, tol, next.cells.channel(c));
    }
    return next;
  }

  const auto& pw = std::get<Pointwise>(mix);
  require(pw.mix.allFinite(), "ca_step_mixed: pointwise mix matrix must be finite");
  std::array<Grid2D, 3> conv;
  std::array<double, 3> mass{};
  for (int c = 0; c < 3; ++c) {
    require(pw.kernels[c].rows() == kernel.rows() && pw.kernels[c].cols() == kernel.cols(),
            "ca_step_mixed: pointwise kernels must match the kernel size");
    const Grid2D k = mean_centered(pw.kernels[c]);
    mass[c] = l1_mass(k);
    conv[c] = convolve2d(cells.channel(c), k, mode);
  }
  for (Index c = 0; c < 3; ++c) {
    Grid2D pre = Grid2D::Zero(cells.height(), cells.width());
    double tol = 0.0;
    for (int src = 0; src < 3; ++src) {
      pre += pw.mix(c, src) * conv[src];
      tol += std::abs(pw.mix(c, src)) * mass[src];
    }
    sign_into(pre, kTieRelTolerance * tol, next.cells.channel(c));
  }
  return next;
}

CaResult run_ca(const PatternState& init, const KernelSpec& spec, const MixStrategy& mix,
                int max_steps, BoundaryMode mode) {
  require(max_steps >= 0, "run_ca: steps must be non-negative");
  const Grid2D kernel = realize_kernel(spec);
  require(kernel.rows() <= init.cells.height() && kernel.cols() <= init.cells.width(),
          "run_ca: kernel larger than the pattern");
  CaResult result{init, false, false};
  for (int step = 0; step < max_steps; ++step) {
    PatternState next = ca_step_mixed(result.state, kernel, mix, mode);
    const bool unchanged = next.cells == result.state.cells;
    result.state = std::move(next);
    if (unchanged) {
      result.fixed_point = true;
      return result;
    }
  }
  result.cap_hit = max_steps > 0;
  return result;
}

}  // namespace turing::ca
