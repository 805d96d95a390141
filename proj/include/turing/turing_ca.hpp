#ifndef TURING_TURING_CA_HPP
#define TURING_TURING_CA_HPP

#include <Eigen/Core>

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "turing/core_tensors.hpp"
#include "turing/rng.hpp"

namespace turing::ca {

// Young-style ring: weight w inside radius r_in, -1 in the annulus
// r_in < d < r_out, 0 elsewhere; w balances the kernel to zero sum.
struct RingKernel {
  double r_in = 0.0;
  double r_out = 0.0;
};

// size x size kernel of -1 with a centred l1 x l2 positive block.
struct RectKernel {
  int size = 13;
  int l1 = 1;
  int l2 = 1;
};

// Arbitrary size x size elements (row-major); mean-centred on realization.
struct FreeKernel {
  int size = 0;
  Eigen::VectorXd elements;
};

using KernelSpec = std::variant<RingKernel, RectKernel, FreeKernel>;

inline constexpr double kBalanceTolerance = 1e-9;
// |pre-activation| <= kTieRelTolerance * (L1 mass of the taps) counts as an
// exact tie and resolves to +1, so rounding noise in a mathematically zero
// sum cannot flip a cell.
inline constexpr double kTieRelTolerance = 1e-9;
inline constexpr int kDefaultStepCap = 64;
inline constexpr int kDefaultTiles = 7;
inline constexpr int kDefaultTileSize = 32;

void validate(const KernelSpec& spec);
int kernel_size(const KernelSpec& spec);
std::string describe(const KernelSpec& spec);

// Throws ValidationError when the spec invariants fail or the realized
// kernel would have no positive centre.
Grid2D realize_kernel(const KernelSpec& spec);

// Two-pass mean removal; leaves |sum| at rounding level of the mean.
Grid2D mean_centered(const Grid2D& elements);

double kernel_sum(const Grid2D& kernel);
bool is_balanced(const Grid2D& kernel);

// +1 / -1 with the tie convention sign(0) := +1.
inline double tie_sign(double value, double tie_tolerance) {
  return value >= -tie_tolerance ? 1.0 : -1.0;
}

struct PatternState {
  Tensor3 cells;  // every entry is exactly -1 or +1 (or 0/1 for binary steps)
  int step_count = 0;
};

// Per-channel tiles x tiles values in {-1,+1}, each replicated over a
// tile_size x tile_size block.
struct InitMap {
  int tiles = kDefaultTiles;
  int tile_size = kDefaultTileSize;
  Tensor3 tile_values;  // C x tiles x tiles
};

InitMap random_init_map(Index channels, int tiles, int tile_size, Rng& rng);
void validate(const InitMap& map);

// (tiles*tile_size)^2 state.
PatternState expand_init(const InitMap& map);
// Same tiling stretched onto an arbitrary H x W grid: cell (i,j) takes tile
// (i*tiles/H, j*tiles/W). Equals expand_init when H = W = tiles*tile_size.
PatternState expand_init_to(const InitMap& map, Index height, Index width);

// Per-cell iid uniform +/-1 state.
PatternState random_state(Index channels, Index height, Index width, Rng& rng);

struct Independent {};
struct Summation {};
// One 3D filter sliding over the (cyclic) channel axis as well:
//   pre_c = sum_d slices[d] * n_{(c + d - 1) mod 3}.
struct Filter3D {
  std::array<Grid2D, 3> slices;
};
// Per-channel 2D kernels followed by a 3x3 channel mix:
//   pre_c = sum_c' mix(c, c') * (kernels[c'] * n_c').
struct Pointwise {
  Eigen::Matrix3d mix = Eigen::Matrix3d::Identity();
  std::array<Grid2D, 3> kernels;
};

using MixStrategy = std::variant<Independent, Summation, Filter3D, Pointwise>;

enum class MixKind { Independent, Summation, Filter3D, Pointwise };
MixKind kind_of(const MixStrategy& mix);
MixKind parse_mix_kind(const std::string& name);
const char* to_string(MixKind kind);

// One synchronous update n <- sign(Y * n) applied to each channel.
PatternState ca_step(const PatternState& state, const Grid2D& kernel,
                     BoundaryMode mode = BoundaryMode::Periodic);

// {0,1} formulation n <- (sign(Y * n) + 1) / 2.
PatternState ca_step_binary(const PatternState& state, const Grid2D& kernel,
                            BoundaryMode mode = BoundaryMode::Periodic);

// One update under a channel-mixing strategy. `kernel` is the realized shared
// kernel (Independent, Summation); Filter3D and Pointwise carry their own
// taps, mean-centred here, and must match its size.
PatternState ca_step_mixed(const PatternState& state, const Grid2D& kernel, const MixStrategy& mix,
                           BoundaryMode mode = BoundaryMode::Periodic);

struct CaResult {
  PatternState state;
  bool fixed_point = false;  // last step reproduced its input
  bool cap_hit = false;      // ran out of steps before a fixed point
};

// Iterates ca_step_mixed up to max_steps times, stopping early at a fixed point.
CaResult run_ca(const PatternState& init, const KernelSpec& spec, const MixStrategy& mix,
                int max_steps = kDefaultStepCap, BoundaryMode mode = BoundaryMode::Periodic);

bool is_sign_pattern(const Tensor3& t);

}  // namespace turing::ca

#endif  // TURING_TURING_CA_HPP
