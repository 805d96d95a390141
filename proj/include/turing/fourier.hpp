#ifndef TURING_FOURIER_HPP
#define TURING_FOURIER_HPP

#include <Eigen/Core>

#include <complex>
#include <string>
#include <vector>

#include "turing/core_tensors.hpp"

namespace turing::fourier {

using Complex = std::complex<double>;
using Spectrum2D = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unitary 2D DFT: X(u,v) = (HW)^{-1/2} sum_{i,j} x(i,j) exp(-2 pi i (ui/H + vj/W)).
Spectrum2D dft2(const Eigen::Ref<const Grid2D>& channel);
Spectrum2D idft2_complex(const Spectrum2D& spectrum);
// Real part of the inverse; *max_imag receives the largest discarded |Im|.
Grid2D idft2(const Spectrum2D& spectrum, double* max_imag = nullptr);

struct ThresholdRule {
  enum class Kind {
    KeepMaxOnly,     // keep only coefficients attaining the max amplitude
    MaxMinusOne,     // keep |X| >= max - 1 (linear amplitude, unitary DFT)
    FractionOfMax,   // keep |X| >= fraction * max
    MaxMinusOneLog,  // keep ln|X| >= ln(max) - 1, i.e. |X| >= max / e
  };
  Kind kind = Kind::KeepMaxOnly;
  double fraction = 0.9;

  std::string name() const;
  static ThresholdRule parse(const std::string& name);
};

std::vector<ThresholdRule> default_rules();

struct FilterResult {
  Tensor3 pattern;
  std::vector<int> kept;        // surviving coefficients per channel
  double max_imag_residue = 0;  // before discarding the imaginary part
};

// Per channel: zero every coefficient below the rule's threshold, invert.
FilterResult threshold_filter(const Tensor3& pattern, const ThresholdRule& rule);

// Grid size over the Euclidean radial frequency of the strongest non-DC
// coefficient, averaged over non-constant channels. Throws NumericalError
// when every channel is constant.
double dominant_wavelength(const Tensor3& pattern);
double dominant_wavelength(const Eigen::Ref<const Grid2D>& channel);

}  // namespace turing::fourier

#endif  // TURING_FOURIER_HPP
