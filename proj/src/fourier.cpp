#include "turing/fourier.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <limits>

namespace turing::fourier {
namespace {

enum class Direction { Forward, Inverse };

Spectrum2D transform(Spectrum2D data, Direction dir) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  const Index h = data.rows();
  const Index w = data.cols();
  std::vector<Complex> in;
  std::vector<Complex> out;
  auto run = [&] {
    if (dir == Direction::Forward) {
      fft.fwd(out, in);
    } else {
      fft.inv(out, in);
    }
  };
  in.resize(static_cast<std::size_t>(w));
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) in[j] = data(i, j);
    run();
    for (Index j = 0; j < w; ++j) data(i, j) = out[j];
  }
  in.resize(static_cast<std::size_t>(h));
  for (Index j = 0; j < w; ++j) {
    for (Index i = 0; i < h; ++i) in[i] = data(i, j);
    run();
    for (Index i = 0; i < h; ++i) data(i, j) = out[i];
  }
  data /= std::sqrt(static_cast<double>(h * w));
  return data;
}

// Signed frequency index in (-n/2, n/2].
double signed_frequency(Index k, Index n) {
  return static_cast<double>(2 * k > n ? k - n : k);
}

}  // namespace

Spectrum2D dft2(const Eigen::Ref<const Grid2D>& channel) {
  return transform(channel.cast<Complex>(), Direction::Forward);
}

Spectrum2D idft2_complex(const Spectrum2D& spectrum) {
  return transform(spectrum, Direction::Inverse);
}

Grid2D idft2(const Spectrum2D& spectrum, double* max_imag) {
  const Spectrum2D x = idft2_complex(spectrum);
  if (max_imag != nullptr) *max_imag = x.size() == 0 ? 0.0 : x.imag().cwiseAbs().maxCoeff();
  return x.real();
}

std::string ThresholdRule::name() const {
  switch (kind) {
    case Kind::KeepMaxOnly: return "max";
    case Kind::MaxMinusOne: return "max-1";
    case Kind::FractionOfMax: {
      std::string f = std::to_string(fraction);
      f.erase(f.find_last_not_of('0') + 1);
      if (!f.empty() && f.back() == '.') f.pop_back();
      return f + "*max";
    }
    case Kind::MaxMinusOneLog: return "log-max-1";
  }
  return "unknown";
}

ThresholdRule ThresholdRule::parse(const std::string& name) {
  if (name == "max") return {Kind::KeepMaxOnly, 0.9};
  if (name == "max-1") return {Kind::MaxMinusOne, 0.9};
  if (name == "log-max-1") return {Kind::MaxMinusOneLog, 0.9};
  const auto star = name.find("*max");
  if (star != std::string::npos && star + 4 == name.size()) {
    double f = 0.0;
    try {
      f = std::stod(name.substr(0, star));
    } catch (const std::exception&) {
      throw ValidationError("threshold rule '" + name + "': bad fraction");
    }
    require(f > 0.0 && f <= 1.0, "threshold rule '" + name + "': fraction must be in (0,1]");
    return {Kind::FractionOfMax, f};
  }
  throw ValidationError("unknown threshold rule '" + name +
                        "' (expected max | max-1 | <f>*max | log-max-1)");
}

std::vector<ThresholdRule> default_rules() {
  return {{ThresholdRule::Kind::KeepMaxOnly, 0.9},
          {ThresholdRule::Kind::MaxMinusOne, 0.9},
          {ThresholdRule::Kind::FractionOfMax, 0.9}};
}

FilterResult threshold_filter(const Tensor3& pattern, const ThresholdRule& rule) {
  FilterResult result;
  result.pattern = Tensor3(pattern.channels(), pattern.height(), pattern.width());
  for (Index c = 0; c < pattern.channels(); ++c) {
    Spectrum2D spectrum = dft2(pattern.channel(c));
    const Eigen::ArrayXXd amplitude = spectrum.cwiseAbs().array();
    const double peak = amplitude.maxCoeff();
    double threshold = peak;
    switch (rule.kind) {
      case ThresholdRule::Kind::KeepMaxOnly: threshold = peak; break;
      case ThresholdRule::Kind::MaxMinusOne: threshold = peak - 1.0; break;
      case ThresholdRule::Kind::FractionOfMax: threshold = rule.fraction * peak; break;
      case ThresholdRule::Kind::MaxMinusOneLog: threshold = peak / std::exp(1.0); break;
    }
    // Conjugate partners agree in amplitude only up to rounding; the slack
    // keeps them together so the inverse stays real.
    const double cutoff = threshold - 1e-9 * peak;
    int kept = 0;
    for (Index i = 0; i < spectrum.rows(); ++i) {
      for (Index j = 0; j < spectrum.cols(); ++j) {
        if (amplitude(i, j) < cutoff || peak == 0.0) {
          spectrum(i, j) = 0.0;
        } else {
          ++kept;
        }
      }
    }
    double imag = 0.0;
    result.pattern.channel(c) = idft2(spectrum, &imag);
    result.max_imag_residue = std::max(result.max_imag_residue, imag);
    result.kept.push_back(kept);
  }
  return result;
}

double dominant_wavelength(const Eigen::Ref<const Grid2D>& channel) {
  const Spectrum2D spectrum = dft2(channel);
  const Index h = spectrum.rows();
  const Index w = spectrum.cols();
  const double scale = spectrum.cwiseAbs().maxCoeff();
  double best = 0.0;
  double wavelength = std::numeric_limits<double>::quiet_NaN();
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      if (i == 0 && j == 0) continue;
      const double a = std::abs(spectrum(i, j));
      // Strictly larger (beyond rounding) wins, so the scan-order first of a
      // conjugate pair or of exact ties is kept.
      if (a > best * (1.0 + 1e-12) && a > 1e-12 * scale) {
        best = a;
        const double fy = signed_frequency(i, h) / static_cast<double>(h);
        const double fx = signed_frequency(j, w) / static_cast<double>(w);
        wavelength = 1.0 / std::sqrt(fy * fy + fx * fx);
      }
    }
  }
  if (!(best > 0.0)) throw NumericalError("dominant_wavelength: no dominant frequency (constant pattern)");
  return wavelength;
}

double dominant_wavelength(const Tensor3& pattern) {
  double total = 0.0;
  int counted = 0;
  for (Index c = 0; c < pattern.channels(); ++c) {
    const auto ch = pattern.channel(c);
    if (ch.size() == 0 || (ch.array() == ch(0, 0)).all()) continue;
    total += dominant_wavelength(Grid2D(ch));
    ++counted;
  }
  if (counted == 0) throw NumericalError("dominant_wavelength: no dominant frequency (constant pattern)");
  return total / counted;
}

}  // namespace turing::fourier
