#include "vsdoa/signal_model.hpp"

#include <cmath>
#include <limits>

#include "vsdoa/errors.hpp"

namespace vsdoa {

namespace {

void check_source_count(std::size_t k) {
  if (k < 1 || k > static_cast<std::size_t>(kMaxSources)) {
    throw ConfigError("number of sources must be in 1..5, got " + std::to_string(k));
  }
}

}  // namespace

void Polarization::validate() const {
  if (!(gamma >= 0.0 && gamma <= kPi / 2)) throw ConfigError("polarization gamma outside [0, pi/2]");
  if (!(eta >= -kPi && eta <= kPi)) throw ConfigError("polarization eta outside [-pi, pi]");
}

std::string to_string(Waveform w) { return w == Waveform::single_tone ? "single_tone" : "digital"; }

Waveform waveform_from_string(const std::string& name) {
  if (name == "single_tone") return Waveform::single_tone;
  if (name == "digital") return Waveform::digital;
  throw ConfigError("unknown waveform '" + name + "' (expected single_tone or digital)");
}

double SourceSpec::power() const { return std::pow(10.0, power_db / 10.0); }

SteeringVector steering_vector(const DoA& d, const Polarization& p) {
  const double ct = std::cos(d.elevation()), st = std::sin(d.elevation());
  const double cp = std::cos(d.azimuth()), sp = std::sin(d.azimuth());
  const cd w1 = std::sin(p.gamma) * std::polar(1.0, p.eta);
  const double w2 = std::cos(p.gamma);

  SteeringVector a;
  a(0) = ct * cp * w1 - sp * w2;
  a(1) = ct * sp * w1 + cp * w2;
  a(2) = -st * w1;
  a(3) = -sp * w1 - ct * cp * w2;
  a(4) = cp * w1 - ct * sp * w2;
  a(5) = st * w2;
  return a;
}

ManifoldMatrix manifold(std::span<const SourceSpec> specs) {
  check_source_count(specs.size());
  ManifoldMatrix a(kSensorChannels, static_cast<Eigen::Index>(specs.size()));
  for (std::size_t k = 0; k < specs.size(); ++k) {
    a.col(static_cast<Eigen::Index>(k)) = steering_vector(specs[k].doa, specs[k].pol);
  }
  return a;
}

std::vector<cd> synth_symbols(Waveform waveform, std::size_t n, Rng& rng) {
  std::vector<cd> s(n);
  if (waveform == Waveform::single_tone) {
    double omega = 0.0;
    while (omega == 0.0) omega = kPi * rng.uniform();
    const double phase = kTwoPi * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::polar(1.0, omega * static_cast<double>(i) + phase);
    }
  } else {
    const double r = 1.0 / std::sqrt(2.0);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 32 == 0) bits = rng.next_u64();
      const double re = (bits & 1) ? r : -r;
      const double im = (bits & 2) ? r : -r;
      bits >>= 2;
      s[i] = cd(re, im);
    }
  }
  return s;
}

double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

SnapshotMatrix synth_noise(double variance, std::size_t n, Rng& rng) {
  SnapshotMatrix noise(kSensorChannels, static_cast<Eigen::Index>(n));
  const double sigma = std::sqrt(variance / 2.0);
  for (Eigen::Index c = 0; c < noise.cols(); ++c) {
    for (int r = 0; r < kSensorChannels; ++r) {
      const double re = rng.normal();
      const double im = rng.normal();
      noise(r, c) = cd(sigma * re, sigma * im);
    }
  }
  return noise;
}

SnapshotMatrix compose_snapshots(std::span<const SourceSpec> specs, const SymbolMatrix& symbols,
                                 const SnapshotMatrix& noise) {
  check_source_count(specs.size());
  const Eigen::Index n = symbols.cols();
  if (symbols.rows() != static_cast<Eigen::Index>(specs.size()) || n < 1) {
    throw DimensionError("symbol matrix must be K x N with N >= 1");
  }
  if (noise.size() != 0 && noise.cols() != n) {
    throw DimensionError("noise matrix must be 6 x N");
  }

  SnapshotMatrix x = noise.size() != 0 ? noise : SnapshotMatrix::Zero(kSensorChannels, n);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const SteeringVector a = steering_vector(specs[k].doa, specs[k].pol) * std::sqrt(specs[k].power());
    const auto row = symbols.row(static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < n; ++c) {
      const cd s = row(c);
      for (int r = 0; r < kSensorChannels; ++r) x(r, c) += a(r) * s;
    }
  }
  return x;
}

SnapshotMatrix synth_snapshots(std::span<const SourceSpec> specs, double snr_db, std::size_t n,
                               Rng& rng) {
  check_source_count(specs.size());
  if (n < 1) throw ConfigError("snapshot count must be at least 1");

  SymbolMatrix symbols(static_cast<Eigen::Index>(specs.size()), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::vector<cd> s = synth_symbols(specs[k].waveform, n, rng);
    for (std::size_t i = 0; i < n; ++i) symbols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = s[i];
  }
  const double variance = noise_variance(snr_db);
  SnapshotMatrix noise;
  if (variance > 0.0) noise = synth_noise(variance, n, rng);
  return compose_snapshots(specs, symbols, noise);
}

}  // namespace vsdoa
