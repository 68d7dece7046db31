#ifndef VSDOA_SIGNAL_MODEL_HPP
#define VSDOA_SIGNAL_MODEL_HPP

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vsdoa/geometry.hpp"
#include "vsdoa/random.hpp"

namespace vsdoa {

using cd = std::complex<double>;

inline constexpr int kSensorChannels = 6;
inline constexpr int kMaxSources = 5;

// Auxiliary polarization angle gamma in [0, pi/2] and polarization phase
// difference eta in [-pi, pi], radians.
struct Polarization {
  double gamma = deg2rad(45.0);
  double eta = deg2rad(90.0);

  // Fixed polarization used when a run does not override it.
  static Polarization default_fixed() { return {}; }
  void validate() const;

  friend bool operator==(const Polarization&, const Polarization&) = default;
};

enum class Waveform { single_tone, digital };

std::string to_string(Waveform w);
Waveform waveform_from_string(const std::string& name);

struct SourceSpec {
  DoA doa;
  Polarization pol;
  double power_db = 0.0;  // relative to source 1
  Waveform waveform = Waveform::digital;

  double power() const;
};

// Response (e_x, e_y, e_z, h_x, h_y, h_z) of the six collocated antennas to a
// unit plane wave.
using SteeringVector = Eigen::Matrix<cd, kSensorChannels, 1>;
using ManifoldMatrix = Eigen::Matrix<cd, kSensorChannels, Eigen::Dynamic>;
using SnapshotMatrix = Eigen::Matrix<cd, kSensorChannels, Eigen::Dynamic>;
using SymbolMatrix = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic>;

// a = M(elevation, azimuth) * [sin(gamma) e^{j eta}, cos(gamma)]^T, where the
// first column of M is the electric/magnetic response to the elevation unit
// vector and the second to the azimuth unit vector. The magnetic triple is
// always u x e for propagation direction u.
SteeringVector steering_vector(const DoA& d, const Polarization& p);

// Column k is steering_vector(specs[k]). Throws ConfigError unless
// 1 <= K <= 5.
ManifoldMatrix manifold(std::span<const SourceSpec> specs);

// Unit average power symbol stream. single_tone: e^{j(w n + psi)} with w
// uniform on (0, pi) and psi uniform on [0, 2pi). digital: uniform QPSK.
std::vector<cd> synth_symbols(Waveform waveform, std::size_t n, Rng& rng);

// Per-antenna noise variance for an SNR in dB against a unit-power source 1.
// +infinity yields 0 (noiseless).
double noise_variance(double snr_db);

// X = A diag(sqrt(p)) S + noise, with `symbols` K x N and `noise` 6 x N (or
// empty for noiseless). Source contributions are accumulated in input order.
SnapshotMatrix compose_snapshots(std::span<const SourceSpec> specs, const SymbolMatrix& symbols,
                                 const SnapshotMatrix& noise);

// Complex circular white Gaussian noise, 6 x N, variance `variance` per
// entry split evenly between real and imaginary parts.
SnapshotMatrix synth_noise(double variance, std::size_t n, Rng& rng);

// Draws one symbol stream per source (in order), then the noise, and
// composes them. snr_db = +infinity disables noise and consumes no noise draws.
SnapshotMatrix synth_snapshots(std::span<const SourceSpec> specs, double snr_db, std::size_t n,
                               Rng& rng);

}  // namespace vsdoa

#endif  // VSDOA_SIGNAL_MODEL_HPP
