#include "vsdoa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vsdoa/errors.hpp"

namespace vsdoa {

namespace {

double wrap_two_pi(double angle) {
  double w = std::fmod(angle, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod of a tiny negative value can round back up to exactly 2pi.
  if (w >= kTwoPi) w = 0.0;
  return w;
}

bool doa_less(const DoA& a, const DoA& b) {
  if (a.elevation() != b.elevation()) return a.elevation() < b.elevation();
  return a.azimuth() < b.azimuth();
}

}  // namespace

DoA::DoA(double elevation, double azimuth) {
  if (!std::isfinite(elevation) || !std::isfinite(azimuth)) {
    throw ConfigError("DoA angles must be finite");
  }
  double e = wrap_two_pi(elevation);
  if (e > kPi) {
    e = kTwoPi - e;
    azimuth += kPi;
  }
  elevation_ = e;
  azimuth_ = wrap_two_pi(azimuth);
}

void FieldOfView::validate() const {
  auto bad = [](const std::string& what) {
    throw ConfigError("invalid field of view: " + what);
  };
  if (!(elevation_min_deg < elevation_max_deg)) bad("elevation min must be below max");
  if (!(azimuth_min_deg < azimuth_max_deg)) bad("azimuth min must be below max");
  if (elevation_min_deg < 0.0 || elevation_max_deg > 180.0) bad("elevation outside [0, 180]");
  if (azimuth_min_deg < 0.0 || azimuth_max_deg > 360.0) bad("azimuth outside [0, 360]");
}

bool FieldOfView::contains_deg(double elevation_deg, double azimuth_deg) const {
  return elevation_deg >= elevation_min_deg && elevation_deg <= elevation_max_deg &&
         azimuth_deg >= azimuth_min_deg && azimuth_deg <= azimuth_max_deg;
}

bool FieldOfView::contains(const DoA& d) const {
  return contains_deg(d.elevation_deg(), d.azimuth_deg());
}

bool FieldOfView::is_full() const { return *this == full(); }

DoA sample_uniform_sphere(Rng& rng, const FieldOfView& fov) {
  const double cos_hi = std::cos(deg2rad(fov.elevation_min_deg));
  const double cos_lo = std::cos(deg2rad(fov.elevation_max_deg));
  // u in [0,1) maps onto (cos_lo, cos_hi], i.e. elevation in [min, max).
  const double c = cos_hi - (cos_hi - cos_lo) * rng.uniform();
  double elevation = std::acos(std::clamp(c, -1.0, 1.0));
  elevation = std::clamp(elevation, deg2rad(fov.elevation_min_deg), deg2rad(fov.elevation_max_deg));
  const double azimuth = deg2rad(rng.uniform(fov.azimuth_min_deg, fov.azimuth_max_deg));
  return DoA(elevation, azimuth);
}

UnitVec3 doa_to_unit(double elevation, double azimuth) {
  const double s = std::sin(elevation);
  return {s * std::cos(azimuth), s * std::sin(azimuth), std::cos(elevation)};
}

UnitVec3 doa_to_unit(const DoA& d) { return doa_to_unit(d.elevation(), d.azimuth()); }

double chordal_sq_distance(double elev_a, double az_a, double elev_b, double az_b) {
  return 2.0 * (1.0 - std::sin(elev_a) * std::sin(elev_b) * std::cos(az_a - az_b) -
                std::cos(elev_a) * std::cos(elev_b));
}

double chordal_sq_distance(const DoA& a, const DoA& b) {
  return chordal_sq_distance(a.elevation(), a.azimuth(), b.elevation(), b.azimuth());
}

double squared_distance(const UnitVec3& a, const UnitVec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double wrapped_azimuth_error(double truth_deg, double estimate_deg) {
  double d = std::fmod(std::fabs(truth_deg - estimate_deg), 360.0);
  return std::min(d, 360.0 - d);
}

std::vector<DoA> sort_by_elevation(std::span<const DoA> doas) {
  std::vector<DoA> out(doas.begin(), doas.end());
  std::sort(out.begin(), out.end(), doa_less);
  return out;
}

bool is_elevation_sorted(std::span<const DoA> doas) {
  return std::is_sorted(doas.begin(), doas.end(), doa_less);
}

}  // namespace vsdoa
