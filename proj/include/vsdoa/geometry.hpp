#ifndef VSDOA_GEOMETRY_HPP
#define VSDOA_GEOMETRY_HPP

#include <numbers>
#include <span>
#include <vector>

#include "vsdoa/random.hpp"

namespace vsdoa {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad2deg(double rad) { return rad * (180.0 / kPi); }

// Direction of arrival. Elevation is the polar angle measured from +z,
// azimuth is measured in the xy-plane from +x. Both are stored in radians.
//
// Construction normalizes: azimuth is wrapped into [0, 2pi); an elevation
// outside [0, pi] is reflected through the pole (with the azimuth rotated by
// pi) so the same point on the sphere is represented.
class DoA {
 public:
  DoA() = default;
  DoA(double elevation, double azimuth);

  static DoA from_degrees(double elevation_deg, double azimuth_deg) {
    return DoA(deg2rad(elevation_deg), deg2rad(azimuth_deg));
  }

  double elevation() const { return elevation_; }
  double azimuth() const { return azimuth_; }
  double elevation_deg() const { return rad2deg(elevation_); }
  double azimuth_deg() const { return rad2deg(azimuth_); }

  friend bool operator==(const DoA&, const DoA&) = default;

 private:
  double elevation_ = 0.0;
  double azimuth_ = 0.0;
};

struct UnitVec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 1.0;
};

// Admitted region of the sphere, in degrees. Limits are closed on the low
// side and open on the high side for sampling.
struct FieldOfView {
  double elevation_min_deg = 0.0;
  double elevation_max_deg = 180.0;
  double azimuth_min_deg = 0.0;
  double azimuth_max_deg = 360.0;

  static FieldOfView full() { return {}; }
  static FieldOfView limited() { return {10.0, 170.0, 30.0, 330.0}; }

  // Throws ConfigError if min >= max or a range leaves its full domain.
  void validate() const;
  bool contains(const DoA& d) const;
  bool contains_deg(double elevation_deg, double azimuth_deg) const;
  bool is_full() const;

  friend bool operator==(const FieldOfView&, const FieldOfView&) = default;
};

// Area-uniform draw restricted to `fov`: cos(elevation) is uniform over the
// admitted band and azimuth uniform over its interval.
DoA sample_uniform_sphere(Rng& rng, const FieldOfView& fov);

UnitVec3 doa_to_unit(const DoA& d);
UnitVec3 doa_to_unit(double elevation, double azimuth);

// 2(1 - sin(t)sin(t')cos(p - p') - cos(t)cos(t')), i.e. the squared
// Euclidean distance between the two unit vectors. Range [0, 4].
double chordal_sq_distance(const DoA& a, const DoA& b);
double chordal_sq_distance(double elev_a, double az_a, double elev_b, double az_b);

double squared_distance(const UnitVec3& a, const UnitVec3& b);

// Physical azimuth error in degrees, min(|d|, 360 - |d|), in [0, 180].
double wrapped_azimuth_error(double truth_deg, double estimate_deg);

// Ascending elevation; ties broken by ascending azimuth. Canonical order for
// multi-source labels.
std::vector<DoA> sort_by_elevation(std::span<const DoA> doas);
bool is_elevation_sorted(std::span<const DoA> doas);

}  // namespace vsdoa

#endif  // VSDOA_GEOMETRY_HPP
