#pragma once

#include <vector>

namespace spex {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

struct XY {
  double x = 0.0;  // km east
  double y = 0.0;  // km north
};

/// Equirectangular projection about a reference latitude: distances in km,
/// adequate at basin scale (a few hundred km).
class Projection {
 public:
  explicit Projection(double ref_lat_deg);

  XY to_xy(LonLat p) const;

  double ref_lat() const { return ref_lat_; }

 private:
  double ref_lat_;
  double kx_;  // km per degree longitude at ref latitude
  double ky_;  // km per degree latitude
};

double distance_km(XY a, XY b);

/// Even-odd (ray casting) point-in-polygon test; boundary points count as
/// inside on the left/bottom edges, consistent enough for grid masking.
bool point_in_polygon(LonLat p, const std::vector<LonLat>& poly);

}  // namespace spex
