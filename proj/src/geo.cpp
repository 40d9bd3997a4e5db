#include "spex/geo.hpp"

#include <cmath>

namespace spex {

namespace {
constexpr double kEarthRadiusKm = 6371.0;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

Projection::Projection(double ref_lat_deg) : ref_lat_(ref_lat_deg) {
  const double rad_per_deg = kPi / 180.0;
  ky_ = kEarthRadiusKm * rad_per_deg;
  kx_ = ky_ * std::cos(ref_lat_deg * rad_per_deg);
}

XY Projection::to_xy(LonLat p) const {
  return {p.lon * kx_, p.lat * ky_};
}

double distance_km(XY a, XY b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

bool point_in_polygon(LonLat p, const std::vector<LonLat>& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    const bool crosses = (a.lat > p.lat) != (b.lat > p.lat);
    if (crosses) {
      const double x_at =
          a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
      if (p.lon < x_at) inside = !inside;
    }
  }
  return inside;
}

}  // namespace spex
