#pragma once

// Synthetic sessile-drop measurement: spherical-cap geometry, a noisy 2-D
// side profile, an algebraic (Kåsa) circle fit and the contact angle read off
// the fitted circle.
//
// Frame: x horizontal, y vertical pointing up, the substrate is the line
// y = baseline_y and the droplet lies above it. A cap with contact angle θ
// and sphere radius R has its centre at y = baseline - R cos θ, so the angle
// is recovered as arccos((baseline - center_y) / R).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <optional>
#include <vector>

#include "acat/errors.hpp"
#include "acat/random.hpp"
#include "acat/time.hpp"

namespace acat::goniometry {

inline constexpr double kPi = std::numbers::pi;
inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Contact angles below this are rejected by the fit: the arc is too flat for
// the algebraic fit to be trusted.
inline constexpr double kMinFitAngleDeg = 5.0;

struct SphericalCap {
  double theta_deg = 90.0;
  double volume_ul = 10.0;  // 1 µL = 1 mm³
  double sphere_radius_mm = 0.0;
  double base_radius_mm = 0.0;
  double apex_height_mm = 0.0;
};

// (2 - 3cosθ + cos³θ) written as (1 - cosθ)²(2 + cosθ) with 1 - cosθ =
// 2 sin²(θ/2), which stays accurate for small angles.
inline double cap_shape_factor(double theta_rad) {
  const double s = std::sin(theta_rad / 2.0);
  const double one_minus_cos = 2.0 * s * s;
  return one_minus_cos * one_minus_cos * (2.0 + std::cos(theta_rad));
}

inline double cap_volume(double sphere_radius_mm, double theta_deg) {
  const double r = sphere_radius_mm;
  return kPi / 3.0 * r * r * r * cap_shape_factor(deg_to_rad(theta_deg));
}

// Volume from base radius and apex height alone.
inline double cap_volume_from_geometry(double base_radius_mm, double apex_height_mm) {
  const double a = base_radius_mm, h = apex_height_mm;
  return kPi * h * (3.0 * a * a + h * h) / 6.0;
}

inline SphericalCap cap_from_volume_angle(double volume_ul, double theta_deg) {
  if (!(theta_deg > 0.0 && theta_deg < 180.0))
    throw DegenerateCap("contact angle must lie strictly between 0 and 180 degrees");
  if (!(volume_ul > 0.0)) throw InputError("droplet volume must be > 0");
  const double theta = deg_to_rad(theta_deg);
  const double radius = std::cbrt(3.0 * volume_ul / (kPi * cap_shape_factor(theta)));
  const double s = std::sin(theta / 2.0);
  return {theta_deg, volume_ul, radius, radius * std::sin(theta), radius * 2.0 * s * s};
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct ProfilePoints {
  std::vector<Point> points;
  double baseline_y = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

inline double circle_center_y(const SphericalCap& cap, double baseline_y) {
  return baseline_y - cap.sphere_radius_mm * std::cos(deg_to_rad(cap.theta_deg));
}

// Points at uniform arc angles from one contact point over the apex to the
// other, each pushed radially by N(0, noise_sigma).
inline ProfilePoints synthesize_profile(const SphericalCap& cap, int n_points, double noise_sigma, std::uint64_t seed,
                                        double baseline_y = 0.0) {
  if (n_points < 5) throw InputError("profile needs at least 5 points");
  if (noise_sigma < 0) throw InputError("noise_sigma must be >= 0");
  ProfilePoints out{{}, baseline_y, noise_sigma, seed};
  out.points.reserve(static_cast<std::size_t>(n_points));
  auto rng = sim::random_stream(seed, "profile");
  const double theta = deg_to_rad(cap.theta_deg);
  const double cy = circle_center_y(cap, baseline_y);
  for (int i = 0; i < n_points; ++i) {
    // polar angle measured from the apex direction
    const double phi = -theta + 2.0 * theta * i / (n_points - 1);
    const double r = cap.sphere_radius_mm + (noise_sigma > 0 ? noise_sigma * rng.normal() : 0.0);
    out.points.push_back({r * std::sin(phi), cy + r * std::cos(phi)});
  }
  return out;
}

struct CircleFit {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.0;
  double rms_residual = 0.0;
  double contact_angle_deg = 0.0;
};

inline double contact_angle_deg(double center_y, double radius, double baseline_y) {
  const double c = std::clamp((baseline_y - center_y) / radius, -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

// Kåsa fit: minimise sum (x² + y² + D x + E y + F)² over (D, E, F), solved as
// a linear least-squares problem on centred, scaled coordinates.
inline CircleFit fit_circle(const ProfilePoints& profile) {
  const auto& pts = profile.points;
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (n < 3) throw FitError("circle fit needs at least 3 points");

  double mx = 0, my = 0;
  for (const auto& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw FitError("non-finite profile point");
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double spread = 0;
  for (const auto& p : pts) spread += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
  spread = std::sqrt(spread / static_cast<double>(n));
  if (!(spread > 0)) throw FitError("profile points coincide");

  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (pts[static_cast<std::size_t>(i)].x - mx) / spread;
    const double v = (pts[static_cast<std::size_t>(i)].y - my) / spread;
    a(i, 0) = u;
    a(i, 1) = v;
    a(i, 2) = 1.0;
    b(i) = -(u * u + v * v);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw FitError("profile points are collinear");
  const Eigen::Vector3d sol = qr.solve(b);

  const double cu = -sol(0) / 2.0, cv = -sol(1) / 2.0;
  const double r2 = cu * cu + cv * cv - sol(2);
  if (!(r2 > 0) || !std::isfinite(r2)) throw FitError("fit produced a non-positive radius");

  CircleFit fit;
  fit.center_x = mx + cu * spread;
  fit.center_y = my + cv * spread;
  fit.radius = std::sqrt(r2) * spread;
  double ss = 0;
  for (const auto& p : pts) {
    const double d = std::hypot(p.x - fit.center_x, p.y - fit.center_y) - fit.radius;
    ss += d * d;
  }
  fit.rms_residual = std::sqrt(ss / static_cast<double>(n));
  fit.contact_angle_deg = contact_angle_deg(fit.center_y, fit.radius, profile.baseline_y);
  // Compared at the reported 3-decimal precision so a true 5° cap passes.
  if (fit.contact_angle_deg < kMinFitAngleDeg - 0.0005)
    throw FitError("fitted contact angle below " + std::to_string(kMinFitAngleDeg) + " degrees; arc too flat");
  return fit;
}

struct MeasurementConfig {
  double noise_frac_of_base = 0.005;  // radial noise σ as a fraction of the base radius
  int n_points = 200;
  double baseline_y = 0.0;
};

struct MeasurementRecord {
  int part_id = 0;
  int column = 0;
  int row = 0;
  double theta_true_deg = 0.0;
  double theta_measured_deg = 0.0;
  double rms_residual_mm = 0.0;
  double droplet_ul = 0.0;
  SimTime timestamp{0};
};

// Angles are reported to 3 decimals.
inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline MeasurementRecord measure(double surface_true_theta_deg, double droplet_ul, const MeasurementConfig& cfg,
                                 std::uint64_t seed, int part_id = 0, SimTime timestamp = SimTime{0}) {
  try {
    const auto cap = cap_from_volume_angle(droplet_ul, surface_true_theta_deg);
    const auto profile =
        synthesize_profile(cap, cfg.n_points, cfg.noise_frac_of_base * cap.base_radius_mm, seed, cfg.baseline_y);
    const auto fit = fit_circle(profile);
    MeasurementRecord rec;
    rec.part_id = part_id;
    rec.theta_true_deg = surface_true_theta_deg;
    rec.theta_measured_deg = fit.contact_angle_deg;
    rec.rms_residual_mm = fit.rms_residual;
    rec.droplet_ul = droplet_ul;
    rec.timestamp = timestamp;
    return rec;
  } catch (const Error& e) {
    throw MeasurementFault(std::string("measurement failed: ") + e.what());
  }
}

}  // namespace acat::goniometry
