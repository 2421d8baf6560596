// Synthesizes a noisy sessile-drop profile and fits it. Build target:
// sample_cap_fit.

#include <cstdio>

#include "acat/goniometry.hpp"

int main() {
  namespace g = acat::goniometry;
  for (double theta : {30.0, 75.0, 120.0}) {
    const auto cap = g::cap_from_volume_angle(10.0, theta);
    const auto profile = g::synthesize_profile(cap, 200, 0.005 * cap.base_radius_mm, 42);
    const auto fit = g::fit_circle(profile);
    std::printf("theta %6.2f  R %.4f mm  a %.4f mm  h %.4f mm  fitted %.3f  rms %.2e mm\n", theta,
                cap.sphere_radius_mm, cap.base_radius_mm, cap.apex_height_mm, fit.contact_angle_deg,
                fit.rms_residual);
  }
}
