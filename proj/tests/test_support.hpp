#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "pivotal/mechanics.hpp"
#include "pivotal/object.hpp"

namespace pivotal::testing {

inline ObjectParams gear1() {
  ObjectParams o;
  o.name = "gear1";
  o.m = 0.140;
  o.profile = Profile::rect(0.084, 0.020);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

inline ObjectParams gear2() {
  ObjectParams o;
  o.name = "gear2";
  o.m = 0.100;
  o.profile = Profile::rect(0.121, 0.0095);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

inline ObjectParams peg1() {
  ObjectParams o;
  o.name = "peg1";
  o.m = 0.045;
  o.profile = Profile::stepped(0.036, 0.020, 0.040, 0.028);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

inline ObjectParams peg2() {
  ObjectParams o;
  o.name = "peg2";
  o.m = 0.085;
  o.profile = Profile::stepped(0.028, 0.010, 0.040, 0.011);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

struct SamplePoint {
  PoseState pose;
  Control u;
};

/// Draws a quasi-statically consistent, contact-feasible point: pose plus
/// a wall-normal target first, control recovered from the statics.
/// Retries past singular poses and points whose floor normal comes out
/// negative.
inline SamplePoint sample_consistent_point(std::mt19937& rng, const ObjectParams& obj,
                                           double max_force_scale = 3.0) {
  std::uniform_real_distribution<double> uth(0.02, 0.5 * M_PI - 0.02);
  std::uniform_real_distribution<double> upy(0.0, obj.profile.push_face_extent());
  std::uniform_real_distribution<double> uf(0.0, max_force_scale * obj.weight());
  for (;;) {
    const PoseState pose{uth(rng), upy(rng)};
    const auto geom = contact_geometry(obj, pose);
    try {
      const ConsistentPoint pt = control_for_wall_normal(geom, obj, obj.m, 0.0, uf(rng));
      if (pt.f_nB < 0.0) continue;
      return {pose, pt.u};
    } catch (const SingularConfigError&) {
      continue;
    }
  }
}

}  // namespace pivotal::testing
