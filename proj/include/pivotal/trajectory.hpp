#pragma once

#include <string>
#include <vector>

#include "pivotal/mechanics.hpp"
#include "pivotal/object.hpp"

namespace pivotal {

/// Solve bookkeeping carried along with a planned trajectory.
struct TrajectoryStats {
  std::string status;
  int iterations{0};
  double final_delta{0.0};
  double eq_residual{0.0};
  double comp_residual{0.0};
  double objective{0.0};
  double runtime_s{0.0};
};

/// Planned pivoting motion: N+1 poses and N force stages. Stage k acts
/// at the arrival pose k+1; the start pose carries no forces (the part
/// rests flat before the push engages).
struct Trajectory {
  ObjectParams object;
  std::string mode;  // "nominal" | "robust-mass" | "robust-com"
  std::vector<double> theta;           // N+1
  std::vector<double> p_y;             // N+1
  std::vector<Control> controls;       // N
  std::vector<ContactForces> forces;   // N
  std::vector<SlipSlacks> slips;       // N
  TrajectoryStats stats;
  // Worst-case margins embedded by the robust solves (plus direction,
  // minus direction); zero-filled for nominal outputs.
  double worst_plus{0.0};
  double worst_minus{0.0};
  bool cap_active{false};

  int num_steps() const { return static_cast<int>(controls.size()); }

  /// Pose the stage-k forces act at.
  PoseState stage_pose(int k) const { return {theta[k + 1], p_y[k + 1]}; }
};

}  // namespace pivotal
