#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace pivotal {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Planar profile of the manipulated part, seen from the side.
///
/// A plain rectangle is length x width. A stepped profile is two
/// axis-aligned rectangles sharing the bottom edge: a shaft of size
/// l1 x w1 followed by a head of size l2 x w2. The pivot corner sits at
/// the body-frame origin, the length axis is +x, width is +y.
struct Profile {
  enum class Kind { Rect, Stepped };

  Kind kind{Kind::Rect};
  double l{0.0};   // rect length (m)
  double w{0.0};   // rect width (m)
  double l1{0.0};  // stepped: shaft length (m)
  double w1{0.0};  // stepped: shaft width (m)
  double l2{0.0};  // stepped: head length (m)
  double w2{0.0};  // stepped: head width (m)

  static Profile rect(double length, double width) {
    Profile p;
    p.kind = Kind::Rect;
    p.l = length;
    p.w = width;
    return p;
  }

  static Profile stepped(double l1, double w1, double l2, double w2) {
    Profile p;
    p.kind = Kind::Stepped;
    p.l1 = l1;
    p.w1 = w1;
    p.l2 = l2;
    p.w2 = w2;
    return p;
  }

  /// Total extent along the body x axis.
  double length() const {
    return kind == Kind::Rect ? l : l1 + l2;
  }

  /// Extent of the end face touching the wall (corner A lives on it).
  double wall_face_extent() const {
    return kind == Kind::Rect ? w : w1;
  }

  /// Extent of the far end face where the manipulator pushes.
  double push_face_extent() const {
    return kind == Kind::Rect ? w : w2;
  }

  /// Area-weighted centroid in body coordinates.
  Vec2 centroid() const {
    if (kind == Kind::Rect) return {0.5 * l, 0.5 * w};
    const double a1 = l1 * w1;
    const double a2 = l2 * w2;
    const Vec2 c1{0.5 * l1, 0.5 * w1};
    const Vec2 c2{l1 + 0.5 * l2, 0.5 * w2};
    return (a1 * c1 + a2 * c2) / (a1 + a2);
  }

  bool valid() const {
    if (kind == Kind::Rect) return l > 0.0 && w > 0.0;
    return l1 > 0.0 && w1 > 0.0 && l2 > 0.0 && w2 > 0.0;
  }
};

/// Mass, friction, and bound data for one object.
struct ObjectParams {
  std::string name;
  double m{0.0};       // mass (kg)
  double g_mag{9.81};  // gravity magnitude (m/s^2)
  Profile profile;
  double mu_A{0.0};  // wall contact friction
  double mu_B{0.0};  // floor contact friction
  double mu_P{0.0};  // manipulator contact friction
  double f_u{0.0};   // normal force upper bound (N)

  double weight() const { return m * g_mag; }

  void validate() const {
    if (!(m > 0.0)) throw std::invalid_argument("object: mass must be positive");
    if (!(g_mag > 0.0)) throw std::invalid_argument("object: gravity must be positive");
    if (mu_A < 0.0 || mu_B < 0.0 || mu_P < 0.0)
      throw std::invalid_argument("object: friction coefficients must be nonnegative");
    if (!(f_u > 0.0)) throw std::invalid_argument("object: force bound must be positive");
    if (!profile.valid()) throw std::invalid_argument("object: profile dimensions must be positive");
  }
};

/// Body angle against the floor plus the push contact coordinate along
/// the far end face, both in body units.
struct PoseState {
  double theta{0.0};  // rad, in [0, pi/2]
  double p_y{0.0};    // m, in [0, push face extent]
};

/// World-frame contact layout at one pose. The frame translates with the
/// floor corner B, which stays at the origin so moments are taken there.
struct ContactGeometry {
  Vec2 A;  // wall contact corner
  Vec2 B;  // floor contact corner, always (0,0)
  Vec2 P;  // manipulator contact on the far end face
  Vec2 C;  // center of mass
  Mat2 R;  // body -> world rotation
};

inline Mat2 rotation2d(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 R;
  R << c, -s, s, c;
  return R;
}

/// Forward kinematics from pose to contact points.
///
/// Wall on the left: A is the near-face top corner and slides down the
/// wall, B the near-face bottom corner sliding away along the floor, P
/// sits on the far end face whose inward normal is -(cos theta, sin theta).
inline ContactGeometry contact_geometry(const ObjectParams& obj, const PoseState& x) {
  constexpr double kPoseTol = 1e-12;
  const double half_pi = 0.5 * M_PI;
  if (!(x.theta >= -kPoseTol && x.theta <= half_pi + kPoseTol))
    throw std::domain_error("pose: theta outside [0, pi/2]");
  const double face = obj.profile.push_face_extent();
  if (!(x.p_y >= -kPoseTol && x.p_y <= face + kPoseTol))
    throw std::domain_error("pose: p_y outside the push face");

  ContactGeometry g;
  g.R = rotation2d(x.theta);
  g.B = Vec2::Zero();
  g.A = g.R * Vec2(0.0, obj.profile.wall_face_extent());
  g.P = g.R * Vec2(obj.profile.length(), x.p_y);
  g.C = g.R * obj.profile.centroid();
  return g;
}

/// Horizontal world-frame shift of the center of mass produced by a
/// body-frame offset (dx, dy) at body angle theta. The vertical shift
/// never enters the statics because gravity is vertical.
inline double com_offset_world(double dx, double dy, double theta) {
  const double d = std::hypot(dx, dy);
  if (d == 0.0) return 0.0;
  const double theta_d = std::atan2(dy, dx);
  return d * std::cos(theta + theta_d);
}

}  // namespace pivotal
