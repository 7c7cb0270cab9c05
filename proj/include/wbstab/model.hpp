#pragma once

// Robot description: kinematic tree with a floating root, revolute joints,
// contact frames and task frames. Models load from a line-oriented text format:
//
//   link <name> mass=<f> com=<x,y,z> inertia=<ixx,iyy,izz,ixy,ixz,iyz>
//   joint <name> <revolute|floating> parent=<link> child=<link> axis=<x,y,z>
//         origin=<x,y,z,qw,qx,qy,qz> limits=<lo,hi> vmax=<f> taumax=<f>
//   contact <name> link=<link> origin=<...> foot=<hx,hy>
//   taskframe <name> link=<link> origin=<...>
//
// The floating joint uses parent=world. Link inertia is the rotational inertia
// about the link frame origin.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wbstab/spatial.hpp"

namespace wbstab::model {

using spatial::SpatialInertia;
using spatial::SpatialMotion;
using spatial::Transform;

/// Position plus unit quaternion, stored exactly as written on disk.
struct Pose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Transform transform() const { return Transform::from_quaternion(position, orientation); }
  static Pose from_transform(const Transform& X);
};

enum class JointType { revolute, floating };

struct Joint {
  std::string name;
  std::string parent_link;
  std::string child_link;
  JointType type = JointType::revolute;
  Vec3 axis = Vec3::UnitZ();
  Pose origin;  // joint frame in the parent link frame
  double lower = 0.0;
  double upper = 0.0;
  double velocity_limit = 0.0;
  double torque_limit = 0.0;
};

struct Link {
  std::string name;
  SpatialInertia inertia;
};

struct ContactFrame {
  std::string name;
  std::string link;
  Pose offset;
  Vec2 half_extents = Vec2::Zero();  // foot rectangle (x, y), metres
};

struct TaskFrame {
  std::string name;
  std::string link;
  Pose offset;
};

/// A frame rigidly attached to a body of the compiled tree.
struct FrameRef {
  int body = 0;
  Transform offset;
};

/// Compiled tree node; bodies are stored parents-first and body 0 is the base.
struct Body {
  int link = 0;
  int parent = -1;
  int joint = -1;  // index into joints(), -1 for the base
  int dof = -1;    // index into the actuated joint vector, -1 for the base
  Vec3 axis = Vec3::UnitZ();
  Transform origin;  // joint frame in the parent body frame
  SpatialInertia inertia;
};

class RobotModel {
 public:
  /// Validates the description and compiles the tree. Throws ValidationError.
  RobotModel(std::vector<Link> links, std::vector<Joint> joints, std::vector<ContactFrame> contacts,
             std::vector<TaskFrame> task_frames);

  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<ContactFrame>& contacts() const { return contacts_; }
  const std::vector<TaskFrame>& task_frames() const { return task_frames_; }
  const std::vector<Body>& bodies() const { return bodies_; }

  int num_actuated() const { return static_cast<int>(actuated_.size()); }
  int num_velocities() const { return 6 + num_actuated(); }
  int num_contacts() const { return static_cast<int>(contacts_.size()); }
  double total_mass() const { return total_mass_; }
  const std::string& base_link() const { return links_[bodies_[0].link].name; }

  /// Joint index for each actuated dof.
  const std::vector<int>& actuated_joints() const { return actuated_; }
  const Joint& actuated_joint(int dof) const { return joints_[actuated_[dof]]; }
  VecX lower_limits() const;
  VecX upper_limits() const;
  VecX velocity_limits() const;
  VecX torque_limits() const;

  /// Resolves a contact frame, task frame or link name.
  FrameRef frame(std::string_view name) const;
  std::optional<int> contact_index(std::string_view name) const;
  int body_of_link(std::string_view link) const;

  bool operator==(const RobotModel& o) const;

 private:
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<ContactFrame> contacts_;
  std::vector<TaskFrame> task_frames_;
  std::vector<Body> bodies_;
  std::vector<int> actuated_;
  std::vector<int> body_of_link_;
  double total_mass_ = 0.0;
};

/// State q = (base pose, joints) and generalized velocity (base twist, joint rates).
/// The base twist is expressed in the base body frame.
struct Configuration {
  Transform base_pose;
  SpatialMotion base_twist;
  VecX joints;
  VecX joint_rates;

  static Configuration zero(const RobotModel& m);

  /// Generalized velocity (base twist, joint rates), length 6 + n_a.
  VecX velocity() const;
  void set_velocity(const VecX& v);
  Eigen::Quaterniond base_quaternion() const { return Eigen::Quaterniond(base_pose.rotation); }

  /// Names of joints outside their position limits (soft check).
  std::vector<std::string> limit_violations(const RobotModel& m) const;
};

RobotModel load_model(std::string_view text);
RobotModel load_model_file(const std::string& path);
std::string serialize(const RobotModel& m);

/// Deterministic 12-dof biped: torso base, two legs of hip yaw/roll/pitch,
/// knee pitch, ankle pitch/roll; 70 kg; contact frames l_sole and r_sole.
RobotModel builtin_biped();

/// Slightly crouched double-support stance of builtin_biped with both soles at
/// height sole_height and the torso upright.
Configuration biped_default_stance(const RobotModel& m, double sole_height = 0.0);

/// Resolves "builtin:biped12" or a file path.
RobotModel resolve_model(const std::string& spec);

}  // namespace wbstab::model
