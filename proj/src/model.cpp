#include "wbstab/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "wbstab/errors.hpp"
#include "wbstab/text.hpp"

namespace wbstab::model {

namespace {

constexpr char kWorld[] = "world";

Pose parse_pose(const text::Line& line, const std::string& key) {
  const auto v = line.list_of(key, 7);
  Pose p;
  p.position = Vec3(v[0], v[1], v[2]);
  p.orientation = Eigen::Quaterniond(v[3], v[4], v[5], v[6]);
  if (std::abs(p.orientation.norm() - 1.0) > 1e-9)
    throw ParseError(line.number, "'" + key + "' quaternion is not unit length");
  return p;
}

std::string format_pose(const Pose& p) {
  const double v[7] = {p.position.x(),    p.position.y(),    p.position.z(),   p.orientation.w(),
                       p.orientation.x(), p.orientation.y(), p.orientation.z()};
  return text::format_list(v, 7);
}

std::string format_vec3(const Vec3& v) { return text::format_list(v.data(), 3); }

}  // namespace

Pose Pose::from_transform(const Transform& X) {
  Pose p;
  p.position = X.translation;
  p.orientation = Eigen::Quaterniond(X.rotation).normalized();
  return p;
}

RobotModel::RobotModel(std::vector<Link> links, std::vector<Joint> joints, std::vector<ContactFrame> contacts,
                       std::vector<TaskFrame> task_frames)
    : links_(std::move(links)),
      joints_(std::move(joints)),
      contacts_(std::move(contacts)),
      task_frames_(std::move(task_frames)) {
  std::map<std::string, int> link_index;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link& l = links_[i];
    if (!link_index.emplace(l.name, static_cast<int>(i)).second)
      throw ValidationError("duplicate link name '" + l.name + "'");
    if (!(l.inertia.mass > 0.0)) throw ValidationError("link '" + l.name + "' has nonpositive mass");
    if (!l.inertia.valid()) throw ValidationError("link '" + l.name + "' has an invalid inertia");
  }
  if (links_.empty()) throw ValidationError("model has no links");

  std::set<std::string> joint_names;
  int floating = -1;
  std::vector<int> parent_joint(links_.size(), -1);
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const Joint& jt = joints_[j];
    if (!joint_names.insert(jt.name).second) throw ValidationError("duplicate joint name '" + jt.name + "'");
    if (jt.type == JointType::floating) {
      if (floating >= 0) throw ValidationError("multiple floating joints");
      floating = static_cast<int>(j);
      if (jt.parent_link != kWorld)
        throw ValidationError("floating joint '" + jt.name + "' must be the tree root (parent=world)");
    } else {
      if (jt.parent_link == kWorld)
        throw ValidationError("revolute joint '" + jt.name + "' cannot attach to world");
      if (!link_index.count(jt.parent_link))
        throw ValidationError("joint '" + jt.name + "' references unknown link '" + jt.parent_link + "'");
      if (!(jt.lower < jt.upper)) throw ValidationError("joint '" + jt.name + "' needs lower < upper");
      if (!(jt.velocity_limit > 0.0)) throw ValidationError("joint '" + jt.name + "' needs vmax > 0");
      if (!(jt.torque_limit > 0.0)) throw ValidationError("joint '" + jt.name + "' needs taumax > 0");
      if (std::abs(jt.axis.norm() - 1.0) > 1e-9) throw ValidationError("joint '" + jt.name + "' axis is not unit");
    }
    const auto child = link_index.find(jt.child_link);
    if (child == link_index.end())
      throw ValidationError("joint '" + jt.name + "' references unknown link '" + jt.child_link + "'");
    if (parent_joint[child->second] >= 0)
      throw ValidationError("link '" + jt.child_link + "' has more than one parent joint");
    parent_joint[child->second] = static_cast<int>(j);
  }
  if (floating < 0) throw ValidationError("model has no floating joint");

  // Compile parents-first from the root.
  const int root = link_index.at(joints_[floating].child_link);
  std::vector<std::vector<int>> children(links_.size());
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    if (static_cast<int>(j) == floating) continue;
    children[link_index.at(joints_[j].parent_link)].push_back(static_cast<int>(j));
  }
  body_of_link_.assign(links_.size(), -1);
  Body base;
  base.link = root;
  base.inertia = links_[root].inertia;
  bodies_.push_back(base);
  body_of_link_[root] = 0;
  // depth-first, children in file order
  std::vector<std::pair<int, std::size_t>> dfs{{0, 0}};
  while (!dfs.empty()) {
    auto& [b, next] = dfs.back();
    const int link = bodies_[b].link;
    if (next >= children[link].size()) {
      dfs.pop_back();
      continue;
    }
    const int j = children[link][next++];
    const int child = link_index.at(joints_[j].child_link);
    if (body_of_link_[child] >= 0) throw ValidationError("kinematic tree contains a cycle");
    Body body;
    body.link = child;
    body.parent = b;
    body.joint = j;
    body.axis = joints_[j].axis;
    body.origin = joints_[j].origin.transform();
    body.inertia = links_[child].inertia;
    bodies_.push_back(body);
    body_of_link_[child] = static_cast<int>(bodies_.size()) - 1;
    dfs.emplace_back(static_cast<int>(bodies_.size()) - 1, 0);
  }
  for (std::size_t l = 0; l < links_.size(); ++l)
    if (body_of_link_[l] < 0) throw ValidationError("disconnected tree: link '" + links_[l].name + "'");

  // Actuated dofs in file order.
  std::vector<int> dof_of_joint(joints_.size(), -1);
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    if (joints_[j].type == JointType::revolute) {
      dof_of_joint[j] = static_cast<int>(actuated_.size());
      actuated_.push_back(static_cast<int>(j));
    }
  }
  for (Body& b : bodies_)
    if (b.joint >= 0) b.dof = dof_of_joint[b.joint];

  for (const Link& l : links_) total_mass_ += l.inertia.mass;

  std::set<std::string> frame_names;
  for (const ContactFrame& c : contacts_) {
    if (!frame_names.insert(c.name).second) throw ValidationError("duplicate frame name '" + c.name + "'");
    if (!link_index.count(c.link)) throw ValidationError("contact '" + c.name + "' references unknown link");
    if (!(c.half_extents.x() > 0.0 && c.half_extents.y() > 0.0))
      throw ValidationError("contact '" + c.name + "' needs positive foot half extents");
  }
  for (const TaskFrame& t : task_frames_) {
    if (!frame_names.insert(t.name).second) throw ValidationError("duplicate frame name '" + t.name + "'");
    if (!link_index.count(t.link)) throw ValidationError("task frame '" + t.name + "' references unknown link");
  }
}

VecX RobotModel::lower_limits() const {
  VecX v(num_actuated());
  for (int i = 0; i < num_actuated(); ++i) v[i] = actuated_joint(i).lower;
  return v;
}
VecX RobotModel::upper_limits() const {
  VecX v(num_actuated());
  for (int i = 0; i < num_actuated(); ++i) v[i] = actuated_joint(i).upper;
  return v;
}
VecX RobotModel::velocity_limits() const {
  VecX v(num_actuated());
  for (int i = 0; i < num_actuated(); ++i) v[i] = actuated_joint(i).velocity_limit;
  return v;
}
VecX RobotModel::torque_limits() const {
  VecX v(num_actuated());
  for (int i = 0; i < num_actuated(); ++i) v[i] = actuated_joint(i).torque_limit;
  return v;
}

int RobotModel::body_of_link(std::string_view link) const {
  for (std::size_t l = 0; l < links_.size(); ++l)
    if (links_[l].name == link) return body_of_link_[l];
  throw UnknownFrameError(std::string(link));
}

FrameRef RobotModel::frame(std::string_view name) const {
  for (const ContactFrame& c : contacts_)
    if (c.name == name) return {body_of_link(c.link), c.offset.transform()};
  for (const TaskFrame& t : task_frames_)
    if (t.name == name) return {body_of_link(t.link), t.offset.transform()};
  for (std::size_t l = 0; l < links_.size(); ++l)
    if (links_[l].name == name) return {body_of_link_[l], Transform::identity()};
  throw UnknownFrameError(std::string(name));
}

std::optional<int> RobotModel::contact_index(std::string_view name) const {
  for (std::size_t i = 0; i < contacts_.size(); ++i)
    if (contacts_[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

namespace {
bool same_pose(const Pose& a, const Pose& b) {
  return a.position == b.position && a.orientation.coeffs() == b.orientation.coeffs();
}
}  // namespace

bool RobotModel::operator==(const RobotModel& o) const {
  if (links_.size() != o.links_.size() || joints_.size() != o.joints_.size() ||
      contacts_.size() != o.contacts_.size() || task_frames_.size() != o.task_frames_.size())
    return false;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link &a = links_[i], &b = o.links_[i];
    if (a.name != b.name || a.inertia.mass != b.inertia.mass || a.inertia.com != b.inertia.com ||
        a.inertia.rot_inertia != b.inertia.rot_inertia)
      return false;
  }
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const Joint &a = joints_[i], &b = o.joints_[i];
    if (a.name != b.name || a.parent_link != b.parent_link || a.child_link != b.child_link || a.type != b.type ||
        a.axis != b.axis || !same_pose(a.origin, b.origin) || a.lower != b.lower || a.upper != b.upper ||
        a.velocity_limit != b.velocity_limit || a.torque_limit != b.torque_limit)
      return false;
  }
  for (std::size_t i = 0; i < contacts_.size(); ++i) {
    const ContactFrame &a = contacts_[i], &b = o.contacts_[i];
    if (a.name != b.name || a.link != b.link || !same_pose(a.offset, b.offset) || a.half_extents != b.half_extents)
      return false;
  }
  for (std::size_t i = 0; i < task_frames_.size(); ++i) {
    const TaskFrame &a = task_frames_[i], &b = o.task_frames_[i];
    if (a.name != b.name || a.link != b.link || !same_pose(a.offset, b.offset)) return false;
  }
  return true;
}

Configuration Configuration::zero(const RobotModel& m) {
  Configuration q;
  q.joints = VecX::Zero(m.num_actuated());
  q.joint_rates = VecX::Zero(m.num_actuated());
  return q;
}

VecX Configuration::velocity() const {
  VecX v(6 + joint_rates.size());
  v << base_twist.angular, base_twist.linear, joint_rates;
  return v;
}

void Configuration::set_velocity(const VecX& v) {
  base_twist.angular = v.segment<3>(0);
  base_twist.linear = v.segment<3>(3);
  joint_rates = v.tail(v.size() - 6);
}

std::vector<std::string> Configuration::limit_violations(const RobotModel& m) const {
  std::vector<std::string> out;
  for (int i = 0; i < m.num_actuated(); ++i) {
    const Joint& j = m.actuated_joint(i);
    if (joints[i] < j.lower || joints[i] > j.upper) out.push_back(j.name);
  }
  return out;
}

RobotModel load_model(std::string_view source) {
  const auto lines = text::tokenize(source);
  if (lines.empty()) throw ParseError(1, "empty model file");

  std::vector<Link> links;
  std::vector<Joint> joints;
  std::vector<ContactFrame> contacts;
  std::vector<TaskFrame> tasks;
  for (const text::Line& line : lines) {
    const auto& w = line.words;
    if (w.size() < 2) throw ParseError(line.number, "expected '<keyword> <name>'");
    const std::string& kind = w[0];
    if (kind == "link") {
      if (w.size() != 2) throw ParseError(line.number, "unexpected token after link name");
      Link l;
      l.name = w[1];
      l.inertia.mass = line.number_of("mass");
      const auto c = line.list_of("com", 3);
      l.inertia.com = Vec3(c[0], c[1], c[2]);
      const auto i = line.list_of("inertia", 6);
      l.inertia.rot_inertia << i[0], i[3], i[4], i[3], i[1], i[5], i[4], i[5], i[2];
      links.push_back(std::move(l));
    } else if (kind == "joint") {
      if (w.size() != 3) throw ParseError(line.number, "joint needs '<name> <revolute|floating>'");
      Joint j;
      j.name = w[1];
      if (w[2] == "revolute") {
        j.type = JointType::revolute;
      } else if (w[2] == "floating") {
        j.type = JointType::floating;
      } else {
        throw ParseError(line.number, "unknown joint type '" + w[2] + "'");
      }
      j.parent_link = line.get("parent");
      j.child_link = line.get("child");
      if (j.type == JointType::revolute) {
        const auto a = line.list_of("axis", 3);
        j.axis = Vec3(a[0], a[1], a[2]);
        j.origin = parse_pose(line, "origin");
        const auto lim = line.list_of("limits", 2);
        j.lower = lim[0];
        j.upper = lim[1];
        j.velocity_limit = line.number_of("vmax");
        j.torque_limit = line.number_of("taumax");
      } else if (line.has("origin")) {
        j.origin = parse_pose(line, "origin");
      }
      joints.push_back(std::move(j));
    } else if (kind == "contact") {
      if (w.size() != 2) throw ParseError(line.number, "unexpected token after contact name");
      ContactFrame c;
      c.name = w[1];
      c.link = line.get("link");
      c.offset = parse_pose(line, "origin");
      const auto f = line.list_of("foot", 2);
      c.half_extents = Vec2(f[0], f[1]);
      contacts.push_back(std::move(c));
    } else if (kind == "taskframe") {
      if (w.size() != 2) throw ParseError(line.number, "unexpected token after taskframe name");
      TaskFrame t;
      t.name = w[1];
      t.link = line.get("link");
      t.offset = parse_pose(line, "origin");
      tasks.push_back(std::move(t));
    } else {
      throw ParseError(line.number, "unknown keyword '" + kind + "'");
    }
  }
  return RobotModel(std::move(links), std::move(joints), std::move(contacts), std::move(tasks));
}

RobotModel load_model_file(const std::string& path) { return load_model(text::read_file(path)); }

std::string serialize(const RobotModel& m) {
  std::string out;
  for (const Link& l : m.links()) {
    const Mat3& I = l.inertia.rot_inertia;
    const double in[6] = {I(0, 0), I(1, 1), I(2, 2), I(0, 1), I(0, 2), I(1, 2)};
    out += "link " + l.name + " mass=" + text::format_double(l.inertia.mass) + " com=" + format_vec3(l.inertia.com) +
           " inertia=" + text::format_list(in, 6) + "\n";
  }
  for (const Joint& j : m.joints()) {
    if (j.type == JointType::floating) {
      out += "joint " + j.name + " floating parent=" + j.parent_link + " child=" + j.child_link +
             " origin=" + format_pose(j.origin) + "\n";
      continue;
    }
    const double lim[2] = {j.lower, j.upper};
    out += "joint " + j.name + " revolute parent=" + j.parent_link + " child=" + j.child_link +
           " axis=" + format_vec3(j.axis) + " origin=" + format_pose(j.origin) + " limits=" + text::format_list(lim, 2) +
           " vmax=" + text::format_double(j.velocity_limit) + " taumax=" + text::format_double(j.torque_limit) + "\n";
  }
  for (const ContactFrame& c : m.contacts())
    out += "contact " + c.name + " link=" + c.link + " origin=" + format_pose(c.offset) +
           " foot=" + text::format_list(c.half_extents.data(), 2) + "\n";
  for (const TaskFrame& t : m.task_frames())
    out += "taskframe " + t.name + " link=" + t.link + " origin=" + format_pose(t.offset) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// builtin biped

namespace {

constexpr double kHipDrop = 0.1;
constexpr double kHipWidth = 0.1;
constexpr double kThigh = 0.4;
constexpr double kShank = 0.4;
constexpr double kSoleDrop = 0.08;
constexpr double kStanceHip = -0.5;
constexpr double kStanceKnee = 1.0;

Link make_link(const std::string& name, double mass, const Vec3& com, const Vec3& principal) {
  return {name, SpatialInertia::from_com_inertia(mass, com, principal.asDiagonal())};
}

Joint make_joint(const std::string& name, const std::string& parent, const std::string& child, const Vec3& axis,
                 const Vec3& origin, double lo, double hi, double vmax, double taumax) {
  Joint j;
  j.name = name;
  j.parent_link = parent;
  j.child_link = child;
  j.axis = axis;
  j.origin.position = origin;
  j.lower = lo;
  j.upper = hi;
  j.velocity_limit = vmax;
  j.torque_limit = taumax;
  return j;
}

}  // namespace

RobotModel builtin_biped() {
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::vector<ContactFrame> contacts;
  std::vector<TaskFrame> tasks;

  links.push_back(make_link("torso", 38.0, Vec3(-0.04, 0.0, 0.22), Vec3(1.65, 1.43, 0.79)));
  Joint root;
  root.name = "root";
  root.type = JointType::floating;
  root.parent_link = "world";
  root.child_link = "torso";
  joints.push_back(root);

  for (const char* side : {"l", "r"}) {
    const std::string s(side);
    const double y = s == "l" ? kHipWidth : -kHipWidth;
    links.push_back(make_link(s + "_hip_yaw_link", 1.0, Vec3(0.0, 0.0, -0.02), Vec3(0.002, 0.002, 0.002)));
    links.push_back(make_link(s + "_hip_roll_link", 1.5, Vec3::Zero(), Vec3(0.003, 0.003, 0.003)));
    links.push_back(make_link(s + "_thigh", 7.0, Vec3(0.0, 0.0, -0.18), Vec3(0.1, 0.1, 0.015)));
    links.push_back(make_link(s + "_shank", 4.0, Vec3(0.0, 0.0, -0.18), Vec3(0.05, 0.05, 0.008)));
    links.push_back(make_link(s + "_ankle_link", 0.5, Vec3::Zero(), Vec3(0.0008, 0.0008, 0.0008)));
    links.push_back(make_link(s + "_foot", 2.0, Vec3(0.02, 0.0, -0.05), Vec3(0.003, 0.0102, 0.012)));

    joints.push_back(make_joint(s + "_hip_yaw", "torso", s + "_hip_yaw_link", Vec3::UnitZ(), Vec3(0.0, y, -kHipDrop),
                                -0.8, 0.8, 10.0, 200.0));
    joints.push_back(make_joint(s + "_hip_roll", s + "_hip_yaw_link", s + "_hip_roll_link", Vec3::UnitX(),
                                Vec3::Zero(), -0.5, 0.5, 10.0, 300.0));
    joints.push_back(make_joint(s + "_hip_pitch", s + "_hip_roll_link", s + "_thigh", Vec3::UnitY(), Vec3::Zero(),
                                -1.8, 0.8, 10.0, 300.0));
    joints.push_back(make_joint(s + "_knee", s + "_thigh", s + "_shank", Vec3::UnitY(), Vec3(0.0, 0.0, -kThigh), 0.0,
                                2.4, 10.0, 400.0));
    joints.push_back(make_joint(s + "_ankle_pitch", s + "_shank", s + "_ankle_link", Vec3::UnitY(),
                                Vec3(0.0, 0.0, -kShank), -1.0, 1.0, 10.0, 200.0));
    joints.push_back(make_joint(s + "_ankle_roll", s + "_ankle_link", s + "_foot", Vec3::UnitX(), Vec3::Zero(), -0.6,
                                0.6, 10.0, 200.0));

    ContactFrame c;
    c.name = s + "_sole";
    c.link = s + "_foot";
    c.offset.position = Vec3(0.0, 0.0, -kSoleDrop);
    c.half_extents = Vec2(0.11, 0.055);
    contacts.push_back(c);
  }

  TaskFrame head;
  head.name = "head";
  head.link = "torso";
  head.offset.position = Vec3(0.0, 0.0, 0.5);
  tasks.push_back(head);

  return RobotModel(std::move(links), std::move(joints), std::move(contacts), std::move(tasks));
}

Configuration biped_default_stance(const RobotModel& m, double sole_height) {
  Configuration q = Configuration::zero(m);
  for (int i = 0; i < m.num_actuated(); ++i) {
    const std::string& name = m.actuated_joint(i).name;
    if (name.ends_with("hip_pitch")) q.joints[i] = kStanceHip;
    if (name.ends_with("knee")) q.joints[i] = kStanceKnee;
    if (name.ends_with("ankle_pitch")) q.joints[i] = kStanceHip;
  }
  const double leg = kThigh * std::cos(kStanceHip) + kShank * std::cos(kStanceKnee + kStanceHip);
  q.base_pose.translation = Vec3(0.0, 0.0, sole_height + kSoleDrop + leg + kHipDrop);
  return q;
}

RobotModel resolve_model(const std::string& spec) {
  if (spec == "builtin:biped12" || spec == "biped12") return builtin_biped();
  return load_model_file(spec);
}

}  // namespace wbstab::model
