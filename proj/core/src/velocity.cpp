#include "opcm/velocity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "opcm/error.hpp"

namespace opcm {

bool RigidTransform::is_valid(double tol) const {
  if (!R.allFinite() || !t.allFinite()) return false;
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

// ------------------------------------------------------------------ k-d tree

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw ValidationError("k-d tree needs at least one point");
  std::vector<std::size_t> order(points_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nodes_.reserve(points_.size());
  root_ = build(order, 0, order.size(), 0);
}

int KdTree::build(std::vector<std::size_t>& order, std::size_t begin, std::size_t end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(mid),
                   order.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     const double pa = points_[a][axis];
                     const double pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({order[mid], axis, -1, -1});
  const int left = build(order, begin, mid, depth + 1);
  const int right = build(order, mid + 1, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& query, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const double d2 = (points_[n.point] - query).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best = n.point;
    best_d2 = d2;
  }
  const double diff = query[n.axis] - points_[n.point][n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, query, best, best_d2);
  // <= keeps equal-distance candidates on the far side reachable for the
  // lower-index tie rule.
  if (diff * diff <= best_d2) search(far, query, best, best_d2);
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& query) const {
  std::size_t best = points_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_d2);
  return {best, best_d2};
}

// -------------------------------------------------------------- registration

RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw ValidationError("kabsch: point sets differ in size");
  if (src.size() < 3) throw NumericalError("degenerate geometry: fewer than 3 point pairs");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) H += (src[i] - cs) * (dst[i] - cd).transpose();
  const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
    throw NumericalError("degenerate geometry: rank-deficient cross-covariance");
  }
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform T;
  T.R = V * D * U.transpose();
  T.t = cd - T.R * cs;
  return T;
}

IcpResult icp_register(const PointCloud& src, const PointCloud& dst, const IcpOptions& options,
                       const RigidTransform& initial) {
  if (src.points.size() < 3 || dst.points.size() < 3) {
    throw NumericalError("degenerate geometry: ICP needs at least 3 points per cloud");
  }
  const KdTree tree(dst.points);
  IcpResult result;
  result.transform = initial;
  std::vector<Vec3> moved(src.points.size());
  std::vector<Vec3> matched(src.points.size());
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iters; ++it) {
    double total = 0.0;
    for (std::size_t i = 0; i < src.points.size(); ++i) {
      moved[i] = result.transform.apply(src.points[i]);
      const auto [j, d2] = tree.nearest(moved[i]);
      matched[i] = dst.points[j];
      total += std::sqrt(d2);
    }
    const double mean = total / static_cast<double>(src.points.size());
    result.mean_distance.push_back(mean);
    if (std::abs(previous - mean) < options.tol) {
      result.converged = true;
      break;
    }
    previous = mean;
    result.transform = kabsch(moved, matched).compose(result.transform);
    result.iterations = it + 1;
  }
  return result;
}

// ---------------------------------------------------------------- kinematics

Vec3 rotation_log(const Mat3& R) {
  const Eigen::AngleAxisd aa{Eigen::Quaterniond(R).normalized()};
  return aa.angle() * aa.axis();
}

Mat3 rotation_exp(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

std::pair<Vec3, Vec3> transform_to_velocity(const RigidTransform& T, double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  return {T.t / dt, rotation_log(T.R) / dt};
}

RigidTransform velocity_to_transform(const Vec3& v, const Vec3& w, double dt) {
  return {rotation_exp(w * dt), v * dt};
}

std::pair<Vec3, Vec3> to_camera_frame(const Vec3& v, const Vec3& w,
                                      const RigidTransform& extrinsic) {
  const Vec3 wc = extrinsic.R * w;
  return {extrinsic.R * v + extrinsic.t.cross(wc), wc};
}

// -------------------------------------------------------------------- Kalman

KalmanState::KalmanState(const KalmanConfig& cfg) {
  if (!(cfg.q > 0.0) || !(cfg.r > 0.0) || !(cfg.p0 > 0.0)) {
    throw ValidationError("Kalman noise scales must be positive");
  }
  covariance *= cfg.p0;
  process_noise *= cfg.q;
  measurement_noise *= cfg.r;
}

void KalmanState::step(const VelocitySample& z) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  if (initialized) {
    const double dt = z.t - t;
    if (dt < 0.0) throw ValidationError("Kalman measurements must be time-ordered");
    covariance += process_noise * dt;
  }
  Eigen::Matrix<double, 6, 1> meas;
  meas << z.v, z.w;
  const Mat6 S = covariance + measurement_noise;
  const Mat6 K = S.llt().solve(covariance).transpose();
  mean += K * (meas - mean);
  const Mat6 IK = Mat6::Identity() - K;
  covariance = IK * covariance * IK.transpose() + K * measurement_noise * K.transpose();
  covariance = 0.5 * (covariance + covariance.transpose());
  t = z.t;
  initialized = true;
}

VelocitySample KalmanState::estimate() const {
  return {t, mean.head<3>(), mean.tail<3>()};
}

std::vector<VelocitySample> kalman_filter(const std::vector<VelocitySample>& samples,
                                          const KalmanConfig& cfg) {
  KalmanState state(cfg);
  std::vector<VelocitySample> out;
  out.reserve(samples.size());
  for (const auto& z : samples) {
    state.step(z);
    out.push_back(state.estimate());
  }
  return out;
}

std::vector<VelocitySample> estimate_velocities(const std::vector<PointCloud>& clouds,
                                                const VelocityPipelineOptions& options) {
  if (clouds.size() < 2) throw ValidationError("need at least two point clouds");
  std::vector<VelocitySample> raw;
  raw.reserve(clouds.size() - 1);
  for (std::size_t k = 0; k + 1 < clouds.size(); ++k) {
    const double dt = clouds[k + 1].t - clouds[k].t;
    if (!(dt > 0.0)) throw ValidationError("point-cloud timestamps must strictly increase");
    const IcpResult reg = icp_register(clouds[k + 1], clouds[k], options.icp);
    const auto [v, w] = transform_to_velocity(reg.transform, dt);
    const auto [vc, wc] = to_camera_frame(v, w, options.extrinsic);
    raw.push_back({0.5 * (clouds[k].t + clouds[k + 1].t), vc, wc});
  }
  return options.filter ? kalman_filter(raw, options.kalman) : raw;
}

// --------------------------------------------------------------- point I/O

namespace {

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "float" || type == "int32" || type == "uint32" ||
      type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  throw FormatError("unsupported PLY property type '" + type + "'");
}

double ply_read_scalar(const char* p, const std::string& type) {
  const auto get = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (type == "float" || type == "float32") return get(float{});
  if (type == "double" || type == "float64") return get(double{});
  if (type == "char" || type == "int8") return get(std::int8_t{});
  if (type == "uchar" || type == "uint8") return get(std::uint8_t{});
  if (type == "short" || type == "int16") return get(std::int16_t{});
  if (type == "ushort" || type == "uint16") return get(std::uint16_t{});
  if (type == "int" || type == "int32") return get(std::int32_t{});
  return get(std::uint32_t{});
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw FormatError("missing PLY magic in " + path.string());
  std::string format;
  std::size_t count = 0;
  bool in_vertex = false;
  bool vertex_seen = false;
  std::vector<std::pair<std::string, std::string>> props;  // (type, name)
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      ls >> format;
    } else if (word == "element") {
      std::string name;
      ls >> name;
      if (vertex_seen && name != "vertex") {
        in_vertex = false;
        continue;
      }
      if (name == "vertex") {
        ls >> count;
        in_vertex = vertex_seen = true;
      } else {
        throw FormatError("PLY: the vertex element must come first");
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw FormatError("PLY: list properties on vertices are not supported");
      ls >> name;
      props.emplace_back(type, name);
    }
  }
  if (!vertex_seen) throw FormatError("PLY: no vertex element");
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].second == "x") ix = static_cast<int>(i);
    if (props[i].second == "y") iy = static_cast<int>(i);
    if (props[i].second == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("PLY: vertex needs x, y and z");
  PointCloud cloud;
  cloud.points.reserve(count);
  if (format == "ascii") {
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw FormatError("PLY: truncated vertex list");
      std::istringstream ls(line);
      std::vector<double> vals(props.size());
      for (auto& v : vals) {
        if (!(ls >> v)) throw FormatError("PLY: malformed vertex line " + std::to_string(k));
      }
      cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    }
  } else if (format == "binary_little_endian") {
    std::vector<std::size_t> offset(props.size());
    std::size_t stride = 0;
    for (std::size_t i = 0; i < props.size(); ++i) {
      offset[i] = stride;
      stride += ply_type_size(props[i].first);
    }
    std::vector<char> rec(stride);
    for (std::size_t k = 0; k < count; ++k) {
      if (!in.read(rec.data(), static_cast<std::streamsize>(stride))) {
        throw FormatError("PLY: truncated binary vertex data");
      }
      cloud.points.emplace_back(ply_read_scalar(rec.data() + offset[ix], props[ix].first),
                                ply_read_scalar(rec.data() + offset[iy], props[iy].first),
                                ply_read_scalar(rec.data() + offset[iz], props[iz].first));
    }
  } else {
    throw FormatError("PLY: unsupported format '" + format + "'");
  }
  return cloud;
}

PointCloud read_xyz_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError("expected x,y,z", line_no);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace

PointCloud read_point_cloud(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  PointCloud cloud = ext == ".ply" ? read_ply(path) : read_xyz_csv(path);
  for (const Vec3& p : cloud.points) {
    if (!p.allFinite()) throw ValidationError("non-finite point in " + path.string());
  }
  if (cloud.points.empty()) throw ValidationError("empty point cloud " + path.string());
  return cloud;
}

}  // namespace opcm
