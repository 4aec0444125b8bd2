#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "opcm/types.hpp"

namespace opcm {

struct PointCloud {
  std::vector<Vec3> points;
  double t = 0.0;
};

/// x -> R x + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }
  /// (this o other)(x) = this(other(x)).
  RigidTransform compose(const RigidTransform& other) const { return {R * other.R, R * other.t + t}; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  /// True when R is orthonormal with det 1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

/// Exact nearest-neighbour search over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  /// Index of the closest point (ties resolve to the lower index) and the
  /// squared distance to it.
  std::pair<std::size_t, double> nearest(const Vec3& query) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::vector<std::size_t>& order, std::size_t begin, std::size_t end, int depth);
  void search(int node, const Vec3& query, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Closed-form least-squares rigid alignment of paired points (Kabsch).
/// Throws NumericalError when the cross-covariance is rank deficient
/// (fewer than three non-collinear pairs).
RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

struct IcpOptions {
  int max_iters = 100;
  /// Stop when the mean correspondence distance changes by less than this.
  double tol = 1e-10;
};

struct IcpResult {
  RigidTransform transform;
  bool converged = false;
  int iterations = 0;
  /// Mean correspondence distance before each Kabsch step.
  std::vector<double> mean_distance;
};

/// Point-to-point ICP; the result maps `src` into the frame of `dst`.
IcpResult icp_register(const PointCloud& src, const PointCloud& dst,
                       const IcpOptions& options = {},
                       const RigidTransform& initial = RigidTransform::identity());

/// Axis-angle of a rotation through its unit quaternion, angle in [0, pi].
Vec3 rotation_log(const Mat3& R);
Mat3 rotation_exp(const Vec3& axis_angle);

/// v = t / dt, w = angle * axis / dt.
std::pair<Vec3, Vec3> transform_to_velocity(const RigidTransform& T, double dt);
/// Inverse of transform_to_velocity for constant velocities over dt.
RigidTransform velocity_to_transform(const Vec3& v, const Vec3& w, double dt);

/// Rigid-body velocity transport into the camera frame:
/// w_cam = R w, v_cam = R v + t x (R w), with `extrinsic` mapping sensor
/// coordinates to camera coordinates.
std::pair<Vec3, Vec3> to_camera_frame(const Vec3& v, const Vec3& w,
                                      const RigidTransform& extrinsic);

/// Random-walk model on (v, w). Process noise is q * dt per step (variance
/// per second), measurement noise r per sample.
struct KalmanConfig {
  double q = 1e-3;
  double r = 1e-1;
  /// Prior covariance scale around a zero-mean prior. The first filtered
  /// sample is z * p0 / (p0 + r).
  double p0 = 1e3;
};

struct KalmanState {
  Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 6> covariance = Eigen::Matrix<double, 6, 6>::Identity();
  Eigen::Matrix<double, 6, 6> process_noise = Eigen::Matrix<double, 6, 6>::Identity();
  Eigen::Matrix<double, 6, 6> measurement_noise = Eigen::Matrix<double, 6, 6>::Identity();
  double t = 0.0;
  bool initialized = false;

  explicit KalmanState(const KalmanConfig& cfg = {});
  /// Predict to z.t and update with z. Joseph-form covariance update.
  void step(const VelocitySample& z);
  VelocitySample estimate() const;
};

/// Filters a time-ordered measurement stream. Throws ValidationError on a
/// decreasing timestamp.
std::vector<VelocitySample> kalman_filter(const std::vector<VelocitySample>& samples,
                                          const KalmanConfig& cfg = {});

/// Velocities from consecutive scans: scan k+1 is registered onto scan k,
/// converted over dt = t_{k+1} - t_k, stamped at the midpoint, transported
/// into the camera frame and Kalman-filtered.
struct VelocityPipelineOptions {
  IcpOptions icp{};
  KalmanConfig kalman{};
  RigidTransform extrinsic{};
  bool filter = true;
};

std::vector<VelocitySample> estimate_velocities(const std::vector<PointCloud>& clouds,
                                                const VelocityPipelineOptions& options = {});

/// PLY (ascii or binary_little_endian with float/double x, y, z) or CSV
/// `x,y,z`, chosen by extension.
PointCloud read_point_cloud(const std::filesystem::path& path);

}  // namespace opcm
