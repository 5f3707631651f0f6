#pragma once

// Reference implementations used only by the tests. Each one walks every node or
// iterates from first principles, sharing no code with the library paths it checks.

#include "vtc/affordance_label.hpp"
#include "vtc/affordance_learn.hpp"
#include "vtc/cloth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using vtc::ClothMesh;
using vtc::GripperBox;
using vtc::Vec2;
using vtc::Vec3;

struct Local {
  double c, a, w;  // closing, approach, width coordinates
};

inline Local local(const GripperBox& g, const Vec3& p) {
  const Vec3 d = p - g.center;
  return {d.dot(g.axes.col(0)), d.dot(g.axes.col(1)), d.dot(g.axes.col(2))};
}

inline bool boundary_node(const ClothMesh& mesh, std::size_t n) {
  const auto& p = mesh.params();
  const Vec2 uv = mesh.undeformed()[n];
  const double du = std::min(uv.x(), p.width_m - uv.x());
  const double dv = std::min(uv.y(), p.height_m - uv.y());
  return std::min(du, dv) <= p.edge_band_m || (du <= p.corner_band_m && dv <= p.corner_band_m);
}

inline bool in_opening(const GripperBox& g, const Local& l) {
  return std::abs(l.c) <= 0.5 * g.geom.opening_w && std::abs(l.a) <= 0.5 * g.geom.finger_len &&
         std::abs(l.w) <= 0.5 * g.geom.finger_depth;
}

inline double edge_percentage(const ClothMesh& mesh, const GripperBox& g) {
  int inside = 0, boundary = 0;
  for (std::size_t n = 0; n < mesh.size(); ++n) {
    if (!in_opening(g, local(g, mesh.positions()[n]))) continue;
    ++inside;
    boundary += boundary_node(mesh, n) ? 1 : 0;
  }
  return inside == 0 ? 0.0 : static_cast<double>(boundary) / inside;
}

inline bool collision_free(const ClothMesh& mesh, const GripperBox& g) {
  const auto& gg = g.geom;
  for (const Vec3& p : mesh.positions()) {
    const Local l = local(g, p);
    const double c = std::abs(l.c);
    if (c > 0.5 * gg.opening_w && c <= 0.5 * gg.opening_w + gg.finger_thickness &&
        std::abs(l.a) <= 0.5 * gg.finger_len && std::abs(l.w) <= 0.5 * gg.finger_depth) {
      return false;
    }
  }
  return true;
}

inline bool single_layer(const ClothMesh& mesh, const GripperBox& g, const vtc::LabelParams& lp) {
  const auto& gg = g.geom;
  const double radius = lp.capture_factor * mesh.params().spacing();
  const double adj = lp.adjacency_factor * mesh.params().spacing();
  bool any = false;
  for (int i = 0; i < lp.ray_grid; ++i) {
    for (int j = 0; j < lp.ray_grid; ++j) {
      const double ra = -0.5 * gg.finger_len + (i + 0.5) * gg.finger_len / lp.ray_grid;
      const double rw = -0.5 * gg.finger_depth + (j + 0.5) * gg.finger_depth / lp.ray_grid;
      std::vector<std::size_t> captured;
      for (std::size_t n = 0; n < mesh.size(); ++n) {
        const Local l = local(g, mesh.positions()[n]);
        if (std::abs(l.c) > 0.5 * gg.opening_w) continue;
        if (std::hypot(l.a - ra, l.w - rw) <= radius) captured.push_back(n);
      }
      any = any || !captured.empty();
      for (std::size_t p : captured) {
        for (std::size_t q : captured) {
          if ((mesh.undeformed()[p] - mesh.undeformed()[q]).norm() > adj) return false;
        }
      }
    }
  }
  return any;
}

inline bool reachable(const ClothMesh& mesh, const GripperBox& g, const vtc::LabelParams& lp) {
  const auto& gg = g.geom;
  const double hl = 0.5 * gg.finger_len;
  for (const Vec3& p : mesh.positions()) {
    const Local l = local(g, p);
    const bool swept = std::abs(l.c) <= 0.5 * gg.opening_w + gg.finger_thickness &&
                       std::abs(l.w) <= 0.5 * gg.finger_depth && l.a >= -hl - lp.sweep_m && l.a <= hl;
    if (swept && !in_opening(g, l)) return false;
  }
  return true;
}

/// Joseph-form value iteration: the cost-to-go of the greedy policy, iterated until the
/// gain stops moving.
inline Eigen::MatrixXd dare_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                 const Eigen::MatrixXd& R, int max_iter = 1000000) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(A.rows(), A.cols());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(B.cols(), A.rows());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd Kn = (R + B.transpose() * P * B).inverse() * (B.transpose() * P * A);
    const Eigen::MatrixXd Acl = A - B * Kn;
    const Eigen::MatrixXd Pn = Q + Kn.transpose() * R * Kn + Acl.transpose() * P * Acl;
    const double dk = (Kn - K).cwiseAbs().maxCoeff();
    const double dp = (Pn - P).cwiseAbs().maxCoeff() / std::max(1.0, Pn.cwiseAbs().maxCoeff());
    P = 0.5 * (Pn + Pn.transpose());
    K = Kn;
    if (it > 10 && dk < 1e-13 && dp < 1e-14) break;
  }
  return K;
}

/// Central finite-difference gradient of the batch loss.
inline std::vector<double> numeric_gradient(vtc::PatchRegressor& model, const std::vector<const double*>& patches,
                                            const std::vector<double>& targets, double h,
                                            const std::vector<std::size_t>& which) {
  std::vector<double> out;
  std::vector<double> scratch;
  for (std::size_t i : which) {
    double& p = model.parameters()[i];
    const double saved = p;
    p = saved + h;
    const double up = model.loss_and_gradient(patches, targets, scratch);
    p = saved - h;
    const double down = model.loss_and_gradient(patches, targets, scratch);
    p = saved;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

}  // namespace oracle
