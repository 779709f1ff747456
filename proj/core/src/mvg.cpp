#include "streetside/mvg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "streetside/error.hpp"

namespace streetside::mvg {
namespace {

constexpr double kMinParallaxRad = 1e-6;

struct Consensus {
  std::vector<std::size_t> inliers;
  double total_error = 0.0;
};

Consensus score_model(const Eigen::Matrix3d& E, const std::vector<NormalizedMatch>& ms,
                      double threshold_sq) {
  Consensus c;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double err = sampson_error(E, ms[i]);
    if (err <= threshold_sq) {
      c.inliers.push_back(i);
      c.total_error += err;
    }
  }
  return c;
}

bool better(const Consensus& a, const Consensus& b) {
  if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
  return a.total_error < b.total_error;
}

int required_iterations(std::size_t inliers, std::size_t total, double confidence, int cap) {
  const double w = double(inliers) / double(total);
  const double all_good = std::pow(w, 5);
  if (all_good >= 1.0) return 1;
  if (all_good <= 0.0) return cap;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - all_good);
  if (!std::isfinite(n) || n > cap) return cap;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

// DLT on a 4x4 system; returns the homogeneous solution.
Eigen::Vector4d dlt(const Mat34& P0, const Mat34& Pc, const NormalizedMatch& m) {
  Eigen::Matrix4d A;
  A.row(0) = m.x0(0) * P0.row(2) - m.x0(2) * P0.row(0);
  A.row(1) = m.x0(1) * P0.row(2) - m.x0(2) * P0.row(1);
  A.row(2) = m.xc(0) * Pc.row(2) - m.xc(2) * Pc.row(0);
  A.row(3) = m.xc(1) * Pc.row(2) - m.xc(2) * Pc.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  return svd.matrixV().col(3);
}

bool in_front_of_both(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                      const NormalizedMatch& m) {
  Mat34 P0 = Mat34::Zero();
  P0.leftCols<3>().setIdentity();
  Mat34 Pc;
  Pc << R, t;
  const Eigen::Vector4d X = dlt(P0, Pc, m);
  if (std::abs(X(3)) < 1e-12 * X.head<3>().norm()) return false;  // at infinity
  const Eigen::Vector3d p = X.head<3>() / X(3);
  return p.z() > 0.0 && (R * p + t).z() > 0.0;
}

}  // namespace

Mat34 RelativePose::projection() const {
  Mat34 P;
  P << R, t;
  return P;
}

std::vector<NormalizedMatch> normalize_matches(const std::vector<FeatureMatch>& ms,
                                               const Eigen::Matrix3d& K) {
  Eigen::FullPivLU<Eigen::Matrix3d> lu(K);
  if (!lu.isInvertible()) throw Error(Errc::kSingularMatrix, "intrinsic matrix is singular");
  const Eigen::Matrix3d Kinv = lu.inverse();
  std::vector<NormalizedMatch> out;
  out.reserve(ms.size());
  for (const auto& m : ms) {
    Eigen::Vector3d a = Kinv * Eigen::Vector3d(m.pt0.x(), m.pt0.y(), 1.0);
    Eigen::Vector3d b = Kinv * Eigen::Vector3d(m.pt1.x(), m.pt1.y(), 1.0);
    out.push_back({a / a.z(), b / b.z()});
  }
  return out;
}

double sampson_error(const Eigen::Matrix3d& E, const NormalizedMatch& m) {
  const Eigen::Vector3d Ex0 = E * m.x0;
  const Eigen::Vector3d Etxc = E.transpose() * m.xc;
  const double r = m.xc.dot(Ex0);
  const double denom = Ex0(0) * Ex0(0) + Ex0(1) * Ex0(1) + Etxc(0) * Etxc(0) + Etxc(1) * Etxc(1);
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return r * r / denom;
}

Eigen::Matrix3d project_to_essential(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s(1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2, 0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Eigen::Matrix3d solve_essential_linear(const std::vector<NormalizedMatch>& ms) {
  if (ms.size() < 8) {
    throw Error(Errc::kInsufficientMatches, "linear essential estimate needs >= 8 matches");
  }
  Eigen::MatrixXd A(ms.size(), 9);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(Eigen::Index(i), 3 * r + c) = ms[i].xc(r) * ms[i].x0(c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d E;
  E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  return project_to_essential(E);
}

RansacResult ransac_essential(const std::vector<NormalizedMatch>& ms, const RansacParams& params,
                              double focal_px) {
  if (ms.size() < 5) {
    throw Error(Errc::kInsufficientMatches,
                fmt::format("need at least 5 matches, got {}", ms.size()));
  }
  if (!(params.pixel_threshold > 0.0) || !(params.confidence > 0.0 && params.confidence < 1.0) ||
      !(focal_px > 0.0) || params.max_iterations < 1) {
    throw Error(Errc::kInvalidArgument, "invalid RANSAC parameters");
  }
  const double thr = params.pixel_threshold / focal_px;
  const double threshold_sq = thr * thr;

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, ms.size() - 1);

  Consensus best;
  Eigen::Matrix3d best_E = Eigen::Matrix3d::Zero();
  int needed = params.max_iterations;
  int it = 0;
  for (; it < needed; ++it) {
    std::array<std::size_t, 5> idx{};
    for (int k = 0; k < 5; ++k) {
      std::size_t candidate;
      do {
        candidate = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + k, candidate) != idx.begin() + k);
      idx[k] = candidate;
    }
    std::array<NormalizedMatch, 5> sample;
    for (int k = 0; k < 5; ++k) sample[k] = ms[idx[k]];

    for (const auto& E : solve_essential_minimal(sample)) {
      Consensus c = score_model(E, ms, threshold_sq);
      if (better(c, best)) {
        best = std::move(c);
        best_E = E;
        needed = std::min(params.max_iterations,
                          required_iterations(best.inliers.size(), ms.size(), params.confidence,
                                              params.max_iterations));
      }
    }
  }

  if (best.inliers.size() < 8) {
    throw Error(Errc::kEstimationFailure,
                fmt::format("best model has {} inliers (need 8)", best.inliers.size()));
  }

  // Refit on the consensus set while the support does not shrink.
  Eigen::Matrix3d E = project_to_essential(best_E);
  Consensus current = score_model(E, ms, threshold_sq);
  for (int round = 0; round < 5; ++round) {
    std::vector<NormalizedMatch> support;
    support.reserve(current.inliers.size());
    for (std::size_t i : current.inliers) support.push_back(ms[i]);
    const Eigen::Matrix3d refined = solve_essential_linear(support);
    Consensus c = score_model(refined, ms, threshold_sq);
    if (c.inliers.size() < current.inliers.size() ||
        (c.inliers.size() == current.inliers.size() && c.total_error >= current.total_error)) {
      break;
    }
    E = refined;
    current = std::move(c);
  }
  if (current.inliers.size() < 8) {
    throw Error(Errc::kEstimationFailure, "refined model lost its support");
  }

  RansacResult out;
  out.E = E / E.norm();
  out.inliers = std::move(current.inliers);
  out.iterations = it;
  return out;
}

RelativePose decompose_essential(const Eigen::Matrix3d& E,
                                 const std::vector<NormalizedMatch>& inliers) {
  if (inliers.empty()) throw Error(Errc::kEmptyInliers, "pose recovery needs inliers");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  if (U.determinant() < 0) U.col(2) *= -1.0;
  if (V.determinant() < 0) V.col(2) *= -1.0;
  Eigen::Matrix3d W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;

  const Eigen::Matrix3d R1 = U * W * V.transpose();
  const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
  const Eigen::Vector3d t = U.col(2).normalized();
  const std::array<RelativePose, 4> candidates = {
      RelativePose{R1, t, 0}, RelativePose{R1, -t, 0}, RelativePose{R2, t, 0},
      RelativePose{R2, -t, 0}};

  RelativePose best;
  bool have = false;
  for (auto cand : candidates) {
    for (const auto& m : inliers) {
      if (in_front_of_both(cand.R, cand.t, m)) ++cand.positive_depth;
    }
    if (!have || cand.positive_depth > best.positive_depth) {
      best = cand;
      have = true;
    }
  }
  if (2 * best.positive_depth <= inliers.size()) {
    throw Error(Errc::kCheiralityFailure,
                fmt::format("best factorization puts {} of {} points in front of both cameras",
                            best.positive_depth, inliers.size()));
  }
  return best;
}

Eigen::Vector3d triangulate_linear(const Mat34& P0, const Mat34& Pc, const NormalizedMatch& m) {
  // Ray directions in the common frame: d = M^-1 x for P = [M | p4].
  Eigen::FullPivLU<Eigen::Matrix3d> lu0(P0.leftCols<3>());
  Eigen::FullPivLU<Eigen::Matrix3d> luc(Pc.leftCols<3>());
  if (!lu0.isInvertible() || !luc.isInvertible()) {
    throw Error(Errc::kSingularMatrix, "projection matrix has a singular left block");
  }
  const Eigen::Vector3d d0 = lu0.solve(m.x0).normalized();
  const Eigen::Vector3d dc = luc.solve(m.xc).normalized();
  const double parallax = std::atan2(d0.cross(dc).norm(), d0.dot(dc));
  if (!(parallax > kMinParallaxRad)) {
    throw Error(Errc::kTriangulationDegenerate,
                fmt::format("parallax {:.3g} rad below {:.0e}", parallax, kMinParallaxRad));
  }
  const Eigen::Vector4d X = dlt(P0, Pc, m);
  if (std::abs(X(3)) < 1e-14 * X.head<3>().norm()) {
    throw Error(Errc::kTriangulationDegenerate, "triangulated point at infinity");
  }
  return X.head<3>() / X(3);
}

Eigen::Vector3d camera_center(const Mat34& P) {
  Eigen::FullPivLU<Eigen::Matrix3d> lu(P.leftCols<3>());
  if (!lu.isInvertible()) throw Error(Errc::kSingularMatrix, "camera matrix has singular M");
  return -lu.solve(P.col(3));
}

std::size_t pick_building_point(const std::vector<TriangulatedMatch>& pts,
                                const detection::BBox& bbox0) {
  if (pts.empty()) throw Error(Errc::kEmptyInliers, "no triangulated inliers");
  const Eigen::Vector2d c = bbox0.center();
  std::size_t best = 0;
  double best_d = (pts[0].pixel0 - c).squaredNorm();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = (pts[i].pixel0 - c).squaredNorm();
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

double rotation_angle_deg(const Eigen::Matrix3d& Ra, const Eigen::Matrix3d& Rb) {
  const Eigen::Matrix3d D = Ra.transpose() * Rb;
  const double c = std::clamp((D.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near zero; use the skew part for the sine.
  const Eigen::Vector3d w(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return std::atan2(w.norm() / 2.0, c) * 180.0 / std::numbers::pi;
}

}  // namespace streetside::mvg
