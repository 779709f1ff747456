#include "streetside/projection.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "streetside/error.hpp"
#include "streetside/geo.hpp"
#include "streetside/parallel.hpp"

namespace streetside::projection {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::uint8_t lerp_channel(double c00, double c10, double c01, double c11, double wx,
                          double wy) {
  const double top = c00 + (c10 - c00) * wx;
  const double bottom = c01 + (c11 - c01) * wx;
  const double v = top + (bottom - top) * wy;
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace

double focal_from_fov(double theta_deg, double half_size_p) {
  if (!(theta_deg > 0.0 && theta_deg < 180.0)) {
    throw Error(Errc::kInvalidFov,
                fmt::format("field of view must be in (0, 180) degrees, got {}", theta_deg));
  }
  if (!(half_size_p > 0.0)) {
    throw Error(Errc::kInvalidImage, "principal offset must be positive");
  }
  return half_size_p / std::tan(theta_deg * kDegToRad / 2.0);
}

Intrinsics intrinsics_for(double theta_deg, int side_px) {
  if (side_px <= 0) throw Error(Errc::kInvalidImage, "view side must be positive");
  const double p = side_px / 2.0;
  return {focal_from_fov(theta_deg, p), p};
}

Eigen::Matrix3d intrinsic_matrix(const Intrinsics& intr) {
  Eigen::Matrix3d k;
  k << intr.f, 0.0, intr.p,
       0.0, intr.f, intr.p,
       0.0, 0.0, 1.0;
  return k;
}

void validate_equirect(const Image& pano) {
  if (pano.empty() || pano.width() != 2 * pano.height()) {
    throw Error(Errc::kInvalidImage,
                fmt::format("equirectangular panorama must be 2:1, got {}x{}", pano.width(),
                            pano.height()));
  }
}

SphericalDir pano_pixel_to_dir(PanoDims dims, double u, double v) {
  if (!(u >= 0.0 && u < dims.width && v >= 0.0 && v < dims.height)) {
    throw Error(Errc::kPixelOutOfBounds,
                fmt::format("pixel ({}, {}) outside {}x{}", u, v, dims.width, dims.height));
  }
  return {(u + 0.5) / dims.width * 360.0 - 180.0, 90.0 - (v + 0.5) / dims.height * 180.0};
}

Eigen::Vector2d dir_to_pano_pixel(PanoDims dims, const SphericalDir& d) {
  const double psi = geo::wrap_180(d.psi_deg);
  return {(psi + 180.0) / 360.0 * dims.width - 0.5, (90.0 - d.phi_deg) / 180.0 * dims.height - 0.5};
}

Eigen::Vector3d dir_to_unit(const SphericalDir& d) {
  const double psi = d.psi_deg * kDegToRad;
  const double phi = d.phi_deg * kDegToRad;
  return {std::cos(phi) * std::sin(psi), -std::sin(phi), std::cos(phi) * std::cos(psi)};
}

SphericalDir unit_to_dir(const Eigen::Vector3d& v) {
  const double horiz = std::hypot(v.x(), v.z());
  return {geo::wrap_180(std::atan2(v.x(), v.z()) * kRadToDeg),
          std::atan2(-v.y(), horiz) * kRadToDeg};
}

Eigen::Vector3d enu_to_heading_frame(const Eigen::Vector3d& enu, double heading_deg) {
  const double s = std::sin(heading_deg * kDegToRad);
  const double c = std::cos(heading_deg * kDegToRad);
  return {c * enu.x() - s * enu.y(), -enu.z(), s * enu.x() + c * enu.y()};
}

Eigen::Vector3d heading_frame_to_enu(const Eigen::Vector3d& v, double heading_deg) {
  const double s = std::sin(heading_deg * kDegToRad);
  const double c = std::cos(heading_deg * kDegToRad);
  return {c * v.x() + s * v.z(), -s * v.x() + c * v.z(), -v.y()};
}

Eigen::Matrix3d view_to_heading_frame(double alpha_deg) {
  // Clockwise seen from above is a positive rotation about +y (pointing down).
  return Eigen::AngleAxisd(alpha_deg * kDegToRad, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

Eigen::Vector3d view_ray(const Intrinsics& intr, double x, double y) {
  return {(x - intr.p) / intr.f, (y - intr.p) / intr.f, 1.0};
}

std::optional<Eigen::Vector2d> dir_to_view_point(const SphericalDir& d, double alpha_deg,
                                                 const Intrinsics& intr) {
  const Eigen::Vector3d v = view_to_heading_frame(alpha_deg).transpose() * dir_to_unit(d);
  if (v.z() <= 0.0) return std::nullopt;
  return Eigen::Vector2d(intr.f * v.x() / v.z() + intr.p, intr.f * v.y() / v.z() + intr.p);
}

Rgb sample_bilinear(const Image& pano, double u, double v) {
  const int w = pano.width();
  const int h = pano.height();
  const double fx = std::floor(u);
  const double fy = std::floor(v);
  const double wx = u - fx;
  const double wy = v - fy;
  int x0 = static_cast<int>(fx) % w;
  if (x0 < 0) x0 += w;
  const int x1 = (x0 + 1) % w;
  const int y0 = std::clamp(static_cast<int>(fy), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, h - 1);
  const Rgb a = pano.at(x0, y0), b = pano.at(x1, y0), c = pano.at(x0, y1), e = pano.at(x1, y1);
  return {lerp_channel(a.r, b.r, c.r, e.r, wx, wy), lerp_channel(a.g, b.g, c.g, e.g, wx, wy),
          lerp_channel(a.b, b.b, c.b, e.b, wx, wy)};
}

RectilinearView render_rectilinear(const Image& pano, double alpha_deg, double theta_deg,
                                   int side_px, unsigned threads) {
  validate_equirect(pano);
  if (side_px <= 0) throw Error(Errc::kInvalidImage, "zero-size output view");
  if (side_px % 2 != 0) throw Error(Errc::kInvalidImage, "view side must be even");
  const Intrinsics intr = intrinsics_for(theta_deg, side_px);
  const Eigen::Matrix3d rot = view_to_heading_frame(alpha_deg);
  const PanoDims dims{pano.width(), pano.height()};

  RectilinearView view;
  view.alpha_deg = alpha_deg;
  view.theta_deg = theta_deg;
  view.intrinsics = intr;
  view.image = Image(side_px, side_px);

  parallel_for(
      std::size_t(side_px),
      [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < side_px; ++x) {
          const Eigen::Vector3d ray = rot * view_ray(intr, x + 0.5, y + 0.5);
          const Eigen::Vector2d uv = dir_to_pano_pixel(dims, unit_to_dir(ray));
          view.image.set(x, y, sample_bilinear(pano, uv.x(), uv.y()));
        }
      },
      threads);
  return view;
}

}  // namespace streetside::projection
