#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

#include "streetside/image.hpp"

// Continuous image coordinates are used throughout: the top-left corner of
// the raster is (0, 0) and pixel (i, j) has its center at (i + 0.5, j + 0.5).

namespace streetside::projection {

/// Direction on the viewing sphere relative to the panorama heading.
struct SphericalDir {
  double psi_deg = 0.0;  ///< azimuth, clockwise positive, [-180, 180)
  double phi_deg = 0.0;  ///< elevation, [-90, 90]
};

struct Intrinsics {
  double f = 1.0;  ///< focal length, px
  double p = 1.0;  ///< principal point offset, px (half the square side)
};

struct PanoDims {
  int width = 0;
  int height = 0;
};

struct RectilinearView {
  Image image;
  double alpha_deg = 0.0;  ///< projection azimuth relative to the panorama heading
  double theta_deg = 0.0;  ///< horizontal and vertical field of view
  Intrinsics intrinsics;
  std::string pano_id;

  int side() const noexcept { return image.width(); }
};

/// f = p / tan(theta / 2). Throws Errc::kInvalidFov unless 0 < theta < 180.
double focal_from_fov(double theta_deg, double half_size_p);

/// Intrinsics of a square view of side `side_px` with the given field of view.
Intrinsics intrinsics_for(double theta_deg, int side_px);

Eigen::Matrix3d intrinsic_matrix(const Intrinsics& intr);

/// Throws Errc::kInvalidImage unless width == 2 * height > 0.
void validate_equirect(const Image& pano);

/// Direction of the panorama sample at continuous position (u + 0.5, v + 0.5),
/// i.e. (u, v) are pixel indices and may be fractional.
SphericalDir pano_pixel_to_dir(PanoDims dims, double u, double v);

/// Inverse of pano_pixel_to_dir. The returned u lies in [-0.5, W - 0.5).
Eigen::Vector2d dir_to_pano_pixel(PanoDims dims, const SphericalDir& d);

/// Unit vector in the heading-aligned frame (x right, y down, z forward).
Eigen::Vector3d dir_to_unit(const SphericalDir& d);
SphericalDir unit_to_dir(const Eigen::Vector3d& v);

/// ENU offset expressed in the heading-aligned frame of a camera whose
/// heading is `heading_deg` clockwise from North.
Eigen::Vector3d enu_to_heading_frame(const Eigen::Vector3d& enu, double heading_deg);
Eigen::Vector3d heading_frame_to_enu(const Eigen::Vector3d& v, double heading_deg);

/// Rotation taking view-frame vectors into the heading-aligned frame for a
/// view pointed at azimuth alpha with zero pitch.
Eigen::Matrix3d view_to_heading_frame(double alpha_deg);

/// Ray through continuous view coordinates (x, y): ((x - p) / f, (y - p) / f, 1).
Eigen::Vector3d view_ray(const Intrinsics& intr, double x, double y);

/// Continuous view coordinates of a direction, or nullopt when it points
/// behind the image plane.
std::optional<Eigen::Vector2d> dir_to_view_point(const SphericalDir& d, double alpha_deg,
                                                 const Intrinsics& intr);

/// Bilinear sample at fractional pixel indices with horizontal wrap and
/// vertical clamp.
Rgb sample_bilinear(const Image& pano, double u, double v);

/// Renders the square rectilinear view of `pano` toward azimuth alpha.
/// Deterministic; rows may be rendered on up to `threads` workers.
RectilinearView render_rectilinear(const Image& pano, double alpha_deg, double theta_deg,
                                   int side_px, unsigned threads = 0);

}  // namespace streetside::projection
