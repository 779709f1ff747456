// Five-point relative pose: the essential matrix is sought in the 4-D null
// space of the epipolar constraints, E = x X + y Y + z Z + W. The cubic
// constraints det(E) = 0 and 2 E E^T E - tr(E E^T) E = 0 give ten equations
// in the twenty monomials of degree <= 3. After eliminating the cubic
// monomials, multiplication by x acts on the quotient basis
// {x^2, xy, xz, y^2, yz, z^2, x, y, z, 1}; the eigenvectors of that 10x10
// action matrix evaluate the basis at the (up to ten) solutions.

#include <array>
#include <cmath>
#include <complex>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "streetside/mvg.hpp"

namespace streetside::mvg {
namespace {

// Monomial layout: the ten cubics first, then the quotient basis.
enum Mono : int {
  kXXX, kXXY, kXXZ, kXYY, kXYZ, kXZZ, kYYY, kYYZ, kYZZ, kZZZ,
  kXX, kXY, kXZ, kYY, kYZ, kZZ, kX, kY, kZ, kOne,
  kNumMono
};

constexpr int mono_index(int a, int b, int c) {
  // a, b, c are the exponents of x, y, z with a + b + c <= 3
  constexpr int table[4][4][4] = {
      // a = 0
      {{kOne, kZ, kZZ, kZZZ}, {kY, kYZ, kYZZ, -1}, {kYY, kYYZ, -1, -1}, {kYYY, -1, -1, -1}},
      // a = 1
      {{kX, kXZ, kXZZ, -1}, {kXY, kXYZ, -1, -1}, {kXYY, -1, -1, -1}, {-1, -1, -1, -1}},
      // a = 2
      {{kXX, kXXZ, -1, -1}, {kXXY, -1, -1, -1}, {-1, -1, -1, -1}, {-1, -1, -1, -1}},
      // a = 3
      {{kXXX, -1, -1, -1}, {-1, -1, -1, -1}, {-1, -1, -1, -1}, {-1, -1, -1, -1}},
  };
  return table[a][b][c];
}

struct Exponents {
  int a, b, c;
};

constexpr std::array<Exponents, kNumMono> kExponents = [] {
  std::array<Exponents, kNumMono> e{};
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; a + b <= 3; ++b)
      for (int c = 0; a + b + c <= 3; ++c) e[mono_index(a, b, c)] = {a, b, c};
  return e;
}();

// Polynomial in x, y, z of total degree <= 3.
struct Poly {
  std::array<double, kNumMono> c{};

  Poly& operator+=(const Poly& o) {
    for (int i = 0; i < kNumMono; ++i) c[i] += o.c[i];
    return *this;
  }
  Poly& operator-=(const Poly& o) {
    for (int i = 0; i < kNumMono; ++i) c[i] -= o.c[i];
    return *this;
  }
  Poly operator*(double s) const {
    Poly r = *this;
    for (auto& v : r.c) v *= s;
    return r;
  }
};

Poly operator+(Poly a, const Poly& b) { return a += b; }
Poly operator-(Poly a, const Poly& b) { return a -= b; }

Poly operator*(const Poly& p, const Poly& q) {
  Poly r;
  for (int i = 0; i < kNumMono; ++i) {
    if (p.c[i] == 0.0) continue;
    for (int j = 0; j < kNumMono; ++j) {
      if (q.c[j] == 0.0) continue;
      const auto& ei = kExponents[i];
      const auto& ej = kExponents[j];
      const int k = mono_index(ei.a + ej.a, ei.b + ej.b, ei.c + ej.c);
      // products here never exceed degree 3 by construction
      r.c[k] += p.c[i] * q.c[j];
    }
  }
  return r;
}

using PolyMat = std::array<std::array<Poly, 3>, 3>;

using NullBasis = Eigen::Matrix<double, 9, 4>;

// Solutions with E = x N0 + y N1 + z N2 + N3. Returns nullopt when the cubic
// block cannot be eliminated in this parameterization.
std::optional<std::vector<Eigen::Matrix3d>> solve_in_basis(const NullBasis& N) {
  const Eigen::Matrix<double, 9, 1> X = N.col(0), Y = N.col(1), Z = N.col(2), W = N.col(3);

  PolyMat E;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const int k = 3 * r + c;
      Poly p;
      p.c[kX] = X(k);
      p.c[kY] = Y(k);
      p.c[kZ] = Z(k);
      p.c[kOne] = W(k);
      E[r][c] = p;
    }
  }

  const Poly det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
                   E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
                   E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);

  PolyMat EEt;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EEt[i][j] = E[i][0] * E[j][0] + E[i][1] * E[j][1] + E[i][2] * E[j][2];
  const Poly trace = EEt[0][0] + EEt[1][1] + EEt[2][2];

  Eigen::Matrix<double, 10, kNumMono> M;
  for (int k = 0; k < kNumMono; ++k) M(0, k) = det.c[k];
  int row = 1;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Poly acc = (EEt[i][0] * E[0][j] + EEt[i][1] * E[1][j] + EEt[i][2] * E[2][j]) * 2.0;
      acc -= trace * E[i][j];
      for (int k = 0; k < kNumMono; ++k) M(row, k) = acc.c[k];
      ++row;
    }
  }

  // Eliminate the cubic block: cubic_m = -G(m, :) . basis
  const Eigen::Matrix<double, 10, 10> A = M.leftCols<10>();
  const Eigen::Matrix<double, 10, 10> B = M.rightCols<10>();
  Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(A);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::Matrix<double, 10, 10> G = lu.solve(B);

  // Row i of the action matrix expresses x * basis_i in the basis.
  constexpr int kBase = kXX;
  Eigen::Matrix<double, 10, 10> action = Eigen::Matrix<double, 10, 10>::Zero();
  action.row(kXX - kBase) = -G.row(kXXX);
  action.row(kXY - kBase) = -G.row(kXXY);
  action.row(kXZ - kBase) = -G.row(kXXZ);
  action.row(kYY - kBase) = -G.row(kXYY);
  action.row(kYZ - kBase) = -G.row(kXYZ);
  action.row(kZZ - kBase) = -G.row(kXZZ);
  action(kX - kBase, kXX - kBase) = 1.0;
  action(kY - kBase, kXY - kBase) = 1.0;
  action(kZ - kBase, kXZ - kBase) = 1.0;
  action(kOne - kBase, kX - kBase) = 1.0;

  Eigen::EigenSolver<Eigen::Matrix<double, 10, 10>> eig(action);
  if (eig.info() != Eigen::Success) return std::nullopt;

  std::vector<Eigen::Matrix3d> out;
  for (int s = 0; s < 10; ++s) {
    const std::complex<double> lambda = eig.eigenvalues()(s);
    if (std::abs(lambda.imag()) > 1e-8 * std::max(1.0, std::abs(lambda.real()))) continue;
    const Eigen::Matrix<std::complex<double>, 10, 1> v = eig.eigenvectors().col(s);
    const std::complex<double> one = v(kOne - kBase);
    if (std::abs(one) < 1e-12 * v.norm()) continue;
    const double x = (v(kX - kBase) / one).real();
    const double y = (v(kY - kBase) / one).real();
    const double z = (v(kZ - kBase) / one).real();
    const Eigen::Matrix<double, 9, 1> e = x * X + y * Y + z * Z + W;
    Eigen::Matrix3d Em;
    Em << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
    const double n = Em.norm();
    if (!(n > 0.0) || !std::isfinite(n)) continue;
    out.push_back(Em / n);
  }
  return out;
}

}  // namespace

std::vector<Eigen::Matrix3d> solve_essential_minimal(const std::array<NormalizedMatch, 5>& five) {
  // Epipolar constraints xc^T E x0 = 0 on the row-major entries of E.
  Eigen::Matrix<double, 5, 9> Q;
  for (int i = 0; i < 5; ++i) {
    const Eigen::Vector3d& a = five[i].x0;
    const Eigen::Vector3d& b = five[i].xc;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Q(i, 3 * r + c) = b(r) * a(c);
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 5, 9>> svd(Q, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(4) < 1e-10 * sv(0)) return {};  // rank-deficient sample
  const NullBasis N = svd.matrixV().rightCols<4>();

  if (auto sols = solve_in_basis(N)) return *sols;
  // Special configurations (pure translation among them) can make the
  // elimination singular for the SVD-ordered basis. A fixed rotation of the
  // basis moves the dehomogenizing coordinate off the degenerate direction.
  Eigen::Matrix4d mix;
  mix << 0.5, 0.5, 0.5, 0.5,
         0.5, 0.5, -0.5, -0.5,
         0.5, -0.5, 0.5, -0.5,
         -0.5, 0.5, 0.5, -0.5;
  if (auto sols = solve_in_basis(N * mix)) return *sols;
  return {};
}

}  // namespace streetside::mvg
