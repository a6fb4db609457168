#include "atomflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "atomflow/errors.hpp"

namespace atomflow {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double angle_between_deg(const Vec3& u, const Vec3& v) {
  const double c = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
  return std::acos(c) / kDegToRad;
}

}  // namespace

Lattice Lattice::from_matrix(const Mat3& m) {
  const Vec3 a = m.row(0).transpose();
  const Vec3 b = m.row(1).transpose();
  const Vec3 c = m.row(2).transpose();
  Lattice out;
  out.matrix = m;
  out.lengths = Vec3(a.norm(), b.norm(), c.norm());
  out.angles = Vec3(angle_between_deg(b, c), angle_between_deg(a, c), angle_between_deg(a, b));
  return out;
}

Lattice lattice_matrix(const Vec3& lengths, const Vec3& angles_deg) {
  for (int k = 0; k < 3; ++k) {
    if (!(lengths[k] > 0.0) || !std::isfinite(lengths[k]))
      fail(ErrorKind::RangeError, "lattice lengths must be positive and finite");
    if (!(angles_deg[k] > 0.0 && angles_deg[k] < 180.0))
      fail(ErrorKind::RangeError, "lattice angles must lie in (0, 180) degrees");
  }
  const double ca = std::cos(angles_deg[0] * kDegToRad);
  const double cb = std::cos(angles_deg[1] * kDegToRad);
  const double cg = std::cos(angles_deg[2] * kDegToRad);
  const double sg = std::sin(angles_deg[2] * kDegToRad);

  const double cy = (ca - cb * cg) / sg;
  const double cz2 = 1.0 - cb * cb - cy * cy;
  if (!(cz2 > 0.0)) fail(ErrorKind::DegenerateCell, "angles do not form a parallelepiped");

  Mat3 m;
  m << lengths[0], 0.0, 0.0,  //
      lengths[1] * cg, lengths[1] * sg, 0.0,  //
      lengths[2] * cb, lengths[2] * cy, lengths[2] * std::sqrt(cz2);
  if (!(m.determinant() > kDegenerateVolume)) fail(ErrorKind::DegenerateCell, "cell volume <= 1e-12 A^3");

  Lattice out;
  out.lengths = lengths;
  out.angles = angles_deg;
  out.matrix = m;
  return out;
}

Coords cart_from_frac(const Coords& frac, const Lattice& lattice) {
  if (!(lattice.volume() > kDegenerateVolume)) fail(ErrorKind::DegenerateCell, "cell volume <= 1e-12 A^3");
  return frac * lattice.matrix;
}

Coords frac_from_cart(const Coords& cart, const Lattice& lattice) {
  if (!(lattice.volume() > kDegenerateVolume)) fail(ErrorKind::DegenerateCell, "cell volume <= 1e-12 A^3");
  const Mat3 inv = lattice.matrix.inverse();
  return cart * inv;
}

double wrap_unit(double x) {
  if (!std::isfinite(x)) fail(ErrorKind::NonFiniteInput, "cannot wrap a non-finite fractional coordinate");
  double r = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.0.
  if (r >= 1.0) r = 0.0;
  return r;
}

Coords wrap_frac(const Coords& frac) {
  Coords out(frac.rows(), 3);
  for (Eigen::Index i = 0; i < frac.size(); ++i) out.data()[i] = wrap_unit(frac.data()[i]);
  return out;
}

FlowLattice normalize_lattice_for_flow(const Vec3& lengths, const Vec3& angles_deg, int num_atoms) {
  if (num_atoms < 1) fail(ErrorKind::RangeError, "atom count must be >= 1");
  const double scale = std::cbrt(static_cast<double>(num_atoms));
  return {lengths / scale, angles_deg * kDegToRad};
}

std::pair<Vec3, Vec3> denormalize_lattice(const FlowLattice& normalized, int num_atoms) {
  if (num_atoms < 1) fail(ErrorKind::RangeError, "atom count must be >= 1");
  const double scale = std::cbrt(static_cast<double>(num_atoms));
  return {normalized.lengths * scale, normalized.angles / kDegToRad};
}

Coords zero_center(const Coords& cart) {
  const Eigen::RowVector3d mean = cart.colwise().mean();
  return cart.rowwise() - mean;
}

Mat3 random_rotation(RngStream& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-12) q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

AtomicSystem random_rigid_augment(const AtomicSystem& system, RngStream& rng) {
  AtomicSystem out = system;
  if (system.domain == DomainClass::Molecule) {
    const Mat3 r = random_rotation(rng);
    // Row convention: rotate each row vector x -> R x, i.e. X -> X R^T.
    out.cart_coords = zero_center(*system.cart_coords * r.transpose());
    if (system.labels.forces) out.labels.forces = Coords(*system.labels.forces * r.transpose());
  } else {
    const Eigen::RowVector3d shift(rng.uniform(), rng.uniform(), rng.uniform());
    const Coords shifted = system.frac_coords->rowwise() + shift;
    out.frac_coords = wrap_frac(shifted);
  }
  return out;
}

std::vector<double> pairwise_distances(const Coords& cart) {
  std::vector<double> d;
  const auto n = cart.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((cart.row(i) - cart.row(j)).norm());
  return d;
}

double minimum_image_distance(const Vec3& frac_a, const Vec3& frac_b, const Lattice& lattice) {
  Eigen::RowVector3d diff = (frac_b - frac_a).transpose();
  for (int k = 0; k < 3; ++k) diff[k] -= std::round(diff[k]);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        const Eigen::RowVector3d shifted = diff + Eigen::RowVector3d(i, j, k);
        best = std::min(best, (shifted * lattice.matrix).norm());
      }
  return best;
}

std::vector<double> periodic_pairwise_distances(const Coords& frac, const Lattice& lattice) {
  std::vector<double> d;
  const auto n = frac.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d.push_back(minimum_image_distance(frac.row(i).transpose(), frac.row(j).transpose(), lattice));
  return d;
}

Lattice lattice_of(const AtomicSystem& material) {
  if (material.domain != DomainClass::Material) fail(ErrorKind::DomainMismatch, "molecules have no lattice");
  return lattice_matrix(*material.lattice_lengths, *material.lattice_angles);
}

}  // namespace atomflow
