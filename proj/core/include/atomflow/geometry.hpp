#pragma once

#include <utility>
#include <vector>

#include "atomflow/rng.hpp"
#include "atomflow/system.hpp"

namespace atomflow {

inline constexpr double kDegenerateVolume = 1e-12;  // Angstrom^3

/// Unit cell. Rows of `matrix` are the basis vectors a, b, c; positions follow the
/// row-vector convention X = F * matrix throughout the library.
struct Lattice {
  Vec3 lengths;
  Vec3 angles;  // degrees
  Mat3 matrix;

  double volume() const { return matrix.determinant(); }
  /// Lengths and angles recomputed from the basis rows.
  static Lattice from_matrix(const Mat3& matrix);
};

/// a along +x, b in the xy-plane at angle gamma from a, c fixed by alpha, beta and a
/// positive triple product. Throws DegenerateCell when the volume is <= 1e-12.
Lattice lattice_matrix(const Vec3& lengths, const Vec3& angles_deg);

Coords cart_from_frac(const Coords& frac, const Lattice& lattice);
Coords frac_from_cart(const Coords& cart, const Lattice& lattice);

/// Componentwise value mod 1, in [0, 1).
Coords wrap_frac(const Coords& frac);
double wrap_unit(double x);

struct FlowLattice {
  Vec3 lengths;  // divided by N^(1/3)
  Vec3 angles;   // radians
};

FlowLattice normalize_lattice_for_flow(const Vec3& lengths, const Vec3& angles_deg, int num_atoms);
std::pair<Vec3, Vec3> denormalize_lattice(const FlowLattice& normalized, int num_atoms);

Coords zero_center(const Coords& cart);

/// Haar-distributed rotation on SO(3) (normalized Gaussian quaternion).
Mat3 random_rotation(RngStream& rng);

/// Molecules: Haar rotation then re-centering, force labels rotated alike. Materials:
/// uniform fractional shift, wrapped. Types and lattice are untouched.
AtomicSystem random_rigid_augment(const AtomicSystem& system, RngStream& rng);

/// All i<j pairwise distances of a point set, unsorted.
std::vector<double> pairwise_distances(const Coords& cart);

/// Minimum-image distance between two fractional positions, brute-forced over the 27
/// neighbouring images after reducing the difference to [-0.5, 0.5).
double minimum_image_distance(const Vec3& frac_a, const Vec3& frac_b, const Lattice& lattice);

/// Minimum-image distances for all i<j pairs.
std::vector<double> periodic_pairwise_distances(const Coords& frac, const Lattice& lattice);

Lattice lattice_of(const AtomicSystem& material);

}  // namespace atomflow
