#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <numbers>

#include "atomflow/errors.hpp"
#include "atomflow/geometry.hpp"
#include "oracles.hpp"
#include "toy_systems.hpp"

namespace atomflow {
namespace {

TEST(Lattice, CubicIsScaledIdentity) {
  const Lattice l = lattice_matrix(Vec3(2, 2, 2), Vec3(90, 90, 90));
  EXPECT_LT((l.matrix - 2.0 * Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lattice, RhombohedralVolumeMatchesTripleProduct) {
  const Lattice l = lattice_matrix(Vec3(1, 1, 1), Vec3(60, 60, 60));
  const Eigen::Vector3d a = l.matrix.row(0), b = l.matrix.row(1), c = l.matrix.row(2);
  const double triple = a.dot(b.cross(c));
  EXPECT_NEAR(triple, std::sqrt(2.0) / 2.0, 1e-12);
  EXPECT_NEAR(l.volume(), triple, 1e-12);
}

TEST(Lattice, ConventionAlongXAndInXyPlane) {
  const Lattice l = lattice_matrix(Vec3(3, 4, 5), Vec3(70, 80, 95));
  EXPECT_NEAR(l.matrix(0, 1), 0.0, 1e-14);
  EXPECT_NEAR(l.matrix(0, 2), 0.0, 1e-14);
  EXPECT_NEAR(l.matrix(1, 2), 0.0, 1e-14);
  EXPECT_GT(l.matrix(0, 0), 0.0);
  EXPECT_GT(l.volume(), 0.0);
}

TEST(Lattice, GramMatrixMatchesMetricTensor) {
  const Vec3 len(3, 4, 5), ang(70, 80, 95);
  const Lattice l = lattice_matrix(len, ang);
  const Mat3 gram = l.matrix * l.matrix.transpose();
  EXPECT_LT((gram - testing::metric_tensor(len, ang)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lattice, LengthsAndAnglesRoundTrip) {
  const Vec3 len(3, 4, 5), ang(70, 80, 95);
  const Lattice back = Lattice::from_matrix(lattice_matrix(len, ang).matrix);
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(back.lengths[i] - len[i]) / len[i], 1e-8);
    EXPECT_LT(std::abs(back.angles[i] - ang[i]) / ang[i], 1e-8);
  }
}

TEST(Lattice, DegenerateCellIsRejected) {
  for (const auto& [len, ang] : {std::pair{Vec3(1, 1, 1), Vec3(60, 60, 150)}, std::pair{Vec3(1e-5, 1e-5, 1e-5), Vec3(90, 90, 90)}}) {
    try {
      lattice_matrix(len, ang);
      ADD_FAILURE() << "expected DegenerateCell";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::DegenerateCell);
    }
  }
}

TEST(Coordinates, CubicScalingAndOrigin) {
  const Lattice cubic = lattice_matrix(Vec3(2, 2, 2), Vec3(90, 90, 90));
  Coords f(1, 3);
  f << 0.5, 0.5, 0.5;
  EXPECT_LT((cart_from_frac(f, cubic) - Coords::Constant(1, 3, 1.0)).cwiseAbs().maxCoeff(), 1e-14);
  const Lattice tri = lattice_matrix(Vec3(3, 4, 5), Vec3(70, 80, 95));
  EXPECT_EQ(cart_from_frac(Coords::Zero(1, 3), tri).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Coordinates, RoundTripWithoutWrapping) {
  const Lattice tri = lattice_matrix(Vec3(3, 4, 5), Vec3(70, 80, 95));
  RngStream rng(3);
  Coords x(50, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 20.0 * (rng.uniform() - 0.5);
  EXPECT_LT((cart_from_frac(frac_from_cart(x, tri), tri) - x).cwiseAbs().maxCoeff(), 1e-10);
  const Coords f = frac_from_cart(x, tri);
  EXPECT_GT(f.cwiseAbs().maxCoeff(), 1.0);  // no wrapping
}

TEST(Coordinates, WrapFrac) {
  Coords f(1, 3);
  f << 1.25, -0.1, 0.5;
  const Coords w = wrap_frac(f);
  EXPECT_NEAR(w(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(w(0, 1), 0.9, 1e-15);
  EXPECT_EQ(w(0, 2), 0.5);
  EXPECT_EQ(wrap_unit(-1e-18), 0.0);  // rounds onto 1.0, which maps back to 0
  f(0, 0) = std::nan("");
  try {
    wrap_frac(f);
    FAIL() << "expected NonFiniteInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteInput);
  }
}

TEST(FlowLatticeNormalization, DirectFormulas) {
  const FlowLattice n = normalize_lattice_for_flow(Vec3(4, 4, 4), Vec3(90, 90, 90), 8);
  EXPECT_NEAR(n.lengths[0], 2.0, 1e-14);
  EXPECT_NEAR(n.angles[0], 1.5707963267948966, 1e-14);
  const FlowLattice one = normalize_lattice_for_flow(Vec3(3, 4, 5), Vec3(70, 80, 95), 1);
  EXPECT_EQ(one.lengths, Vec3(3, 4, 5));
  const auto [len, ang] = denormalize_lattice(normalize_lattice_for_flow(Vec3(3, 4, 5), Vec3(70, 80, 95), 7), 7);
  EXPECT_LT((len - Vec3(3, 4, 5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ang - Vec3(70, 80, 95)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ZeroCenter, Examples) {
  Coords one(1, 3);
  one << 1, 2, 3;
  EXPECT_EQ(zero_center(one).cwiseAbs().maxCoeff(), 0.0);
  Coords two(2, 3);
  two << 0, 0, 0, 2, 0, 0;
  const Coords c = zero_center(two);
  EXPECT_DOUBLE_EQ(c(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 1.0);
  const Coords again = zero_center(c);
  EXPECT_LT((again - c).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ZeroCenter, PreservesDistances) {
  const auto mols = testing::toy_molecules();
  const auto& eth = mols.back();
  Coords shifted = *eth.cart_coords;
  shifted.rowwise() += Eigen::RowVector3d(3, -2, 7);
  const Coords c = zero_center(shifted);
  EXPECT_LT(c.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  const auto a = pairwise_distances(shifted), b = pairwise_distances(c);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Rotation, HaarRotationIsProper) {
  RngStream rng(11);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = random_rotation(rng);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-10);
  }
}

TEST(Rotation, HaarMeanTraceIsZero) {
  // E[tr R] = 0 under the Haar measure on SO(3); the trace has variance 1.
  RngStream rng(5);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += random_rotation(rng).trace();
  EXPECT_LT(std::abs(sum / n), 5.0 / std::sqrt(n));
}

TEST(Augment, MoleculeDistancesInvariantAndForcesRotate) {
  auto mols = testing::toy_molecules();
  AtomicSystem eth = mols.back();
  Coords forces = Coords::Zero(eth.num_atoms(), 3);
  forces(0, 0) = 1.0;
  forces(1, 2) = -2.0;
  eth.labels.forces = forces;
  RngStream rng(9);
  const AtomicSystem aug = random_rigid_augment(eth, rng);
  const auto a = pairwise_distances(*eth.cart_coords), b = pairwise_distances(*aug.cart_coords);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  EXPECT_LT(aug.cart_coords->colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(aug.atomic_numbers, eth.atomic_numbers);
  // Force magnitudes survive and the force/position relation is rotated consistently.
  for (int i = 0; i < eth.num_atoms(); ++i)
    EXPECT_NEAR(aug.labels.forces->row(i).norm(), forces.row(i).norm(), 1e-12);
  const Coords x0 = zero_center(*eth.cart_coords);
  for (int i = 0; i < eth.num_atoms(); ++i)
    EXPECT_NEAR(aug.labels.forces->row(i).dot(aug.cart_coords->row(i)), forces.row(i).dot(x0.row(i)), 1e-9);
}

TEST(Augment, MaterialMinimumImageDistancesInvariant) {
  RngStream rng(17);
  for (const auto& m : testing::toy_materials()) {
    const AtomicSystem aug = random_rigid_augment(m, rng);
    EXPECT_EQ(*aug.lattice_lengths, *m.lattice_lengths);
    EXPECT_EQ(*aug.lattice_angles, *m.lattice_angles);
    EXPECT_GE(aug.frac_coords->minCoeff(), 0.0);
    EXPECT_LT(aug.frac_coords->maxCoeff(), 1.0);
    const Lattice l = lattice_of(m);
    std::vector<double> before, after;
    for (int i = 0; i < m.num_atoms(); ++i)
      for (int j = i + 1; j < m.num_atoms(); ++j) {
        before.push_back(testing::brute_force_min_image(m.frac_coords->row(i), m.frac_coords->row(j), l.matrix));
        after.push_back(testing::brute_force_min_image(aug.frac_coords->row(i), aug.frac_coords->row(j), l.matrix));
      }
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-9) << m.id;
  }
}

TEST(MinimumImage, MatchesBruteForceOnSkewedCells) {
  const Lattice l = lattice_matrix(Vec3(3, 4, 5), Vec3(65, 110, 75));
  RngStream rng(23);
  for (int k = 0; k < 200; ++k) {
    const Vec3 a(rng.uniform(), rng.uniform(), rng.uniform());
    const Vec3 b(rng.uniform(), rng.uniform(), rng.uniform());
    EXPECT_NEAR(minimum_image_distance(a, b, l), testing::brute_force_min_image(a, b, l.matrix), 1e-10);
  }
}

}  // namespace
}  // namespace atomflow
