#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "atomflow/errors.hpp"
#include "atomflow/geometry.hpp"
#include "atomflow/metrics.hpp"
#include "oracles.hpp"
#include "toy_systems.hpp"

namespace atomflow {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::IoError;
}

AtomicSystem cubic_pair(double a, Vec3 second) {
  Coords frac(2, 3);
  frac.row(0) = Vec3::Zero().transpose();
  frac.row(1) = second.transpose();
  return make_material("pair", {11, 17}, frac, Vec3(a, a, a), Vec3(90, 90, 90));
}

AtomicSystem diatomic(int za, int zb, double d) {
  Coords x(2, 3);
  x << 0, 0, 0, d, 0, 0;
  return make_molecule("di", {za, zb}, x);
}

AtomicSystem rotated(const AtomicSystem& m, const Mat3& r) {
  AtomicSystem out = m;
  out.cart_coords = (*m.cart_coords * r.transpose()).eval();
  return out;
}

AtomicSystem reversed(const AtomicSystem& s) {
  AtomicSystem out = s;
  std::reverse(out.atomic_numbers.begin(), out.atomic_numbers.end());
  auto flip = [](const Coords& c) { return Coords(c.colwise().reverse()); };
  if (s.cart_coords) out.cart_coords = flip(*s.cart_coords);
  if (s.frac_coords) out.frac_coords = flip(*s.frac_coords);
  return out;
}

TEST(StructuralValidity, DistanceThreshold) {
  // 0.4 A along x in a 4 A cube
  EXPECT_FALSE(structural_validity(cubic_pair(4.0, Vec3(0.1, 0.0, 0.0))));
  EXPECT_TRUE(structural_validity(cubic_pair(4.0, Vec3(0.126, 0.0, 0.0))));
}

TEST(StructuralValidity, BodyCentreMatchesBruteForceImages) {
  const auto s = cubic_pair(3.0, Vec3(0.5, 0.5, 0.5));
  const Mat3 basis = Mat3::Identity() * 3.0;
  const double d = testing::brute_force_min_image(Vec3::Zero(), Vec3(0.5, 0.5, 0.5), basis);
  EXPECT_NEAR(d, 2.598076211353316, 1e-12);
  EXPECT_TRUE(structural_validity(s));
}

TEST(StructuralValidity, MinimumImageAcrossBoundary) {
  // 0.95 frac along x is 0.15 A from the origin image in a 3 A cube
  EXPECT_FALSE(structural_validity(cubic_pair(3.0, Vec3(0.95, 0.0, 0.0))));
}

TEST(StructuralValidity, TinyVolumeIsInvalidRegardlessOfDistances) {
  Coords frac(1, 3);
  frac << 0, 0, 0;
  const double a = std::cbrt(0.05);
  EXPECT_FALSE(structural_validity(make_material("tiny", {6}, frac, Vec3(a, a, a), Vec3(90, 90, 90))));
  const double b = std::cbrt(0.2);
  EXPECT_TRUE(structural_validity(make_material("ok", {6}, frac, Vec3(b, b, b), Vec3(90, 90, 90))));
}

TEST(StructuralValidity, DegenerateCellIsInvalidNotAnError) {
  auto s = cubic_pair(3.0, Vec3(0.5, 0.5, 0.5));
  s.lattice_angles = Vec3(60, 60, 179.9);
  EXPECT_FALSE(structural_validity(s));
}

TEST(StructuralValidity, MoleculeIsDomainMismatch) {
  EXPECT_EQ(kind_of([] { structural_validity(diatomic(1, 1, 0.74)); }), ErrorKind::DomainMismatch);
}

TEST(MoleculeSanity, HydrogenMolecule) {
  const auto c = molecule_sanity(diatomic(1, 1, 0.74));
  EXPECT_TRUE(c.connected);
  EXPECT_TRUE(c.bond_lengths);
  EXPECT_TRUE(c.no_clash);
  // cutoff 0.31 + 0.31 + 0.4
  EXPECT_TRUE(molecule_sanity(diatomic(1, 1, 1.01)).connected);
  EXPECT_FALSE(molecule_sanity(diatomic(1, 1, 1.03)).connected);
}

TEST(MoleculeSanity, BondLengthWindow) {
  // reference 0.62: window [0.465, 0.775]
  EXPECT_FALSE(molecule_sanity(diatomic(1, 1, 0.45)).bond_lengths);
  EXPECT_TRUE(molecule_sanity(diatomic(1, 1, 0.47)).bond_lengths);
  EXPECT_TRUE(molecule_sanity(diatomic(1, 1, 0.77)).bond_lengths);
  EXPECT_FALSE(molecule_sanity(diatomic(1, 1, 0.80)).bond_lengths);
}

TEST(MoleculeSanity, FragmentsTenAngstromApartAreDisconnected) {
  Coords x(4, 3);
  x << 0, 0, 0, 0.74, 0, 0, 10, 0, 0, 10.74, 0, 0;
  const auto c = molecule_sanity(make_molecule("two", {1, 1, 1, 1}, x));
  EXPECT_FALSE(c.connected);
  EXPECT_TRUE(c.bond_lengths);
  EXPECT_TRUE(c.no_clash);
}

TEST(MoleculeSanity, ToyMoleculesPassEveryCheck) {
  for (const auto& m : testing::toy_molecules()) EXPECT_TRUE(molecule_sanity(m).all()) << m.id;
}

TEST(MoleculeSanity, MaterialIsDomainMismatch) {
  EXPECT_EQ(kind_of([] { molecule_sanity(testing::toy_materials()[0]); }), ErrorKind::DomainMismatch);
}

TEST(Fingerprint, RotationAndReindexingInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (const auto& m : testing::toy_molecules()) {
    const Mat3 r = testing::axis_angle(Vec3(n01(rng), n01(rng), n01(rng)), n01(rng));
    EXPECT_TRUE(same_structure(fingerprint(m), fingerprint(rotated(m, r)), 1e-9)) << m.id;
    EXPECT_TRUE(same_structure(fingerprint(m), fingerprint(reversed(m)), 1e-12)) << m.id;
    const std::vector<AtomicSystem> pair{m, rotated(m, r)};
    EXPECT_DOUBLE_EQ(uniqueness_rate(pair), 0.5);
  }
}

TEST(Fingerprint, MaterialTranslationInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& m : testing::toy_materials()) {
    AtomicSystem shifted = m;
    const Eigen::RowVector3d shift(u(rng), u(rng), u(rng));
    Coords f = *m.frac_coords;
    for (int i = 0; i < f.rows(); ++i)
      for (int k = 0; k < 3; ++k) f(i, k) = std::fmod(f(i, k) + shift(k), 1.0);
    shifted.frac_coords = f;
    EXPECT_TRUE(same_structure(fingerprint(m), fingerprint(shifted), 1e-9)) << m.id;
    EXPECT_TRUE(same_structure(fingerprint(m), fingerprint(reversed(m)), 1e-12)) << m.id;
    EXPECT_EQ(structural_validity(shifted), structural_validity(m)) << m.id;
  }
}

TEST(Fingerprint, MaterialScaleIsNormalized) {
  const auto a = cubic_pair(3.0, Vec3(0.5, 0.5, 0.5));
  const auto b = cubic_pair(3.02, Vec3(0.5, 0.5, 0.5));
  EXPECT_TRUE(same_structure(fingerprint(a), fingerprint(b), 1e-9));
}

TEST(Fingerprint, CompositionAndDomainSeparate) {
  const auto hh = fingerprint(diatomic(1, 1, 0.74));
  const auto hd = fingerprint(diatomic(1, 3, 0.74));
  EXPECT_FALSE(same_structure(hh, hd));
  const auto stretched = fingerprint(diatomic(1, 1, 0.76));
  EXPECT_FALSE(same_structure(hh, stretched, 1e-2));
  EXPECT_TRUE(same_structure(hh, stretched, 0.03));
}

TEST(Uniqueness, DuplicateCollapseAndDistinct) {
  const auto toys = testing::toy_systems();
  EXPECT_DOUBLE_EQ(uniqueness_rate(toys), 1.0);
  for (int n : {1, 2, 5, 13}) {
    const std::vector<AtomicSystem> copies(static_cast<std::size_t>(n), toys[3]);
    EXPECT_DOUBLE_EQ(uniqueness_rate(copies), 1.0 / n);
  }
  EXPECT_EQ(kind_of([] { uniqueness_rate({}); }), ErrorKind::EmptyInput);
}

TEST(Uniqueness, FlagsMatchBruteForcePairwiseOracle) {
  // memorized samples: toy systems repeated with small jitter plus a few rotations
  const auto toys = testing::toy_systems();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(toys.size()) - 1);
  std::normal_distribution<double> n01;
  std::vector<AtomicSystem> samples;
  for (int i = 0; i < 40; ++i) {
    AtomicSystem s = toys[static_cast<std::size_t>(pick(rng))];
    if (s.cart_coords) s = rotated(s, testing::axis_angle(Vec3(0.3, 1.0, -0.2), n01(rng)));
    samples.push_back(s);
  }
  const auto flags = unique_flags(samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bool dup = false;
    for (std::size_t j = 0; j < i; ++j) dup = dup || samples[i].id == samples[j].id;
    EXPECT_EQ(flags[i], !dup) << i;
  }
  const auto expected = static_cast<double>(std::count(flags.begin(), flags.end(), true)) / 40.0;
  EXPECT_DOUBLE_EQ(uniqueness_rate(samples), expected);
}

TEST(TypeAccuracy, MultisetOverlapWithSameCountReference) {
  const auto toys = testing::toy_systems();
  for (const auto& s : toys) EXPECT_DOUBLE_EQ(atom_type_accuracy(s, toys), 1.0) << s.id;
  AtomicSystem water = testing::toy_molecules()[0];
  water.atomic_numbers = {8, 8, 1};
  EXPECT_NEAR(atom_type_accuracy(water, toys), 2.0 / 3.0, 1e-15);
  water.atomic_numbers = {1, 8, 1};
  EXPECT_DOUBLE_EQ(atom_type_accuracy(water, toys), 1.0);
  // no same-count reference in the other domain
  const std::vector<AtomicSystem> mats = testing::toy_materials();
  EXPECT_DOUBLE_EQ(atom_type_accuracy(water, mats), 0.0);
}

TEST(Evaluate, HalfValidMaterials) {
  std::vector<AtomicSystem> samples;
  for (int i = 0; i < 10; ++i) samples.push_back(cubic_pair(3.0, Vec3(0.5, 0.5, 0.5)));
  for (int i = 0; i < 10; ++i) samples.push_back(cubic_pair(3.0, Vec3(0.1, 0.0, 0.0)));
  const auto r = evaluate(samples);
  EXPECT_EQ(r.num_materials, 20);
  EXPECT_EQ(r.valid_materials, 10);
  EXPECT_DOUBLE_EQ(r.structural_validity, 0.5);
  EXPECT_EQ(r.unique, 2);
  EXPECT_FALSE(r.mean_type_accuracy.has_value());
}

TEST(Evaluate, RatesRecountExactlyAndBadSamplesDoNotAbort) {
  auto samples = testing::toy_systems();
  AtomicSystem degenerate = samples[5];
  degenerate.lattice_angles = Vec3(60, 60, 179.9);
  samples.push_back(degenerate);
  samples.push_back(diatomic(1, 1, 3.0));
  AtomicSystem clamped = samples[6];
  clamped.sample_flags = SampleFlags{true, false};
  samples.push_back(clamped);
  const auto toys = testing::toy_systems();
  const auto r = evaluate(samples, toys);
  ASSERT_EQ(r.num_samples, static_cast<int>(samples.size()));
  EXPECT_EQ(r.num_molecules, 5);
  EXPECT_EQ(r.num_materials, 6);
  EXPECT_EQ(r.valid_materials, 5);
  EXPECT_EQ(r.connected, 4);
  EXPECT_EQ(r.clamped, 1);
  EXPECT_EQ(r.unique, 10);
  EXPECT_EQ(r.in_reference, 9);
  EXPECT_FALSE(r.samples[8].in_reference.value());
  EXPECT_FALSE(r.samples[8].unique == false);

  int valid = 0, connected = 0, unique = 0;
  for (const auto& s : r.samples) {
    valid += s.valid.value_or(false) ? 1 : 0;
    connected += s.sanity && s.sanity->connected ? 1 : 0;
    unique += s.unique ? 1 : 0;
  }
  EXPECT_EQ(r.structural_validity, static_cast<double>(valid) / r.num_materials);
  EXPECT_EQ(r.connectivity, static_cast<double>(connected) / r.num_molecules);
  EXPECT_EQ(r.uniqueness, static_cast<double>(unique) / r.num_samples);

  const auto again = recount(r);
  EXPECT_EQ(again.structural_validity, r.structural_validity);
  EXPECT_EQ(again.connectivity, r.connectivity);
  EXPECT_EQ(again.bond_geometry, r.bond_geometry);
  EXPECT_EQ(again.clash_free_rate, r.clash_free_rate);
  EXPECT_EQ(again.uniqueness, r.uniqueness);
  EXPECT_EQ(again.mean_type_accuracy, r.mean_type_accuracy);
  EXPECT_EQ(again.reference_match_rate, r.reference_match_rate);
  for (double rate : {r.structural_validity, r.connectivity, r.bond_geometry, r.clash_free_rate, r.uniqueness})
    EXPECT_TRUE(rate >= 0.0 && rate <= 1.0);
}

TEST(Evaluate, ReindexedSamplesGiveTheSameReport) {
  const auto toys = testing::toy_systems();
  std::vector<AtomicSystem> flipped;
  for (const auto& s : toys) flipped.push_back(reversed(s));
  const auto a = evaluate(toys, toys);
  const auto b = evaluate(flipped, toys);
  EXPECT_EQ(a.valid_materials, b.valid_materials);
  EXPECT_EQ(a.connected, b.connected);
  EXPECT_EQ(a.bond_lengths_ok, b.bond_lengths_ok);
  EXPECT_EQ(a.unique, b.unique);
  EXPECT_EQ(a.in_reference, b.in_reference);
  EXPECT_EQ(a.mean_type_accuracy, b.mean_type_accuracy);
}

TEST(Evaluate, EmptyInput) {
  EXPECT_EQ(kind_of([] { evaluate({}); }), ErrorKind::EmptyInput);
}

}  // namespace
}  // namespace atomflow
