#include <gtest/gtest.h>

#include "atomflow/elements.hpp"
#include "atomflow/errors.hpp"
#include "atomflow/system.hpp"
#include "toy_systems.hpp"

namespace atomflow {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no atomflow::Error thrown";
  return ErrorKind::IoError;
}

Coords rows(std::initializer_list<std::array<double, 3>> r) {
  Coords c(static_cast<Eigen::Index>(r.size()), 3);
  Eigen::Index i = 0;
  for (const auto& row : r) c.row(i++) << row[0], row[1], row[2];
  return c;
}

TEST(BuildSystem, WaterMoleculeHasNoPeriodicFields) {
  const auto s = make_molecule("water", {8, 1, 1}, rows({{0, 0, 0}, {0.76, 0.59, 0}, {-0.76, 0.59, 0}}));
  EXPECT_EQ(s.num_atoms(), 3);
  EXPECT_FALSE(s.frac_coords.has_value());
  EXPECT_FALSE(s.lattice_lengths.has_value());
  EXPECT_FALSE(s.lattice_angles.has_value());
  EXPECT_TRUE(s.cart_coords.has_value());
}

TEST(BuildSystem, RejectsAngleBelowSixtyDegrees) {
  EXPECT_EQ(kind_of([] { make_material("m", {11}, rows({{0, 0, 0}}), Vec3(3, 3, 3), Vec3(45, 90, 90)); }),
            ErrorKind::RangeError);
}

TEST(BuildSystem, AcceptsBoundaryAngles) {
  EXPECT_NO_THROW(make_material("m", {11}, rows({{0, 0, 0}}), Vec3(3, 3, 3), Vec3(60, 120, 90)));
}

TEST(BuildSystem, FractionalCoordinateOneIsOutsideHalfOpenInterval) {
  EXPECT_EQ(kind_of([] { make_material("m", {11}, rows({{1.0, 0, 0}}), Vec3(3, 3, 3), Vec3(90, 90, 90)); }),
            ErrorKind::RangeError);
}

TEST(BuildSystem, MoleculeWithLatticeIsDomainMismatch) {
  AtomicSystem raw;
  raw.domain = DomainClass::Molecule;
  raw.atomic_numbers = {1};
  raw.cart_coords = rows({{0, 0, 0}});
  raw.lattice_lengths = Vec3(1, 1, 1);
  EXPECT_EQ(kind_of([&] { build_system(raw); }), ErrorKind::DomainFieldMismatch);
}

TEST(BuildSystem, MaterialWithoutLatticeOrWithCartIsDomainMismatch) {
  AtomicSystem raw;
  raw.domain = DomainClass::Material;
  raw.atomic_numbers = {1};
  raw.frac_coords = rows({{0, 0, 0}});
  EXPECT_EQ(kind_of([&] { build_system(raw); }), ErrorKind::DomainFieldMismatch);
  raw.lattice_lengths = Vec3(1, 1, 1);
  raw.lattice_angles = Vec3(90, 90, 90);
  raw.cart_coords = rows({{0, 0, 0}});
  EXPECT_EQ(kind_of([&] { build_system(raw); }), ErrorKind::DomainFieldMismatch);
}

TEST(BuildSystem, AtomicNumberRangeAndShapes) {
  EXPECT_EQ(kind_of([] { make_molecule("x", {0}, rows({{0, 0, 0}})); }), ErrorKind::RangeError);
  EXPECT_EQ(kind_of([] { make_molecule("x", {119}, rows({{0, 0, 0}})); }), ErrorKind::RangeError);
  EXPECT_NO_THROW(make_molecule("x", {118}, rows({{0, 0, 0}})));
  EXPECT_EQ(kind_of([] { make_molecule("x", {1, 1}, rows({{0, 0, 0}})); }), ErrorKind::ShapeError);
  EXPECT_EQ(kind_of([] { make_molecule("x", {}, Coords(0, 3)); }), ErrorKind::ShapeError);
}

TEST(BuildSystem, ForceRowsMustMatchAtoms) {
  auto s = make_molecule("x", {1, 1}, rows({{0, 0, 0}, {0.7, 0, 0}}));
  s.labels.forces = rows({{0, 0, 0}});
  EXPECT_EQ(kind_of([&] { build_system(s); }), ErrorKind::ShapeError);
  s.labels.forces = rows({{0, 0, 0}, {1, 0, 0}});
  EXPECT_NO_THROW(build_system(s));
}

TEST(BuildSystem, ToySystemsAreValid) {
  for (const auto& s : testing::toy_systems()) EXPECT_NO_THROW(validate_system(s)) << s.id;
  for (const auto& s : testing::labeled_toy_systems()) EXPECT_NO_THROW(validate_system(s)) << s.id;
}

TEST(Domain, ParseRoundTrip) {
  EXPECT_EQ(parse_domain(to_string(DomainClass::Molecule)), DomainClass::Molecule);
  EXPECT_EQ(parse_domain(to_string(DomainClass::Material)), DomainClass::Material);
  EXPECT_THROW(parse_domain("crystal-ish"), Error);
}

TEST(Elements, SymbolsRoundTripCaseInsensitively) {
  for (int z = 1; z <= kMaxAtomicNumber; ++z) EXPECT_EQ(atomic_number(element_symbol(z)), z);
  EXPECT_EQ(atomic_number("CL"), 17);
  EXPECT_EQ(atomic_number("cl"), 17);
  EXPECT_FALSE(atomic_number("Xx").has_value());
  EXPECT_GT(covalent_radius(6), 0.7);
  EXPECT_LT(covalent_radius(6), 0.8);
}

}  // namespace
}  // namespace atomflow
