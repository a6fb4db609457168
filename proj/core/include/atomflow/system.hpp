#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atomflow {

/// N x 3 row-major coordinate block (one atom per row).
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kNumProperties = 19;

enum class DomainClass { Molecule = 0, Material = 1 };

std::string_view to_string(DomainClass domain) noexcept;
DomainClass parse_domain(std::string_view text);

struct LabelSet {
  /// 19 targets; individual entries may be missing.
  std::optional<std::vector<std::optional<double>>> properties;
  std::optional<double> energy;
  std::optional<Coords> forces;

  bool empty() const { return !properties && !energy && !forces; }
};

/// Decode-time bookkeeping attached to generated samples.
struct SampleFlags {
  bool angles_clamped = false;
  bool lengths_floored = false;
};

/// One molecule or crystal. Molecules carry Cartesian coordinates only; materials carry
/// fractional coordinates plus lattice lengths (Angstrom) and angles (degrees).
struct AtomicSystem {
  std::string id;
  DomainClass domain = DomainClass::Molecule;
  std::vector<int> atomic_numbers;
  std::optional<Coords> cart_coords;
  std::optional<Coords> frac_coords;
  std::optional<Vec3> lattice_lengths;
  std::optional<Vec3> lattice_angles;
  LabelSet labels;
  std::optional<SampleFlags> sample_flags;

  int num_atoms() const { return static_cast<int>(atomic_numbers.size()); }
  bool is_material() const { return domain == DomainClass::Material; }
};

/// Checks every data-model invariant and returns the system unchanged, or throws
/// DomainFieldMismatch / RangeError / ShapeError.
AtomicSystem build_system(AtomicSystem raw);

void validate_system(const AtomicSystem& system);

AtomicSystem make_molecule(std::string id, std::vector<int> atomic_numbers, Coords cart);
AtomicSystem make_material(std::string id, std::vector<int> atomic_numbers, Coords frac, Vec3 lengths,
                           Vec3 angles_deg);

}  // namespace atomflow
