#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atomflow/system.hpp"

namespace atomflow {

/// Minimum-image distances >= 0.5 A and cell volume >= 0.1 A^3. Degenerate cells are invalid.
bool structural_validity(const AtomicSystem& material);

struct MoleculeChecks {
  bool connected = false;     // bond graph is one component
  bool bond_lengths = false;  // bonded pairs within [0.75, 1.25] of the radii sum
  bool no_clash = false;      // non-bonded pairs beyond 0.8 of the radii sum
  bool all() const { return connected && bond_lengths && no_clash; }
};

/// Bond between i and j when d < r_i + r_j + 0.4 A (covalent radii).
MoleculeChecks molecule_sanity(const AtomicSystem& molecule);

/// Sorted atomic numbers followed by sorted pair distances; minimum-image distances scaled
/// by (V/N)^(-1/3) for materials, raw Angstrom for molecules.
struct StructureFingerprint {
  DomainClass domain = DomainClass::Molecule;
  std::vector<int> composition;
  std::vector<double> distances;
};
StructureFingerprint fingerprint(const AtomicSystem& system);
bool same_structure(const StructureFingerprint& a, const StructureFingerprint& b, double tol = 1e-2);

/// unique[i] is false when system i matches an earlier system.
std::vector<bool> unique_flags(std::span<const AtomicSystem> systems, double tol = 1e-2);
double uniqueness_rate(std::span<const AtomicSystem> systems, double tol = 1e-2);

/// Largest fraction of atoms whose element can be paired with a reference system of the same
/// domain and atom count (multiset overlap / N); 0 when no reference has that count.
double atom_type_accuracy(const AtomicSystem& sample, std::span<const AtomicSystem> reference);

struct SampleRecord {
  std::string id;
  DomainClass domain = DomainClass::Molecule;
  int num_atoms = 0;
  std::optional<bool> valid;          // materials
  std::optional<MoleculeChecks> sanity;  // molecules
  bool unique = true;
  std::optional<bool> in_reference;   // matches a reference structure
  std::optional<double> type_accuracy;
  bool angles_clamped = false;
  bool lengths_floored = false;
  std::string error;  // non-empty when a check threw
};

struct EvalReport {
  int num_samples = 0;
  int num_molecules = 0;
  int num_materials = 0;
  int valid_materials = 0;
  int connected = 0;
  int bond_lengths_ok = 0;
  int clash_free = 0;
  int unique = 0;
  int clamped = 0;
  int errors = 0;
  int in_reference = 0;
  double structural_validity = 0.0;  // over materials
  double connectivity = 0.0;         // over molecules
  double bond_geometry = 0.0;
  double clash_free_rate = 0.0;
  double uniqueness = 0.0;
  std::optional<double> mean_type_accuracy;
  std::optional<double> reference_match_rate;
  std::vector<SampleRecord> samples;
};

/// Per-sample checks and aggregate rates. A check that throws marks only that sample as
/// failed. Rates use the per-sample flags so they recount exactly.
EvalReport evaluate(std::span<const AtomicSystem> samples, std::span<const AtomicSystem> reference = {});

/// Recomputes every count and rate of `report` from its per-sample records.
EvalReport recount(const EvalReport& report);

}  // namespace atomflow
