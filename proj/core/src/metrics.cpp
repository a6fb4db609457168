#include "atomflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "atomflow/elements.hpp"
#include "atomflow/errors.hpp"
#include "atomflow/geometry.hpp"

namespace atomflow {

bool structural_validity(const AtomicSystem& material) {
  if (material.domain != DomainClass::Material) fail(ErrorKind::DomainMismatch, "structural_validity needs a material");
  Lattice lattice;
  try {
    lattice = lattice_of(material);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DegenerateCell) return false;
    throw;
  }
  if (lattice.volume() < 0.1) return false;
  for (double d : periodic_pairwise_distances(*material.frac_coords, lattice))
    if (d < 0.5) return false;
  return true;
}

MoleculeChecks molecule_sanity(const AtomicSystem& molecule) {
  if (molecule.domain != DomainClass::Molecule) fail(ErrorKind::DomainMismatch, "molecule_sanity needs a molecule");
  const auto& x = *molecule.cart_coords;
  const int n = molecule.num_atoms();
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    return i;
  };
  MoleculeChecks c;
  c.bond_lengths = true;
  c.no_clash = true;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double ref = covalent_radius(molecule.atomic_numbers[static_cast<std::size_t>(i)]) +
                         covalent_radius(molecule.atomic_numbers[static_cast<std::size_t>(j)]);
      const double d = (x.row(i) - x.row(j)).norm();
      if (d < ref + 0.4) {
        parent[static_cast<std::size_t>(find(i))] = find(j);
        if (d < 0.75 * ref || d > 1.25 * ref) c.bond_lengths = false;
      } else if (d < 0.8 * ref) {
        c.no_clash = false;
      }
    }
  int roots = 0;
  for (int i = 0; i < n; ++i) roots += find(i) == i ? 1 : 0;
  c.connected = roots == 1;
  return c;
}

StructureFingerprint fingerprint(const AtomicSystem& system) {
  StructureFingerprint f;
  f.domain = system.domain;
  f.composition = system.atomic_numbers;
  std::sort(f.composition.begin(), f.composition.end());
  if (system.domain == DomainClass::Molecule) {
    f.distances = pairwise_distances(*system.cart_coords);
  } else {
    const Lattice lattice = lattice_of(system);
    f.distances = periodic_pairwise_distances(*system.frac_coords, lattice);
    const double scale = std::cbrt(std::abs(lattice.volume()) / system.num_atoms());
    for (double& d : f.distances) d /= scale;
  }
  std::sort(f.distances.begin(), f.distances.end());
  return f;
}

bool same_structure(const StructureFingerprint& a, const StructureFingerprint& b, double tol) {
  if (a.domain != b.domain || a.composition != b.composition || a.distances.size() != b.distances.size()) return false;
  for (std::size_t i = 0; i < a.distances.size(); ++i)
    if (std::abs(a.distances[i] - b.distances[i]) > tol) return false;
  return true;
}

namespace {

// Degenerate cells have no fingerprint.
std::optional<StructureFingerprint> try_fingerprint(const AtomicSystem& system) {
  try {
    return fingerprint(system);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::vector<std::optional<StructureFingerprint>> fingerprints(std::span<const AtomicSystem> systems) {
  std::vector<std::optional<StructureFingerprint>> out;
  out.reserve(systems.size());
  for (const auto& s : systems) out.push_back(try_fingerprint(s));
  return out;
}

}  // namespace

std::vector<bool> unique_flags(std::span<const AtomicSystem> systems, double tol) {
  const auto fps = fingerprints(systems);
  std::vector<bool> unique(systems.size(), true);
  for (std::size_t i = 0; i < fps.size(); ++i) {
    if (!fps[i]) continue;
    for (std::size_t j = 0; j < i; ++j)
      if (fps[j] && same_structure(*fps[i], *fps[j], tol)) {
        unique[i] = false;
        break;
      }
  }
  return unique;
}

double uniqueness_rate(std::span<const AtomicSystem> systems, double tol) {
  if (systems.empty()) fail(ErrorKind::EmptyInput, "uniqueness_rate: no systems");
  const auto u = unique_flags(systems, tol);
  return static_cast<double>(std::count(u.begin(), u.end(), true)) / static_cast<double>(u.size());
}

double atom_type_accuracy(const AtomicSystem& sample, std::span<const AtomicSystem> reference) {
  std::map<int, int> mine;
  for (int z : sample.atomic_numbers) ++mine[z];
  int best = 0;
  for (const auto& r : reference) {
    if (r.domain != sample.domain || r.num_atoms() != sample.num_atoms()) continue;
    std::map<int, int> theirs;
    for (int z : r.atomic_numbers) ++theirs[z];
    int overlap = 0;
    for (const auto& [z, count] : mine) {
      const auto it = theirs.find(z);
      if (it != theirs.end()) overlap += std::min(count, it->second);
    }
    best = std::max(best, overlap);
  }
  return sample.num_atoms() > 0 ? static_cast<double>(best) / sample.num_atoms() : 0.0;
}

EvalReport recount(const EvalReport& in) {
  EvalReport r;
  r.samples = in.samples;
  r.num_samples = static_cast<int>(r.samples.size());
  double acc_sum = 0.0;
  int acc_count = 0;
  int ref_count = 0;
  for (const auto& s : r.samples) {
    if (!s.error.empty()) ++r.errors;
    if (s.unique) ++r.unique;
    if (s.angles_clamped || s.lengths_floored) ++r.clamped;
    if (s.domain == DomainClass::Material) {
      ++r.num_materials;
      if (s.valid.value_or(false)) ++r.valid_materials;
    } else {
      ++r.num_molecules;
      if (s.sanity) {
        r.connected += s.sanity->connected ? 1 : 0;
        r.bond_lengths_ok += s.sanity->bond_lengths ? 1 : 0;
        r.clash_free += s.sanity->no_clash ? 1 : 0;
      }
    }
    if (s.type_accuracy) {
      acc_sum += *s.type_accuracy;
      ++acc_count;
    }
    if (s.in_reference) {
      ++ref_count;
      if (*s.in_reference) ++r.in_reference;
    }
  }
  auto rate = [](int num, int den) { return den > 0 ? static_cast<double>(num) / den : 0.0; };
  r.structural_validity = rate(r.valid_materials, r.num_materials);
  r.connectivity = rate(r.connected, r.num_molecules);
  r.bond_geometry = rate(r.bond_lengths_ok, r.num_molecules);
  r.clash_free_rate = rate(r.clash_free, r.num_molecules);
  r.uniqueness = rate(r.unique, r.num_samples);
  if (acc_count > 0) r.mean_type_accuracy = acc_sum / acc_count;
  if (ref_count > 0) r.reference_match_rate = rate(r.in_reference, ref_count);
  return r;
}

EvalReport evaluate(std::span<const AtomicSystem> samples, std::span<const AtomicSystem> reference) {
  if (samples.empty()) fail(ErrorKind::EmptyInput, "evaluate: no samples");
  EvalReport report;
  const auto unique = unique_flags(samples);
  const auto ref_fps = fingerprints(reference);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    SampleRecord rec;
    rec.id = s.id;
    rec.domain = s.domain;
    rec.num_atoms = s.num_atoms();
    rec.unique = unique[i];
    if (s.sample_flags) {
      rec.angles_clamped = s.sample_flags->angles_clamped;
      rec.lengths_floored = s.sample_flags->lengths_floored;
    }
    try {
      if (s.domain == DomainClass::Material) {
        rec.valid = structural_validity(s);
      } else {
        rec.sanity = molecule_sanity(s);
      }
      if (!reference.empty()) {
        rec.type_accuracy = atom_type_accuracy(s, reference);
        bool hit = false;
        if (const auto fp = try_fingerprint(s))
          for (const auto& rf : ref_fps) hit = hit || (rf && same_structure(*fp, *rf));
        rec.in_reference = hit;
      }
    } catch (const Error& e) {
      rec.error = e.what();
      if (s.domain == DomainClass::Material) {
        rec.valid = false;
      } else if (!rec.sanity) {
        rec.sanity = MoleculeChecks{};
      }
    }
    report.samples.push_back(std::move(rec));
  }
  return recount(report);
}

}  // namespace atomflow
