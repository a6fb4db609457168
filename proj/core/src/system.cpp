#include "atomflow/system.hpp"

#include <cmath>
#include <string>

#include "atomflow/elements.hpp"
#include "atomflow/errors.hpp"

namespace atomflow {

std::string_view to_string(DomainClass domain) noexcept {
  return domain == DomainClass::Molecule ? "molecule" : "material";
}

DomainClass parse_domain(std::string_view text) {
  if (text == "molecule") return DomainClass::Molecule;
  if (text == "material") return DomainClass::Material;
  fail(ErrorKind::RangeError, "unknown domain '" + std::string(text) + "'");
}

void validate_system(const AtomicSystem& s) {
  const auto n = s.num_atoms();
  const std::string where = s.id.empty() ? std::string("system") : "system '" + s.id + "'";
  if (n < 1) fail(ErrorKind::ShapeError, where + " has no atoms");
  for (int z : s.atomic_numbers) {
    if (z < 1 || z > kMaxAtomicNumber) fail(ErrorKind::RangeError, where + ": atomic number " + std::to_string(z));
  }

  if (s.domain == DomainClass::Molecule) {
    if (s.frac_coords || s.lattice_lengths || s.lattice_angles)
      fail(ErrorKind::DomainFieldMismatch, where + ": molecule carries periodic fields");
    if (!s.cart_coords) fail(ErrorKind::DomainFieldMismatch, where + ": molecule without cart_coords");
    if (s.cart_coords->rows() != n) fail(ErrorKind::ShapeError, where + ": cart_coords row count != atom count");
    if (!s.cart_coords->allFinite()) fail(ErrorKind::RangeError, where + ": non-finite cart_coords");
  } else {
    if (!s.frac_coords || !s.lattice_lengths || !s.lattice_angles)
      fail(ErrorKind::DomainFieldMismatch, where + ": material missing frac_coords or lattice");
    if (s.cart_coords) fail(ErrorKind::DomainFieldMismatch, where + ": material carries cart_coords");
    if (s.frac_coords->rows() != n) fail(ErrorKind::ShapeError, where + ": frac_coords row count != atom count");
    const auto& f = *s.frac_coords;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double v = f.data()[i];
      if (!(v >= 0.0 && v < 1.0)) fail(ErrorKind::RangeError, where + ": fractional coordinate outside [0,1)");
    }
    for (int k = 0; k < 3; ++k) {
      const double len = (*s.lattice_lengths)[k];
      const double ang = (*s.lattice_angles)[k];
      if (!(len > 0.0) || !std::isfinite(len)) fail(ErrorKind::RangeError, where + ": lattice length must be > 0");
      if (!(ang >= 60.0 && ang <= 120.0))
        fail(ErrorKind::RangeError, where + ": lattice angle " + std::to_string(ang) + " outside [60,120]");
    }
  }

  if (s.labels.properties && s.labels.properties->size() != static_cast<std::size_t>(kNumProperties))
    fail(ErrorKind::ShapeError, where + ": properties must have 19 entries");
  if (s.labels.forces && s.labels.forces->rows() != n)
    fail(ErrorKind::ShapeError, where + ": forces row count != atom count");
}

AtomicSystem build_system(AtomicSystem raw) {
  validate_system(raw);
  return raw;
}

AtomicSystem make_molecule(std::string id, std::vector<int> atomic_numbers, Coords cart) {
  AtomicSystem s;
  s.id = std::move(id);
  s.domain = DomainClass::Molecule;
  s.atomic_numbers = std::move(atomic_numbers);
  s.cart_coords = std::move(cart);
  return build_system(std::move(s));
}

AtomicSystem make_material(std::string id, std::vector<int> atomic_numbers, Coords frac, Vec3 lengths,
                           Vec3 angles_deg) {
  AtomicSystem s;
  s.id = std::move(id);
  s.domain = DomainClass::Material;
  s.atomic_numbers = std::move(atomic_numbers);
  s.frac_coords = std::move(frac);
  s.lattice_lengths = lengths;
  s.lattice_angles = angles_deg;
  return build_system(std::move(s));
}

}  // namespace atomflow
