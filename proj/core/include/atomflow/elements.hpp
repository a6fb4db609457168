#pragma once

#include <optional>
#include <string_view>

namespace atomflow {

inline constexpr int kMaxAtomicNumber = 118;

/// Element symbol for Z in [1, 118].
std::string_view element_symbol(int z);

/// Case-insensitive symbol lookup ("Cl", "CL", "cl" all map to 17).
std::optional<int> atomic_number(std::string_view symbol);

/// Single-bond covalent radius in Angstrom (Cordero et al. 2008 table for Z <= 96,
/// 1.5 Angstrom beyond that).
double covalent_radius(int z);

}  // namespace atomflow
