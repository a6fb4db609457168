#pragma once

#include <string>
#include <vector>

#include "atomflow/rng.hpp"
#include "atomflow/system.hpp"

namespace atomflow::bench {

/// Half molecules, half cubic materials, each with `atoms` atoms of H/C/N/O.
inline std::vector<AtomicSystem> random_systems(int count, int atoms, std::uint64_t seed) {
  auto rng = RngStream::derive(seed, {});
  const int elements[] = {1, 6, 7, 8};
  std::vector<AtomicSystem> out;
  for (int s = 0; s < count; ++s) {
    std::vector<int> z(static_cast<std::size_t>(atoms));
    for (auto& e : z) e = elements[rng.next_u64() % 4];
    if (s % 2 == 0) {
      const Coords x = Coords::NullaryExpr(atoms, 3, [&] { return 1.5 * rng.normal(); });
      out.push_back(make_molecule("m" + std::to_string(s), std::move(z), x));
    } else {
      const Coords f = Coords::NullaryExpr(atoms, 3, [&] { return rng.uniform(); });
      out.push_back(make_material("c" + std::to_string(s), std::move(z), f, Vec3(5, 5, 5), Vec3(90, 90, 90)));
    }
  }
  return out;
}

}  // namespace atomflow::bench
