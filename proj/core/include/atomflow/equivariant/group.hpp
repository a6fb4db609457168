#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

namespace atomflow::equivariant {

enum class GroupName { Tetrahedral, Octahedral };

std::string_view to_string(GroupName name) noexcept;
/// Accepts "tetrahedral" / "octahedral"; anything else raises UnsupportedGroup.
GroupName parse_group(std::string_view name);

/// Finite rotation group with its Cayley table. Element 0 is the identity and
/// rotations[cayley[i][j]] = rotations[i] * rotations[j].
struct GroupTable {
  GroupName name = GroupName::Tetrahedral;
  int order = 0;
  std::vector<Eigen::Matrix3d> rotations;
  std::vector<std::vector<int>> cayley;
  std::vector<int> inverses;

  int multiply(int i, int j) const { return cayley[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  int inverse(int i) const { return inverses[static_cast<std::size_t>(i)]; }
  const Eigen::Matrix3d& rotation(int i) const { return rotations[static_cast<std::size_t>(i)]; }
  /// Index of the element whose matrix matches `r` within 1e-9; -1 if none.
  int find(const Eigen::Matrix3d& r) const;
};

/// Tetrahedral: the 12 rotations D*P with P a cyclic coordinate permutation and D a sign
/// diagonal with an even number of -1 entries. Octahedral: the 24 signed permutation
/// matrices of determinant +1. Every table invariant is checked before returning.
GroupTable build_group(GroupName name);
GroupTable build_group(std::string_view name);

/// Throws if closure, identity, inverse, orthogonality or composition checks fail.
void verify_group(const GroupTable& group);

}  // namespace atomflow::equivariant
