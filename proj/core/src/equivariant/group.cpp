#include "atomflow/equivariant/group.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "atomflow/errors.hpp"

namespace atomflow::equivariant {

std::string_view to_string(GroupName name) noexcept {
  return name == GroupName::Tetrahedral ? "tetrahedral" : "octahedral";
}

GroupName parse_group(std::string_view name) {
  if (name == "tetrahedral") return GroupName::Tetrahedral;
  if (name == "octahedral") return GroupName::Octahedral;
  fail(ErrorKind::UnsupportedGroup, "unsupported group '" + std::string(name) + "'");
}

int GroupTable::find(const Eigen::Matrix3d& r) const {
  for (int i = 0; i < order; ++i)
    if ((rotations[static_cast<std::size_t>(i)] - r).cwiseAbs().maxCoeff() < 1e-9) return i;
  return -1;
}

namespace {

Eigen::Matrix3d permutation_matrix(const std::array<int, 3>& p) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int r = 0; r < 3; ++r) m(r, p[static_cast<std::size_t>(r)]) = 1.0;
  return m;
}

std::vector<Eigen::Matrix3d> tetrahedral_rotations() {
  const std::array<std::array<int, 3>, 3> cyclic = {{{0, 1, 2}, {1, 2, 0}, {2, 0, 1}}};
  const std::array<Eigen::Vector3d, 4> signs = {Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, -1, -1),
                                                Eigen::Vector3d(-1, 1, -1), Eigen::Vector3d(-1, -1, 1)};
  std::vector<Eigen::Matrix3d> out;
  for (const auto& p : cyclic)
    for (const auto& s : signs) out.push_back(s.asDiagonal() * permutation_matrix(p));
  return out;
}

std::vector<Eigen::Matrix3d> octahedral_rotations() {
  std::array<int, 3> p = {0, 1, 2};
  std::vector<Eigen::Matrix3d> out;
  do {
    for (int mask = 0; mask < 8; ++mask) {
      const Eigen::Vector3d s((mask & 1) ? -1.0 : 1.0, (mask & 2) ? -1.0 : 1.0, (mask & 4) ? -1.0 : 1.0);
      const Eigen::Matrix3d r = s.asDiagonal() * permutation_matrix(p);
      if (r.determinant() > 0.0) out.push_back(r);
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace

void verify_group(const GroupTable& group) {
  const auto bad = [](const std::string& msg) { fail(ErrorKind::UnsupportedGroup, "group table check failed: " + msg); };
  const int n = group.order;
  if (n < 1 || static_cast<int>(group.rotations.size()) != n || static_cast<int>(group.cayley.size()) != n ||
      static_cast<int>(group.inverses.size()) != n)
    bad("inconsistent sizes");
  if (!group.rotations[0].isIdentity(1e-12)) bad("element 0 is not the identity");
  for (int i = 0; i < n; ++i) {
    const auto& r = group.rotation(i);
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12) bad("non-orthogonal");
    if (std::abs(r.determinant() - 1.0) > 1e-12) bad("determinant != +1");
    if (group.cayley[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(n)) bad("ragged Cayley table");
    for (int j = 0; j < n; ++j) {
      const int k = group.multiply(i, j);
      if (k < 0 || k >= n) bad("not closed");
      if ((group.rotation(k) - r * group.rotation(j)).cwiseAbs().maxCoeff() > 1e-12) bad("Cayley entry mismatch");
    }
    if (group.multiply(i, group.inverse(i)) != 0 || group.multiply(group.inverse(i), i) != 0) bad("bad inverse");
  }
}

GroupTable build_group(GroupName name) {
  GroupTable g;
  g.name = name;
  g.rotations = name == GroupName::Tetrahedral ? tetrahedral_rotations() : octahedral_rotations();
  g.order = static_cast<int>(g.rotations.size());
  g.cayley.assign(static_cast<std::size_t>(g.order), std::vector<int>(static_cast<std::size_t>(g.order), -1));
  g.inverses.assign(static_cast<std::size_t>(g.order), -1);
  for (int i = 0; i < g.order; ++i) {
    for (int j = 0; j < g.order; ++j) {
      const int k = g.find(g.rotation(i) * g.rotation(j));
      if (k < 0) fail(ErrorKind::UnsupportedGroup, "rotation set is not closed");
      g.cayley[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = k;
      if (k == 0) g.inverses[static_cast<std::size_t>(i)] = j;
    }
  }
  verify_group(g);
  return g;
}

GroupTable build_group(std::string_view name) { return build_group(parse_group(name)); }

}  // namespace atomflow::equivariant
