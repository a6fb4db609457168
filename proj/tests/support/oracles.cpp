#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace atomflow::testing {

std::int64_t tft_parameter_count(const TftConfig& c) {
  const std::int64_t d = c.d_model, h = c.num_heads, f = static_cast<std::int64_t>(c.ffn_multiplier) * d;
  const std::int64_t k = c.num_atom_types, p = c.num_properties;
  const std::int64_t norm = 2 * d;
  const std::int64_t attention = 4 * d * d + h;
  const std::int64_t swiglu = 3 * d * f;
  const std::int64_t encoder = 2 * norm + attention + swiglu;
  const std::int64_t decoder = 3 * norm + attention + swiglu;

  std::int64_t total = k * d + 3 * d;              // atom and class tables
  total += c.time_embed_dim * d + d;               // time projection
  total += 4 * 3 * d;                              // cart, frac, length, angle projections
  total += c.num_trunk_layers * encoder + norm;    // trunk
  total += decoder + 5 * (d * d + d);              // denoising decoder and adapters
  total += (d * d + d) + (d * k + k);              // atom head
  total += 4 * (norm + 3 * d);                     // cart, frac, length, angle heads
  const std::int64_t aux_body = decoder + c.num_aux_layers * encoder + norm;
  total += aux_body + d * p + p;  // properties
  total += aux_body + d + 1;      // energy
  total += aux_body + 3 * d;      // forces
  return total;
}

double brute_force_min_image(const Vec3& a, const Vec3& b, const Mat3& basis, int range) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = -range; i <= range; ++i)
    for (int j = -range; j <= range; ++j)
      for (int l = -range; l <= range; ++l) {
        const Vec3 shift(i, j, l);
        const Eigen::RowVector3d d = (b - a + shift).transpose() * basis;
        best = std::min(best, d.norm());
      }
  return best;
}

Mat3 metric_tensor(const Vec3& len, const Vec3& ang) {
  const double r = std::numbers::pi / 180.0;
  const double ca = std::cos(ang[0] * r), cb = std::cos(ang[1] * r), cg = std::cos(ang[2] * r);
  Mat3 g;
  g << len[0] * len[0], len[0] * len[1] * cg, len[0] * len[2] * cb,  //
      len[0] * len[1] * cg, len[1] * len[1], len[1] * len[2] * ca,    //
      len[0] * len[2] * cb, len[1] * len[2] * ca, len[2] * len[2];
  return g;
}

std::vector<Mat3> tetrahedral_by_closure() {
  Mat3 rz;
  rz << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  Mat3 cyc;
  cyc << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  std::vector<Mat3> group = {Mat3::Identity()};
  bool grew = true;
  while (grew) {
    grew = false;
    const auto current = group;
    for (const auto& g : current)
      for (const Mat3* gen : {&rz, &cyc}) {
        const Mat3 p = *gen * g;
        bool seen = false;
        for (const auto& q : group) seen = seen || (p - q).cwiseAbs().maxCoeff() < 1e-12;
        if (!seen) {
          group.push_back(p);
          grew = true;
        }
      }
  }
  return group;
}

Mat3 axis_angle(Vec3 axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double up = f();
  x = x0 - h;
  const double down = f();
  x = x0;
  return (up - down) / (2.0 * h);
}

DenoiseOutput EndpointOracle::predict(const FlowState& state, ClassLabel) const {
  DenoiseOutput out;
  const int n = state.num_atoms();
  out.atom_logits = Eigen::MatrixXd::Zero(n, num_types_);
  for (int i = 0; i < n; ++i) out.atom_logits(i, target_.target_types[static_cast<std::size_t>(i)]) = gap_;
  auto round = [this](auto m) {
    if (as_float_) m = m.template cast<float>().template cast<double>();
    return m;
  };
  if (target_.target_cart) out.cart = round(Coords(*target_.target_cart));
  if (target_.target_frac) out.frac = round(Coords(*target_.target_frac));
  if (target_.target_lengths) out.lengths = round(Vec3(*target_.target_lengths));
  if (target_.target_angles) out.angles = round(Vec3(*target_.target_angles));
  return out;
}

}  // namespace atomflow::testing
