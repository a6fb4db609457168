#include "atomflow/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "atomflow/errors.hpp"
#include "atomflow/geometry.hpp"

namespace atomflow {

void SampleSchedule::validate() const {
  if (num_steps < 1) fail(ErrorKind::ConfigError, "num_steps must be >= 1");
  if (!(gamma >= 0.0) || (gamma_cart && !(*gamma_cart >= 0.0))) fail(ErrorKind::ConfigError, "gamma must be >= 0");
  if (!(g_eps > 0.0)) fail(ErrorKind::ConfigError, "g_eps must be > 0");
  if (!(score_cutoff > 0.0 && score_cutoff <= 1.0)) fail(ErrorKind::ConfigError, "score_cutoff must be in (0, 1]");
  if (!time_grid.empty()) {
    if (static_cast<int>(time_grid.size()) != num_steps + 1)
      fail(ErrorKind::ConfigError, "time_grid must hold num_steps + 1 points");
    if (time_grid.front() != 0.0 || time_grid.back() != 1.0)
      fail(ErrorKind::ConfigError, "time_grid must run from 0 to 1");
    for (std::size_t i = 1; i < time_grid.size(); ++i)
      if (!(time_grid[i] > time_grid[i - 1])) fail(ErrorKind::ConfigError, "time_grid must be strictly increasing");
  }
}

std::vector<double> SampleSchedule::grid() const {
  if (!time_grid.empty()) return time_grid;
  std::vector<double> out(static_cast<std::size_t>(num_steps) + 1);
  for (int i = 0; i <= num_steps; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(i) / num_steps;
  out.back() = 1.0;
  return out;
}

double SampleSchedule::g(double t) const { return score_enabled && t < score_cutoff ? 1.0 / (t + g_eps) : 0.0; }

double SampleSchedule::gamma_for(Modality m) const {
  if (m == Modality::Cart && gamma_cart) return *gamma_cart;
  return gamma;
}

AtomCountHistogram::AtomCountHistogram(std::span<const AtomicSystem> systems) {
  for (const auto& s : systems) add(s.domain, s.num_atoms());
}

void AtomCountHistogram::add(DomainClass domain, int num_atoms, std::int64_t count) {
  if (num_atoms < 1) fail(ErrorKind::RangeError, "atom count must be >= 1");
  if (count < 1) fail(ErrorKind::RangeError, "histogram count must be >= 1");
  (domain == DomainClass::Molecule ? molecule_ : material_)[num_atoms] += count;
}

bool AtomCountHistogram::empty(DomainClass domain) const { return counts(domain).empty(); }

const std::map<int, std::int64_t>& AtomCountHistogram::counts(DomainClass domain) const {
  return domain == DomainClass::Molecule ? molecule_ : material_;
}

int AtomCountHistogram::draw(DomainClass domain, RngStream& rng) const {
  const auto& c = counts(domain);
  if (c.empty()) fail(ErrorKind::EmptyInput, "no atom-count statistics for domain " + std::string(to_string(domain)));
  std::vector<double> w;
  std::vector<int> keys;
  for (const auto& [n, count] : c) {
    keys.push_back(n);
    w.push_back(static_cast<double>(count));
  }
  return keys[static_cast<std::size_t>(rng.categorical(std::span<const double>(w)))];
}

void SampleRequest::validate() const {
  if (num_atoms && *num_atoms < 1) fail(ErrorKind::RangeError, "num_atoms must be >= 1");
  if (batch_size < 1) fail(ErrorKind::RangeError, "batch_size must be >= 1");
  schedule.validate();
}

namespace {

Coords normal_coords(int rows, RngStream& rng) {
  Coords c(rows, 3);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
  return c;
}

Vec3 normal_vec3(RngStream& rng) {
  const double a = rng.normal();
  const double b = rng.normal();
  const double c = rng.normal();
  return Vec3(a, b, c);
}

void check_time(double t, double dt) {
  if (!(t >= 0.0 && t < 1.0)) fail(ErrorKind::TimeOutOfRange, "step time must lie in [0, 1)");
  if (!(dt > 0.0)) fail(ErrorKind::RangeError, "dt must be > 0");
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

FlowState init_noise(DomainClass domain, int num_atoms, int num_types, RngStream& rng) {
  if (num_atoms < 1) fail(ErrorKind::RangeError, "num_atoms must be >= 1");
  if (num_types < 2) fail(ErrorKind::RangeError, "need at least two atom types");
  FlowState s;
  s.t = 0.0;
  s.domain = domain;
  s.noisy_types.resize(static_cast<std::size_t>(num_atoms));
  for (auto& a : s.noisy_types) {
    a = static_cast<int>(rng.uniform() * num_types);
    if (a >= num_types) a = num_types - 1;
  }
  if (domain == DomainClass::Molecule) {
    s.noisy_cart = normal_coords(num_atoms, rng);
  } else {
    s.noisy_frac = normal_coords(num_atoms, rng);
    s.noisy_lengths = normal_vec3(rng);
    s.noisy_angles = normal_vec3(rng);
  }
  return s;
}

Eigen::MatrixXd transition_probabilities(std::span<const int> types, const Eigen::MatrixXd& probs, double t,
                                         double dt) {
  check_time(t, dt);
  if (probs.rows() != static_cast<Eigen::Index>(types.size()))
    fail(ErrorKind::ShapeError, "transition_probabilities: probs rows != atom count");
  const Eigen::Index k = probs.cols();
  const double rate = dt / (1.0 - t);
  Eigen::MatrixXd out(probs.rows(), k);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int a = types[static_cast<std::size_t>(i)];
    if (a < 0 || a >= k) fail(ErrorKind::ShapeError, "transition_probabilities: type outside vocabulary");
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6 || (probs.row(i).array() < 0.0).any())
      fail(ErrorKind::RangeError, "transition_probabilities: probs rows must be distributions");
    Eigen::RowVectorXd r = rate * probs.row(i);
    r(a) = 0.0;
    r(a) = -r.sum();
    r(a) += 1.0;
    if ((r.array() < 0.0).any() || (r.array() > 1.0).any()) {
      r = r.cwiseMax(0.0).cwiseMin(1.0);
      r /= r.sum();
    }
    out.row(i) = r;
  }
  return out;
}

std::vector<int> discrete_flow_step(std::span<const int> types, const Eigen::MatrixXd& probs, double t, double dt,
                                    RngStream& rng, Eigen::MatrixXd* rows_out) {
  const Eigen::MatrixXd rows = transition_probabilities(types, probs, t, dt);
  std::vector<int> next(types.size());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const Eigen::RowVectorXd row = rows.row(i);
    next[static_cast<std::size_t>(i)] = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  if (rows_out) *rows_out = rows;
  return next;
}

Eigen::MatrixXd euclidean_step(const Eigen::MatrixXd& z, const Eigen::MatrixXd& z_pred, double t, double dt,
                               double gamma, const std::function<double(double)>& g_fn, RngStream& rng) {
  check_time(t, dt);
  if (z.rows() != z_pred.rows() || z.cols() != z_pred.cols())
    fail(ErrorKind::ShapeError, "euclidean_step: state and prediction shapes differ");
  if (!(gamma >= 0.0)) fail(ErrorKind::RangeError, "euclidean_step: gamma must be >= 0");
  const double g = g_fn ? g_fn(t) : 0.0;
  const Eigen::MatrixXd v = (z_pred - z) / (1.0 - t);
  Eigen::MatrixXd drift = v;
  if (g != 0.0) drift += g * (t * v - z) / (1.0 - t);
  const double noise_scale = std::sqrt(2.0 * gamma * g);
  if (noise_scale > 0.0)
    for (Eigen::Index j = 0; j < drift.cols(); ++j)
      for (Eigen::Index i = 0; i < drift.rows(); ++i) drift(i, j) += noise_scale * rng.normal();
  return z + drift * dt;
}

AtomicSystem decode_state(const FlowState& state, const AtomVocab& vocab, std::string id) {
  AtomicSystem out;
  out.id = std::move(id);
  out.domain = state.domain;
  for (int a : state.noisy_types) out.atomic_numbers.push_back(vocab.atomic_number_of(a));
  const int n = state.num_atoms();
  SampleFlags flags;
  if (state.domain == DomainClass::Molecule) {
    out.cart_coords = zero_center(*state.noisy_cart);
  } else {
    out.frac_coords = wrap_frac(*state.noisy_frac);
    auto [lengths, angles] = denormalize_lattice(FlowLattice{*state.noisy_lengths, *state.noisy_angles}, n);
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(lengths[i]) || !std::isfinite(angles[i]))
        fail(ErrorKind::NonFiniteInput, "decoded lattice is not finite");
      lengths[i] = std::abs(lengths[i]);
      if (lengths[i] < 1e-3) {
        lengths[i] = 1e-3;
        flags.lengths_floored = true;
      }
      if (angles[i] < 60.0 || angles[i] > 120.0) {
        angles[i] = std::clamp(angles[i], 60.0, 120.0);
        flags.angles_clamped = true;
      }
    }
    out.lattice_lengths = lengths;
    out.lattice_angles = angles;
  }
  out.sample_flags = flags;
  return build_system(std::move(out));
}

namespace {

constexpr std::uint64_t kCountStream = 7;

FlowState integrate(const EndpointPredictor& predictor, const SampleRequest& request, int num_atoms,
                    std::uint64_t index, std::vector<FlowState>* trajectory) {
  const auto& sch = request.schedule;
  const int k = predictor.num_atom_types();
  const ClassLabel label = class_of(request.domain);
  auto init_rng = RngStream::derive(sch.seed, {index, 0, 0});
  FlowState s = init_noise(request.domain, num_atoms, k, init_rng);
  const auto grid = sch.grid();
  const auto g_fn = [&sch](double t) { return sch.g(t); };
  auto stream = [&](std::size_t step, Modality m) {
    return RngStream::derive(sch.seed, {index, static_cast<std::uint64_t>(step), 1 + static_cast<std::uint64_t>(m)});
  };
  auto step_vec = [&](const Vec3& z, const Vec3& pred, double t, double dt, Modality m, RngStream& rng) {
    const Eigen::MatrixXd next = euclidean_step(z, pred, t, dt, sch.gamma_for(m), g_fn, rng);
    return Vec3(next(0, 0), next(1, 0), next(2, 0));
  };
  auto step_coords = [&](const Coords& z, const Coords& pred, double t, double dt, Modality m, RngStream& rng) {
    const Eigen::MatrixXd next = euclidean_step(z, pred, t, dt, sch.gamma_for(m), g_fn, rng);
    return Coords(next);
  };

  if (trajectory) trajectory->push_back(s);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double t = grid[i - 1];
    const double dt = grid[i] - t;
    s.t = t;
    const DenoiseOutput pred = predictor.predict(s, label);
    if (!pred.atom_logits.allFinite()) fail(ErrorKind::NonFiniteActivation, "predictor returned non-finite logits");

    auto rt = stream(i, Modality::Types);
    s.noisy_types = discrete_flow_step(s.noisy_types, softmax_rows(pred.atom_logits), t, dt, rt);
    if (s.domain == DomainClass::Molecule) {
      auto rc = stream(i, Modality::Cart);
      s.noisy_cart = step_coords(*s.noisy_cart, pred.cart, t, dt, Modality::Cart, rc);
    } else {
      auto rf = stream(i, Modality::Frac);
      auto rl = stream(i, Modality::Lengths);
      auto ra = stream(i, Modality::Angles);
      s.noisy_frac = step_coords(*s.noisy_frac, pred.frac, t, dt, Modality::Frac, rf);
      s.noisy_lengths = step_vec(*s.noisy_lengths, pred.lengths, t, dt, Modality::Lengths, rl);
      s.noisy_angles = step_vec(*s.noisy_angles, pred.angles, t, dt, Modality::Angles, ra);
    }
    s.t = grid[i];
    if (trajectory) trajectory->push_back(s);
  }
  return s;
}

}  // namespace

GenerateResult generate(const EndpointPredictor& predictor, const SampleRequest& request,
                        const AtomCountHistogram* histogram, const GenerateOptions& options) {
  request.validate();
  GenerateResult result;
  const AtomVocab vocab{predictor.num_atom_types()};
  const std::string prefix = request.domain == DomainClass::Molecule ? "mol-" : "mat-";
  for (int b = 0; b < request.batch_size; ++b) {
    const auto index = static_cast<std::uint64_t>(b);
    try {
      int n = 0;
      if (request.num_atoms) {
        n = *request.num_atoms;
      } else {
        if (!histogram) fail(ErrorKind::ConfigError, "atom count not given and no histogram available");
        auto rng = RngStream::derive(request.schedule.seed, {index, 0, kCountStream});
        n = histogram->draw(request.domain, rng);
      }
      std::vector<FlowState> traj;
      const FlowState final_state = integrate(predictor, request, n, index, options.keep_trajectories ? &traj : nullptr);
      result.systems.push_back(decode_state(final_state, vocab, prefix + std::to_string(b)));
      if (options.keep_trajectories) result.trajectories.push_back(std::move(traj));
    } catch (const Error& e) {
      result.failures.push_back(prefix + std::to_string(b) + ": " + e.what());
    }
  }
  return result;
}

}  // namespace atomflow
