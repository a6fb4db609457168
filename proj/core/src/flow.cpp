#include "atomflow/flow.hpp"

#include <cmath>
#include <string>

#include "atomflow/errors.hpp"
#include "atomflow/nn/ops.hpp"

namespace atomflow {

int AtomVocab::index_of(int atomic_number) const {
  if (atomic_number < 1 || atomic_number > size)
    fail(ErrorKind::RangeError, "atomic number " + std::to_string(atomic_number) + " outside the " +
                                    std::to_string(size) + "-type vocabulary");
  return atomic_number - 1;
}

void LossWeights::validate() const {
  if (!(lambda_discrete >= 0.0 && lambda_discrete <= 1.0))
    fail(ErrorKind::ConfigError, "lambda_discrete must lie in [0, 1]");
  if (!(alpha_t > 0.0)) fail(ErrorKind::ConfigError, "alpha_t must be > 0");
}

double sample_time(RngStream& rng, double alpha_t) {
  if (!(alpha_t > 0.0)) fail(ErrorKind::RangeError, "alpha_t must be > 0");
  return std::pow(rng.uniform(), 1.0 / alpha_t);
}

std::vector<int> interpolate_discrete(std::span<const int> types, double t, int num_types, RngStream& rng) {
  if (num_types < 2) fail(ErrorKind::RangeError, "need at least two atom types");
  std::vector<int> out(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i] < 0 || types[i] >= num_types) fail(ErrorKind::RangeError, "atom type outside vocabulary");
    // Mixture draw: keep the clean type with probability t, else uniform over all types.
    if (t >= 1.0 || rng.uniform() < t) {
      out[i] = types[i];
    } else {
      out[i] = static_cast<int>(rng.uniform() * num_types);
      if (out[i] >= num_types) out[i] = num_types - 1;
    }
  }
  return out;
}

double loss_weight(double t) {
  if (t >= 1.0) return 100.0;
  const double one_minus = 1.0 - t;
  return std::min(100.0, 1.0 / (one_minus * one_minus));
}

double continuous_modality_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, int count) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    fail(ErrorKind::ShapeError, "continuous_modality_loss: prediction and target shapes differ");
  if (count < 1) fail(ErrorKind::ShapeError, "continuous_modality_loss: count must be >= 1");
  return (pred - target).squaredNorm() / count;
}

double discrete_loss(const Eigen::MatrixXd& logits, std::span<const int> types) {
  if (logits.rows() != static_cast<Eigen::Index>(types.size()) || logits.rows() == 0)
    fail(ErrorKind::ShapeError, "discrete_loss: logit rows != atom count");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int a = types[static_cast<std::size_t>(i)];
    if (a < 0 || a >= logits.cols()) fail(ErrorKind::ShapeError, "discrete_loss: type outside logit width");
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, a);
  }
  return total / static_cast<double>(logits.rows());
}

FlowState make_endpoints(const AtomicSystem& clean, const AtomVocab& vocab) {
  validate_system(clean);
  FlowState s;
  s.domain = clean.domain;
  s.t = 1.0;
  s.target_types.reserve(clean.atomic_numbers.size());
  for (int z : clean.atomic_numbers) s.target_types.push_back(vocab.index_of(z));
  AtomicSystem stored = clean;
  if (clean.domain == DomainClass::Molecule) {
    s.target_cart = zero_center(*clean.cart_coords);
    stored.cart_coords = s.target_cart;
  } else {
    s.target_frac = *clean.frac_coords;
    const auto norm = normalize_lattice_for_flow(*clean.lattice_lengths, *clean.lattice_angles, clean.num_atoms());
    s.target_lengths = norm.lengths;
    s.target_angles = norm.angles;
  }
  s.target = std::move(stored);
  s.noisy_types = s.target_types;
  s.noisy_cart = s.target_cart;
  s.noisy_frac = s.target_frac;
  s.noisy_lengths = s.target_lengths;
  s.noisy_angles = s.target_angles;
  return s;
}

namespace {

Coords gaussian_coords(Eigen::Index rows, RngStream& rng) {
  Coords c(rows, 3);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
  return c;
}

Vec3 gaussian_vec3(RngStream& rng) {
  const double a = rng.normal();
  const double b = rng.normal();
  const double c = rng.normal();
  return Vec3(a, b, c);
}

}  // namespace

FlowState noise_to_time(FlowState s, double t, int num_types, RngStream& rng) {
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::TimeOutOfRange, "flow time must lie in [0, 1]");
  s.t = t;
  s.noisy_types = interpolate_discrete(s.target_types, t, num_types, rng);
  const auto n = static_cast<Eigen::Index>(s.target_types.size());
  if (s.domain == DomainClass::Molecule) {
    s.eps_cart = gaussian_coords(n, rng);
    s.noisy_cart = interpolate_continuous(*s.target_cart, *s.eps_cart, t);
    s.noisy_frac.reset();
    s.noisy_lengths.reset();
    s.noisy_angles.reset();
  } else {
    s.eps_frac = gaussian_coords(n, rng);
    s.eps_lengths = gaussian_vec3(rng);
    s.eps_angles = gaussian_vec3(rng);
    s.noisy_frac = interpolate_continuous(*s.target_frac, *s.eps_frac, t);
    s.noisy_lengths = interpolate_continuous(*s.target_lengths, *s.eps_lengths, t);
    s.noisy_angles = interpolate_continuous(*s.target_angles, *s.eps_angles, t);
    s.noisy_cart.reset();
  }
  return s;
}

std::vector<FlowState> build_training_batch(std::span<const AtomicSystem> systems, int copies, double alpha_t,
                                            const AtomVocab& vocab, std::uint64_t seed, std::uint64_t step) {
  if (systems.empty()) fail(ErrorKind::EmptyBatch, "training batch has no systems");
  if (copies < 1) fail(ErrorKind::RangeError, "copies must be >= 1");
  std::vector<FlowState> batch;
  batch.reserve(systems.size() * static_cast<std::size_t>(copies));
  for (std::size_t i = 0; i < systems.size(); ++i) {
    for (int c = 0; c < copies; ++c) {
      auto rng = RngStream::derive(seed, {step, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c)});
      const AtomicSystem augmented = random_rigid_augment(systems[i], rng);
      const double t = sample_time(rng, alpha_t);
      batch.push_back(noise_to_time(make_endpoints(augmented, vocab), t, vocab.size, rng));
    }
  }
  return batch;
}

template <typename T>
TrainingLoss total_training_loss(nn::Graph<T>& g, const DenoiseVars& out, const FlowState& state,
                                 const LossWeights& weights) {
  using Mat = nn::Matrix<T>;
  const int n = state.num_atoms();
  if (n < 1) fail(ErrorKind::ShapeError, "empty flow state");
  if (g.value(out.atom_logits).rows() != n) fail(ErrorKind::DomainMismatch, "outputs and state disagree on N");

  TrainingLoss result;
  auto& b = result.breakdown;
  b.weight = loss_weight(state.t);
  const T beta = static_cast<T>(b.weight);

  std::vector<nn::Var> terms;
  std::vector<T> scales;

  const nn::Var disc = nn::cross_entropy(g, out.atom_logits, std::span<const int>(state.target_types));
  b.discrete = static_cast<double>(g.scalar(disc));
  terms.push_back(disc);
  scales.push_back(beta * static_cast<T>(weights.lambda_discrete));

  if (state.domain == DomainClass::Molecule) {
    if (!state.target_cart) fail(ErrorKind::DomainMismatch, "molecule state without cart endpoint");
    const Mat tgt = state.target_cart->template cast<T>();
    const nn::Var term = nn::squared_error(g, out.cart, tgt, static_cast<T>(n));
    b.cart = static_cast<double>(g.scalar(term));
    terms.push_back(term);
    scales.push_back(beta);
  } else {
    if (!state.target_frac || !state.target_lengths || !state.target_angles)
      fail(ErrorKind::DomainMismatch, "material state without periodic endpoints");
    const Mat frac = state.target_frac->template cast<T>();
    const Mat len = state.target_lengths->transpose().template cast<T>();
    const Mat ang = state.target_angles->transpose().template cast<T>();
    const nn::Var tf = nn::squared_error(g, out.frac, frac, static_cast<T>(n));
    const nn::Var tl = nn::squared_error(g, out.lengths, len, T(3));
    const nn::Var ta = nn::squared_error(g, out.angles, ang, T(3));
    b.frac = static_cast<double>(g.scalar(tf));
    b.lengths = static_cast<double>(g.scalar(tl));
    b.angles = static_cast<double>(g.scalar(ta));
    for (nn::Var v : {tf, tl, ta}) {
      terms.push_back(v);
      scales.push_back(beta);
    }
  }
  b.total = b.cart + b.frac + b.lengths + b.angles + weights.lambda_discrete * b.discrete;
  result.weighted = nn::weighted_sum(g, std::span<const nn::Var>(terms), std::span<const T>(scales));
  b.weighted = static_cast<double>(g.scalar(result.weighted));
  return result;
}

template TrainingLoss total_training_loss<float>(nn::Graph<float>&, const DenoiseVars&, const FlowState&,
                                                 const LossWeights&);
template TrainingLoss total_training_loss<double>(nn::Graph<double>&, const DenoiseVars&, const FlowState&,
                                                  const LossWeights&);

}  // namespace atomflow
