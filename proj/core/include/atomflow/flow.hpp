#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "atomflow/geometry.hpp"
#include "atomflow/nn/graph.hpp"
#include "atomflow/rng.hpp"
#include "atomflow/system.hpp"

namespace atomflow {

/// Class label fed to the class embedding; Null is the dropout token.
enum class ClassLabel { Molecule = 0, Material = 1, Null = 2 };

inline ClassLabel class_of(DomainClass d) {
  return d == DomainClass::Molecule ? ClassLabel::Molecule : ClassLabel::Material;
}

/// Atom-type vocabulary: atomic number Z <-> index Z - 1, for Z <= size.
struct AtomVocab {
  int size = 100;

  int index_of(int atomic_number) const;
  int atomic_number_of(int index) const { return index + 1; }
};

/// One noised training (or sampling) example at time t. Inactive modalities are empty.
struct FlowState {
  double t = 0.0;
  DomainClass domain = DomainClass::Molecule;

  std::vector<int> noisy_types;
  std::optional<Coords> noisy_cart;
  std::optional<Coords> noisy_frac;
  std::optional<Vec3> noisy_lengths;  // normalized by N^(1/3)
  std::optional<Vec3> noisy_angles;   // radians

  std::optional<Coords> eps_cart;
  std::optional<Coords> eps_frac;
  std::optional<Vec3> eps_lengths;
  std::optional<Vec3> eps_angles;

  // Flow-space endpoints (what the network is trained to predict).
  std::vector<int> target_types;
  std::optional<Coords> target_cart;
  std::optional<Coords> target_frac;
  std::optional<Vec3> target_lengths;
  std::optional<Vec3> target_angles;

  /// The clean, augmented system including its labels.
  std::optional<AtomicSystem> target;

  int num_atoms() const { return static_cast<int>(noisy_types.size()); }
  bool is_material() const { return domain == DomainClass::Material; }
};

struct LossWeights {
  double lambda_discrete = 0.1;
  double alpha_t = 1.8;

  void validate() const;
};

/// t ~ Beta(alpha, 1), drawn as U^(1/alpha).
double sample_time(RngStream& rng, double alpha_t);

template <typename Derived>
typename Derived::PlainObject interpolate_continuous(const Eigen::MatrixBase<Derived>& x1,
                                                     const Eigen::MatrixBase<Derived>& eps, double t);

/// Each atom independently keeps its type with probability t + (1-t)/K and otherwise
/// lands on any of the K types uniformly: A_t ~ Cat(t delta(A) + (1-t)/K).
std::vector<int> interpolate_discrete(std::span<const int> types, double t, int num_types, RngStream& rng);

/// beta(t) = min(100, 1/(1-t)^2); 100 at t = 1.
double loss_weight(double t);

/// Squared error summed over components divided by `count` (atoms, or 3 for lattice terms).
double continuous_modality_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, int count);

/// Mean negative log-softmax probability of the true type.
double discrete_loss(const Eigen::MatrixXd& logits, std::span<const int> types);

/// Clean endpoints in flow space: molecules zero-centered, material lattices normalized.
FlowState make_endpoints(const AtomicSystem& clean, const AtomVocab& vocab);

/// Noises every active modality of `endpoints` to time t.
FlowState noise_to_time(FlowState endpoints, double t, int num_types, RngStream& rng);

/// Augmented, noised copies: every system appears `copies` times with its own rotation or
/// translation, time and noise. Copy c of system i draws from stream (seed, step, i, c).
std::vector<FlowState> build_training_batch(std::span<const AtomicSystem> systems, int copies, double alpha_t,
                                            const AtomVocab& vocab, std::uint64_t seed, std::uint64_t step);

// --- graph-level losses -------------------------------------------------------------

/// Denoiser outputs recorded on a graph. Shapes: logits N x K, cart/frac N x 3,
/// lengths/angles 1 x 3.
struct DenoiseVars {
  nn::Var atom_logits, cart, frac, lengths, angles;
};

struct LossBreakdown {
  double cart = 0.0;
  double frac = 0.0;
  double lengths = 0.0;
  double angles = 0.0;
  double discrete = 0.0;
  double total = 0.0;     // L_total
  double weight = 1.0;    // beta(t)
  double weighted = 0.0;  // beta(t) * L_total
};

struct TrainingLoss {
  nn::Var weighted;  // beta(t) * L_total, the quantity to minimize
  LossBreakdown breakdown;
};

/// L_total over the modalities active for the state's domain (masked terms are exactly 0)
/// scaled by beta(t).
template <typename T>
TrainingLoss total_training_loss(nn::Graph<T>& g, const DenoiseVars& out, const FlowState& state,
                                 const LossWeights& weights);

}  // namespace atomflow

#include "atomflow/flow_impl.hpp"
