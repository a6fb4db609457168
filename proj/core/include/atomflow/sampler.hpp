#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atomflow/denoiser.hpp"
#include "atomflow/flow.hpp"
#include "atomflow/rng.hpp"
#include "atomflow/system.hpp"

namespace atomflow {

enum class Modality { Types = 0, Cart = 1, Frac = 2, Lengths = 3, Angles = 4 };

struct SampleSchedule {
  int num_steps = 100;
  std::vector<double> time_grid;  // empty: uniform grid over num_steps
  double gamma = 0.01;
  std::optional<double> gamma_cart;  // churn override for Cartesian coordinates
  double g_eps = 0.01;
  bool score_enabled = true;  // false: g(t) = 0, which also silences the noise
  // g(t) = 0 for t >= score_cutoff; 1 keeps the score term on every step.
  double score_cutoff = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  /// t_0 = 0 < ... < t_S = 1.
  std::vector<double> grid() const;
  /// g(t) = 1 / (t + g_eps), or 0 when the score term is disabled or t >= score_cutoff.
  double g(double t) const;
  double gamma_for(Modality m) const;
};

/// Endpoint predictions for a noised state. Implemented by trained networks and by test oracles.
class EndpointPredictor {
 public:
  virtual ~EndpointPredictor() = default;
  virtual DenoiseOutput predict(const FlowState& state, ClassLabel label) const = 0;
  virtual int num_atom_types() const = 0;
};

template <typename T>
class ModelPredictor final : public EndpointPredictor {
 public:
  ModelPredictor(const Denoiser<T>& model, const nn::ParameterStore<T>& params) : model_(model), params_(params) {}
  DenoiseOutput predict(const FlowState& state, ClassLabel label) const override {
    return model_.predict(params_, state, label);
  }
  int num_atom_types() const override { return model_.num_atom_types(); }

 private:
  const Denoiser<T>& model_;
  const nn::ParameterStore<T>& params_;
};

/// Empirical distribution of atom counts per domain.
class AtomCountHistogram {
 public:
  AtomCountHistogram() = default;
  explicit AtomCountHistogram(std::span<const AtomicSystem> systems);

  void add(DomainClass domain, int num_atoms, std::int64_t count = 1);
  bool empty(DomainClass domain) const;
  int draw(DomainClass domain, RngStream& rng) const;
  const std::map<int, std::int64_t>& counts(DomainClass domain) const;

 private:
  std::map<int, std::int64_t> molecule_, material_;
};

struct SampleRequest {
  DomainClass domain = DomainClass::Molecule;
  std::optional<int> num_atoms;  // empty: draw from the histogram
  int batch_size = 1;
  SampleSchedule schedule;

  void validate() const;
};

/// t = 0 state: uniform atom types and standard-normal active continuous modalities.
FlowState init_noise(DomainClass domain, int num_atoms, int num_types, RngStream& rng);

/// Transition rows of the discrete step: r = dt/(1-t) probs, r[a_t] = -sum_{j != a_t} r[j],
/// p_next = onehot(a_t) + r, clamped to [0, 1] and renormalized when any entry left it.
Eigen::MatrixXd transition_probabilities(std::span<const int> types, const Eigen::MatrixXd& probs, double t, double dt);

/// One discrete step; each atom's new type is drawn from its transition row. When
/// `rows_out` is given it receives the rows used.
std::vector<int> discrete_flow_step(std::span<const int> types, const Eigen::MatrixXd& probs, double t, double dt,
                                    RngStream& rng, Eigen::MatrixXd* rows_out = nullptr);

/// z + (v + s + noise) dt with v = (z_pred - z)/(1-t), s = g(t) (t v - z)/(1-t) and
/// noise = sqrt(2 gamma g(t)) N(0, 1).
Eigen::MatrixXd euclidean_step(const Eigen::MatrixXd& z, const Eigen::MatrixXd& z_pred, double t, double dt,
                               double gamma, const std::function<double(double)>& g_fn, RngStream& rng);

struct GenerateOptions {
  bool keep_trajectories = false;
};

struct GenerateResult {
  std::vector<AtomicSystem> systems;
  std::vector<std::string> failures;             // one message per failed sample
  std::vector<std::vector<FlowState>> trajectories;  // per successful sample when requested
};

/// Integrates from noise to data with one discrete and one Euclidean step per active
/// modality, evaluating the predictor at the state time, then decodes each sample.
/// Sample k draws from streams keyed by (seed, k, step, modality).
GenerateResult generate(const EndpointPredictor& predictor, const SampleRequest& request,
                        const AtomCountHistogram* histogram = nullptr, const GenerateOptions& options = {});

/// Final flow state to AtomicSystem: molecules zero-centered; materials denormalized, frac
/// wrapped, |length| floored at 1e-3 A, angles clamped into [60, 120] with flags set.
AtomicSystem decode_state(const FlowState& state, const AtomVocab& vocab, std::string id);

}  // namespace atomflow
