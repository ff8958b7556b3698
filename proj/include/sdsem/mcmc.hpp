#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdsem/model.hpp"

namespace sdsem::mcmc {

struct McmcConfig {
  int m = 2, l = 2;
  int order = 2;
  int iterations = 5000, burn_in = 2000, thin = 5;
  int chains = 4;
  std::uint64_t seed = 1;
  PriorConfig prior;
  int rank_d = -1, rank_f = -1;  // negative: m - 1 and l - 1
  StateNoiseMode state_noise = StateNoiseMode::Diagonal;
  bool likelihood_enabled = true;
  bool ssvs_enabled = true;
  bool sample_gmrf_hypers = true;
  int prelim_iterations = 1000;
  std::optional<SsvsScales> ssvs_scales;  // skips the preliminary run when set
  std::vector<int> anchors_y, anchors_x;  // series rows; empty selects by clustering
  double ftilde_step = 0.01;
  double shear_step = 0.05;  // joint factor/loading shear moves; 0 disables
  double wishart_proposal_df = 50.0;
  int adapt_interval = 50;
  double init_spread = 1.0;  // scale of the chain-specific overdispersion

  int effective_rank_d() const { return rank_d >= 0 ? rank_d : std::max(m - 1, 0); }
  int effective_rank_f() const { return rank_f >= 0 ? rank_f : std::max(l - 1, 0); }
  int retained() const;
};

struct ChainMeta {
  int iterations = 0, burn_in = 0, thin = 1;
  std::uint64_t seed = 0;
  int chain_id = 0;
  std::map<std::string, double> acceptance;  // MH acceptance rates by block
};

struct PosteriorDraws {
  std::vector<SdSemParams> params;
  std::vector<ssm::FactorPath> factors;
  std::vector<double> deviance;
  ChainMeta meta;

  std::size_t size() const { return params.size(); }
  bool empty() const { return params.empty(); }
};

struct ChainState {
  SdSemParams params;
  ssm::FactorPath factors;
};

// --- full-conditional building blocks (exposed for testing) ---

// Gamma(shape + n/2, rate + sse/2) draw.
double sample_precision(double shape, double rate, double n, double sse, RandomSource& rng);

// Posterior inclusion probability of a spike-and-slab indicator.
double ssvs_inclusion_probability(double coef, double spike_var, double slab_var, double prior_prob);

// y(t) = Gamma x(t) + e(t), e ~ N(0, Omega^{-1}); independent N(0, prior_var)
// prior on each entry of Gamma (rows x cols = y dim x x dim). Returns a draw
// of Gamma. With likelihood off, draws from the prior.
MatrixXd sample_regression(const MatrixXd& y, const MatrixXd& x, const MatrixXd& omega, const MatrixXd& prior_var,
                           RandomSource& rng, bool likelihood = true);
// Posterior mean of the same model (for testing).
MatrixXd regression_posterior_mean(const MatrixXd& y, const MatrixXd& x, const MatrixXd& omega,
                                   const MatrixXd& prior_var);

// Loadings for one panel: rows = series, columns = factors. Anchor rows hold
// the unit lower-triangular identification block and are never resampled.
struct LoadingProblem {
  const MatrixXd* factors;   // T x k factor values
  const MatrixXd* data;      // T x n, de-meaned, NaN allowed
  const VectorXd* obs_var;   // n
  const lattice::AdjacencyMatrix* adjacency;
  const std::vector<lattice::GmrfSpec>* gmrfs;  // one per column
  const std::vector<int>* anchors;
  bool likelihood = true;
};
MatrixXd sample_loadings(const LoadingProblem& problem, const MatrixXd& current, RandomSource& rng);
// Posterior mean of the free entries conditional on the same quantities.
MatrixXd loadings_posterior_mean(const LoadingProblem& problem, const MatrixXd& current);
bool is_free_loading(int row, int col, const std::vector<int>& anchors);

// Draw beta for a GMRF column given its values.
VectorXd sample_gmrf_mean_coef(const lattice::AdjacencyMatrix& w, const lattice::GmrfSpec& spec, const VectorXd& h,
                               double prior_var, RandomSource& rng);

// Log full-conditional (up to a constant) of (T^{-1}, F̃) for one column;
// -inf when the joint precision is not positive definite.
double gmrf_hyper_log_target(const lattice::AdjacencyMatrix& w, const lattice::GmrfSpec& spec, const VectorXd& h,
                             const PriorConfig& prior);
// MH acceptance probability for moving from `current` to `proposal` under a
// symmetric proposal.
double mh_acceptance(double log_target_current, double log_target_proposal, double log_q_ratio = 0.0);

// Reparameterize by the unit lower-triangular shear I + c e_row e_col' of the
// y (or x) factors: factors -> S d, loadings -> H S^{-1}, ECM coefficients
// transformed so the fitted values and the innovations S eps are reproduced.
ChainState shear_state(const ChainState& state, bool x_panel, int row, int col, double c);

SsvsScales ssvs_scales_from_variances(const SsvsScales& variances, double floor = 1e-8);

class GibbsSampler {
 public:
  GibbsSampler(const data::PanelDataset& data, const McmcConfig& config, int chain_id);

  void initialize();
  void set_state(const ChainState& state) { state_ = state; }
  ChainState& state() { return state_; }
  const ChainState& state() const { return state_; }

  void sweep(bool adapting);

  void sample_factors();
  void sample_loadings();
  void sample_gmrf_hypers(bool adapting);
  void sample_obs_precisions();
  void sample_ecm_coeffs();
  void sample_state_noise();
  void sample_ssvs_indicators();
  void sample_means();
  void sample_shears(bool adapting);

  double current_deviance() const;
  std::map<std::string, double> acceptance_rates() const;
  RandomSource& rng() { return rng_; }

 private:
  struct MhTuner {
    double scale = 0.0;
    long proposed = 0, accepted = 0;
    long window_proposed = 0, window_accepted = 0;
    void record(bool accept) {
      ++proposed;
      ++window_proposed;
      if (accept) {
        ++accepted;
        ++window_accepted;
      }
    }
  };

  void mh_column(lattice::GmrfSpec& spec, const VectorXd& h, MhTuner& f_tuner, MhTuner& t_tuner);
  void adapt(MhTuner& tuner, bool is_df);

  const data::PanelDataset& data_;
  McmcConfig config_;
  int chain_id_;
  RandomSource rng_;
  ChainState state_;
  MatrixXd yt_, xt_;  // T x n views of the panels
  std::vector<MhTuner> ftune_y_, ttune_y_, ftune_x_, ttune_x_;
  std::vector<MhTuner> shear_y_, shear_x_;  // one per strictly lower entry
  long sweeps_ = 0;
};

PosteriorDraws run_chain(const data::PanelDataset& data, const McmcConfig& config, int chain_id);
// Runs config.chains chains concurrently, each with its own derived stream.
// The preliminary SSVS run is performed once if scales are not supplied.
std::vector<PosteriorDraws> run_chains(const data::PanelDataset& data, McmcConfig config);

SsvsScales preliminary_run(const data::PanelDataset& data, const McmcConfig& config);

double gelman_rubin(const std::vector<std::vector<double>>& chains);

// Identified scalar summaries of a draw, keyed by `param.block.index`.
std::vector<std::pair<std::string, double>> scalar_summaries(const SdSemParams& p);

std::vector<int> default_anchor_rows(const data::PanelDataset& data, int m, int l, std::uint64_t seed,
                                     std::vector<int>& anchors_x);

}  // namespace sdsem::mcmc
