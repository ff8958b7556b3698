#pragma once

#include <string>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem::irf {

// Companion system for the exogenous-forcing view of the factor dynamics.
// State [g(t) .. g(t-p+1); f(t) .. f(t-s+1)]; f enters only through B.
struct CompanionJQB {
  MatrixXd selector;    // J: m x (mp + ls)
  MatrixXd transition;  // Q
  MatrixXd input;       // B: (mp + ls) x l
};

CompanionJQB build_jqb(const ssm::FactorDynamics& dyn);

// Gamma_0 .. Gamma_K, each (N n_y) x (N n_x).
std::vector<MatrixXd> impulse_response(const SdSemParams& params, int horizon);
std::vector<MatrixXd> impulse_response(const CompanionJQB& jqb, const MatrixXd& h_y, const MatrixXd& h_x,
                                       int horizon);

struct MultiplierSeries {
  int horizon = 0;
  std::vector<std::vector<MatrixXd>> draws;  // [draw][k]
  std::vector<MatrixXd> mean, p16, p84, p05, p95;

  std::size_t n_draws() const { return draws.size(); }
};

MultiplierSeries multiplier_posterior(const std::vector<mcmc::PosteriorDraws>& chains, int horizon);
MultiplierSeries multiplier_posterior(const mcmc::PosteriorDraws& chain, int horizon);

std::string irf_csv(const MultiplierSeries& series, const data::PanelDataset& layout);

}  // namespace sdsem::irf
