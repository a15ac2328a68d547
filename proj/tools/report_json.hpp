#pragma once

#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "lropf/certify.hpp"
#include "lropf/engine.hpp"

namespace lropf::cli {

using nlohmann::ordered_json;

inline ordered_json to_json(const Certificate& c) {
  ordered_json j;
  j["rank_numeric"] = c.rank_numeric;
  j["sigma_ratio"] = c.sigma_ratio;
  j["stationarity_norm"] = c.stationarity_norm;
  j["min_eig_S"] = c.min_eig_S;
  j["norm_S"] = c.norm_S;
  j["aux_kkt"] = c.aux_kkt;
  j["verdict"] = to_string(c.verdict);
  return j;
}

/// Voltages are included only for a converged rank-1 solution.
inline ordered_json to_json(const SolveReport& rep, const Network& net,
                            const Certificate* cert) {
  ordered_json j;
  j["objective"] = rep.objective;
  j["infeasibility"] = rep.T_final;
  j["iterations"] = rep.iterations;
  j["rank"] = rep.rank;
  j["time_s"] = rep.wall_time;
  j["status"] = to_string(rep.status);
  if (rep.status == SolveStatus::converged && rep.rank == 1) {
    ordered_json vs = ordered_json::array();
    const auto V = extract_voltages(rep.state.R, net);
    for (std::size_t k = 0; k < V.size(); ++k)
      vs.push_back({{"bus", net.buses[k].id}, {"vm", std::abs(V[k])}, {"va_deg", std::arg(V[k]) * 180.0 / std::numbers::pi}});
    j["voltages"] = vs;
  }
  if (cert) j["certificate"] = to_json(*cert);
  return j;
}

}  // namespace lropf::cli
