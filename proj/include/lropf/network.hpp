#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace lropf {

/// Bus data in per-unit. Loads and shunts are divided by baseMVA on import.
struct Bus {
  int id = 0;
  int type = 1;
  double Pd = 0.0;
  double Qd = 0.0;
  double Gs = 0.0;
  double Bs = 0.0;
  double Vmin = 0.0;
  double Vmax = 0.0;
};

/// Generator limits are per-unit; cost coefficients stay in $/MW^2h, $/MWh, $/h.
struct Generator {
  int bus = 0;
  double Pmin = 0.0;
  double Pmax = 0.0;
  double Qmin = 0.0;
  double Qmax = 0.0;
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;
};

/// Pi-model branch. `shift` is in radians, `Smax` of 0 means unlimited.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double bc = 0.0;
  double Smax = 0.0;
  double tap = 1.0;
  double shift = 0.0;

  bool is_transformer() const { return tap != 1.0 || shift != 0.0; }
};

struct Network {
  double baseMVA = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Branch> branches;

  std::size_t num_buses() const { return buses.size(); }
  /// Dimension of the real lifted variable, 2|N|.
  std::size_t dim() const { return 2 * buses.size(); }

  /// Position of bus `id` in `buses`, or -1 when unknown.
  int index_of(int id) const {
    if (index_dirty_) rebuild_index();
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }

  void reindex() { index_dirty_ = true; }

 private:
  void rebuild_index() const {
    index_.clear();
    for (std::size_t k = 0; k < buses.size(); ++k)
      index_.emplace(buses[k].id, static_cast<int>(k));
    index_dirty_ = false;
  }

  mutable std::unordered_map<int, int> index_;
  mutable bool index_dirty_ = true;
};

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string message;
};

inline std::ostream& operator<<(std::ostream& os, const Diagnostic& d) {
  return os << (d.severity == Severity::Error ? "ERROR" : "WARNING") << ": "
            << d.message;
}

/// Check every structural invariant of `net`; one diagnostic per violation.
inline std::vector<Diagnostic> validate(const Network& net) {
  std::vector<Diagnostic> out;
  auto error = [&out](std::string msg) {
    out.push_back({Severity::Error, std::move(msg)});
  };

  if (!(net.baseMVA > 0.0))
    error("baseMVA must be positive");

  std::unordered_map<int, int> seen;
  for (const Bus& b : net.buses) {
    const std::string name = "bus " + std::to_string(b.id);
    if (++seen[b.id] == 2) error(name + ": duplicate bus id");
    if (b.Vmin < 0.0) error(name + ": Vmin is negative");
    if (b.Vmin > b.Vmax) error(name + ": Vmin exceeds Vmax");
  }

  for (std::size_t i = 0; i < net.gens.size(); ++i) {
    const Generator& g = net.gens[i];
    const std::string name = "generator " + std::to_string(i + 1);
    if (!seen.count(g.bus))
      error(name + ": unresolved bus " + std::to_string(g.bus));
    if (g.Pmin > g.Pmax) error(name + ": Pmin exceeds Pmax");
    if (g.Qmin > g.Qmax) error(name + ": Qmin exceeds Qmax");
    if (g.c2 < 0.0) error(name + ": nonconvex cost (c2 < 0)");
  }

  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const Branch& br = net.branches[i];
    const std::string name = "branch " + std::to_string(i + 1);
    if (!seen.count(br.from))
      error(name + ": unresolved bus " + std::to_string(br.from));
    if (!seen.count(br.to))
      error(name + ": unresolved bus " + std::to_string(br.to));
    if (br.r * br.r + br.x * br.x <= 0.0)
      error(name + ": zero series impedance");
    if (!(br.tap > 0.0)) error(name + ": tap ratio must be positive");
    if (br.Smax < 0.0) error(name + ": negative thermal limit");
  }
  return out;
}

}  // namespace lropf
