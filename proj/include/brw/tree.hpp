#pragma once

// Branching random walk simulation under the original measure P: an
// append-only particle arena with generations stored contiguously, horizon
// and upper-barrier truncation with an explicit killed-mass ledger, the
// additive/derivative/truncated martingales, the global minimum, and the
// minimum-anchored decomposition of the derivative martingale.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "brw/models.hpp"
#include "brw/rng.hpp"

namespace brw::sim {

struct BarrierPolicy {
  enum class Kind { None, Fixed, Adaptive };

  Kind kind = Kind::None;
  double y_max = std::numeric_limits<double>::infinity();
  double min_event_level = 0.0;  // the x in the e^{-(x+y)} killed-mass ledger
  double slack = 15.0;
  bool compensate = false;  // track killed-mass compensators for W_n and D_n

  static BarrierPolicy none() { return {}; }

  static BarrierPolicy fixed(double y_max, double min_event_level = 0.0) {
    BarrierPolicy b;
    b.kind = Kind::Fixed;
    b.y_max = y_max;
    b.min_event_level = min_event_level;
    return b;
  }

  static BarrierPolicy adaptive(double min_event_level, double slack = 15.0) {
    BarrierPolicy b;
    b.kind = Kind::Adaptive;
    b.min_event_level = min_event_level;
    b.slack = slack;
    b.y_max = min_event_level + slack;
    return b;
  }

  bool active() const { return kind != Kind::None; }
  double barrier() const { return y_max; }
};

struct Particle {
  std::int32_t parent;  // -1 for the root
  double position;
};

struct PopulationCapExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TreeState {
  std::vector<Particle> particles;
  std::vector<std::int64_t> gen_begin;  // generations() + 1 offsets
  int horizon = 0;
  std::optional<double> upper_barrier;
  double killed_mass_bound = 0.0;
  // Cumulative killed-mass compensators by generation (only when enabled):
  // comp_w[n] restores E W_n = 1, comp_d[n] restores E D_n = 0 exactly.
  std::vector<double> comp_w, comp_d;

  int generations() const { return static_cast<int>(gen_begin.size()) - 1; }

  std::pair<std::int64_t, std::int64_t> gen_range(int g) const {
    return {gen_begin[g], gen_begin[g + 1]};
  }

  std::int64_t frontier_size() const {
    return gen_begin.back() - gen_begin[gen_begin.size() - 2];
  }

  int generation_of(std::int64_t index) const;

  double compensation_w(int n) const {
    return comp_w.empty() ? 0.0 : comp_w[static_cast<std::size_t>(n)];
  }
  double compensation_d(int n) const {
    return comp_d.empty() ? 0.0 : comp_d[static_cast<std::size_t>(n)];
  }
};

TreeState simulate_tree(const models::PointProcessSpec& spec, int horizon,
                        const BarrierPolicy& barrier, RngStream& rng,
                        std::int64_t population_cap = 100000000);

// W_n = sum_{|z|=n} e^{-V(z)} over stored particles.
double additive_martingale(const TreeState& tree, int n);

// D_n = sum_{|z|=n} V(z) e^{-V(z)} over stored particles.
double derivative_martingale(const TreeState& tree, int n);

// Running minimum along each particle's ancestry, for barrier functionals.
std::vector<double> path_prefix_min(const TreeState& tree);

using RenewalFn = std::function<double(double)>;

// D_n^{(a)} = sum R^-(V(z)+a) e^{-V(z)} 1{path stays >= -a}.
double truncated_martingale(const TreeState& tree, int n, double a,
                            const RenewalFn& r_minus);

struct MinRecord {
  double value = 0.0;
  std::int64_t argmin_index = 0;
  int argmin_generation = 0;
  int tie_count = 1;
};

// Global minimum over all stored particles. Ties (floating-point artifacts
// for continuous displacements) resolve to the generation in which the
// minimum is first attained, uniformly within that generation; that is the
// convention under which the per-generation decomposition sums to the
// unconditioned law.
MinRecord global_min(const TreeState& tree, RngStream& rng,
                     double tie_rel_tol = 1e-9);

struct DecompositionTerms {
  std::vector<double> off_spine_terms;  // entry k-1 holds generation k's brothers
  double argmin_term = 0.0;
  double frak_d = 0.0;
};

// Partition of D_n along the argmin ancestry: every generation-n particle
// descends from exactly one brother of the path (or from the argmin itself),
// so e^{-M} frak_d == D_n holds exactly at finite n.
DecompositionTerms min_decomposition(const TreeState& tree, const MinRecord& rec,
                                     int n);

double frak_d_truncated(const DecompositionTerms& terms, int t);
double frak_d_truncated(const TreeState& tree, const MinRecord& rec, int t);

}  // namespace brw::sim
