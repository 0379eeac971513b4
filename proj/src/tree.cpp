#include "brw/tree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace brw::sim {

int TreeState::generation_of(std::int64_t index) const {
  auto it = std::upper_bound(gen_begin.begin(), gen_begin.end(), index);
  return static_cast<int>(it - gen_begin.begin()) - 1;
}

TreeState simulate_tree(const models::PointProcessSpec& spec, int horizon,
                        const BarrierPolicy& barrier, RngStream& rng,
                        std::int64_t population_cap) {
  TreeState tree;
  tree.horizon = horizon;
  if (barrier.active()) tree.upper_barrier = barrier.barrier();
  if (barrier.compensate) {
    tree.comp_w.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
    tree.comp_d.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  }
  tree.particles.push_back({-1, 0.0});
  tree.gen_begin = {0, 1};

  const double y_max = barrier.active() ? barrier.barrier()
                                        : std::numeric_limits<double>::infinity();
  const double x_level = barrier.min_event_level;

  for (int g = 0; g < horizon; ++g) {
    auto [begin, end] = tree.gen_range(g);
    if (begin == end) {
      // extinct: keep emitting empty generations up to the horizon
      tree.gen_begin.push_back(tree.gen_begin.back());
      if (barrier.compensate) {
        tree.comp_w[g + 1] = tree.comp_w[g];
        tree.comp_d[g + 1] = tree.comp_d[g];
      }
      continue;
    }
    double comp_w_add = 0.0, comp_d_add = 0.0;
    for (std::int64_t i = begin; i < end; ++i) {
      double parent_pos = tree.particles[i].position;
      models::OffspringDraw draw = models::sample_offspring(spec, rng);
      for (int c = 0; c < draw.count; ++c) {
        double pos = parent_pos + draw.displacements[c];
        if (pos > y_max) {
          tree.killed_mass_bound += std::exp(-(x_level + pos));
          if (barrier.compensate) {
            double w = std::exp(-pos);
            comp_w_add += w;
            comp_d_add += pos * w;
          }
          continue;
        }
        tree.particles.push_back({static_cast<std::int32_t>(i), pos});
      }
    }
    tree.gen_begin.push_back(static_cast<std::int64_t>(tree.particles.size()));
    if (barrier.compensate) {
      tree.comp_w[g + 1] = tree.comp_w[g] + comp_w_add;
      tree.comp_d[g + 1] = tree.comp_d[g] + comp_d_add;
    }
    if (static_cast<std::int64_t>(tree.particles.size()) > population_cap) {
      throw PopulationCapExceeded(
          "population cap exceeded at generation " + std::to_string(g + 1) +
          ": " + std::to_string(tree.particles.size()) + " records (cap " +
          std::to_string(population_cap) + ")");
    }
  }
  return tree;
}

double additive_martingale(const TreeState& tree, int n) {
  auto [begin, end] = tree.gen_range(n);
  long double acc = 0.0L;
  for (std::int64_t i = begin; i < end; ++i)
    acc += std::exp(-tree.particles[i].position);
  return static_cast<double>(acc);
}

double derivative_martingale(const TreeState& tree, int n) {
  auto [begin, end] = tree.gen_range(n);
  long double acc = 0.0L;
  for (std::int64_t i = begin; i < end; ++i) {
    double v = tree.particles[i].position;
    acc += v * std::exp(-v);
  }
  return static_cast<double>(acc);
}

std::vector<double> path_prefix_min(const TreeState& tree) {
  std::vector<double> pref(tree.particles.size());
  if (pref.empty()) return pref;
  pref[0] = tree.particles[0].position;
  for (std::size_t i = 1; i < tree.particles.size(); ++i) {
    const Particle& p = tree.particles[i];
    pref[i] = std::min(pref[static_cast<std::size_t>(p.parent)], p.position);
  }
  return pref;
}

double truncated_martingale(const TreeState& tree, int n, double a,
                            const RenewalFn& r_minus) {
  if (!(a > 0)) throw std::invalid_argument("truncated_martingale: a must be > 0");
  std::vector<double> pref = path_prefix_min(tree);
  auto [begin, end] = tree.gen_range(n);
  long double acc = 0.0L;
  for (std::int64_t i = begin; i < end; ++i) {
    if (pref[static_cast<std::size_t>(i)] < -a) continue;
    double v = tree.particles[i].position;
    acc += r_minus(v + a) * std::exp(-v);
  }
  return static_cast<double>(acc);
}

MinRecord global_min(const TreeState& tree, RngStream& rng, double tie_rel_tol) {
  MinRecord rec;
  double best = std::numeric_limits<double>::infinity();
  for (const Particle& p : tree.particles) best = std::min(best, p.position);
  const double tol = tie_rel_tol * (1.0 + std::abs(best));

  // first generation attaining the minimum, then uniform inside it
  int first_gen = -1;
  std::vector<std::int64_t> gen_ties;
  int total_ties = 0;
  for (int g = 0; g < tree.generations() && first_gen < 0; ++g) {
    auto [begin, end] = tree.gen_range(g);
    for (std::int64_t i = begin; i < end; ++i)
      if (tree.particles[i].position <= best + tol) {
        first_gen = g;
        break;
      }
  }
  {
    auto [begin, end] = tree.gen_range(first_gen);
    for (std::int64_t i = begin; i < end; ++i)
      if (tree.particles[i].position <= best + tol) gen_ties.push_back(i);
  }
  for (const Particle& p : tree.particles)
    if (p.position <= best + tol) ++total_ties;

  rec.value = best;
  rec.argmin_generation = first_gen;
  rec.tie_count = total_ties;
  rec.argmin_index = gen_ties.size() == 1
                         ? gen_ties[0]
                         : gen_ties[rng.uniform_index(gen_ties.size())];
  return rec;
}

DecompositionTerms min_decomposition(const TreeState& tree, const MinRecord& rec,
                                     int n) {
  const int K = rec.argmin_generation;
  // mark the argmin ancestry
  std::vector<std::int64_t> path(static_cast<std::size_t>(K) + 1);
  {
    std::int64_t cur = rec.argmin_index;
    for (int g = K; g >= 0; --g) {
      path[static_cast<std::size_t>(g)] = cur;
      cur = tree.particles[static_cast<std::size_t>(cur)].parent;
    }
  }
  std::vector<char> on_path(tree.particles.size(), 0);
  for (std::int64_t idx : path) on_path[static_cast<std::size_t>(idx)] = 1;

  const double m_val = rec.value;
  const double em = std::exp(m_val);
  std::vector<long double> off(static_cast<std::size_t>(K), 0.0L);
  long double argmin_acc = 0.0L;

  auto [begin, end] = tree.gen_range(n);
  for (std::int64_t i = begin; i < end; ++i) {
    double v = tree.particles[i].position;
    double mass = em * v * std::exp(-v);
    // climb to the deepest marked ancestor
    std::int64_t cur = i;
    while (!on_path[static_cast<std::size_t>(cur)])
      cur = tree.particles[static_cast<std::size_t>(cur)].parent;
    if (cur == path[static_cast<std::size_t>(K)]) {
      argmin_acc += mass;
    } else {
      int g = tree.generation_of(cur);
      off[static_cast<std::size_t>(g)] += mass;  // brother set B(u_{g+1})
    }
  }

  DecompositionTerms terms;
  terms.off_spine_terms.resize(static_cast<std::size_t>(K));
  long double total = 0.0L;
  for (int k = 0; k < K; ++k) {
    terms.off_spine_terms[static_cast<std::size_t>(k)] =
        static_cast<double>(off[static_cast<std::size_t>(k)]);
    total += off[static_cast<std::size_t>(k)];
  }
  terms.argmin_term = static_cast<double>(argmin_acc);
  total += argmin_acc;
  terms.frak_d = static_cast<double>(total);
  return terms;
}

double frak_d_truncated(const DecompositionTerms& terms, int t) {
  const int K = static_cast<int>(terms.off_spine_terms.size());
  long double acc = terms.argmin_term;
  for (int k = std::max(0, K - t); k < K; ++k)
    acc += terms.off_spine_terms[static_cast<std::size_t>(k)];
  return static_cast<double>(acc);
}

double frak_d_truncated(const TreeState& tree, const MinRecord& rec, int t) {
  DecompositionTerms terms = min_decomposition(tree, rec, tree.horizon);
  return frak_d_truncated(terms, t);
}

}  // namespace brw::sim
