#pragma once

// Followers' side of the slot game: the threshold offloading rule under
// incomplete information, the common estimate of the number of offloaders,
// and the CO / LC / RO reference behaviours.

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecsim/model.hpp"
#include "mecsim/rng.hpp"

namespace mecsim {

/// Common prior over user CPU frequencies. Only the uniform family is used.
struct FrequencyDistribution {
  double f_min = 0.5e6;
  double f_max = 4e6;

  FrequencyDistribution() = default;
  FrequencyDistribution(double lo, double hi) : f_min(lo), f_max(hi) {
    if (!(lo > 0 && lo < hi)) throw std::invalid_argument("FrequencyDistribution: need 0 < f_min < f_max");
  }

  double cdf(double x) const {
    if (x <= f_min) return 0.0;
    if (x >= f_max) return 1.0;
    return (x - f_min) / (f_max - f_min);
  }
  double sample(Rng& rng) const { return rng.uniform(f_min, f_max); }
};

struct PopularityVector {
  std::vector<double> probs;

  PopularityVector() = default;
  explicit PopularityVector(std::vector<double> p) : probs(std::move(p)) { validate(); }

  static PopularityVector uniform(std::size_t n) {
    return PopularityVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  void validate() const {
    if (probs.empty()) throw std::invalid_argument("PopularityVector: empty");
    double s = 0.0;
    for (double p : probs) {
      if (!(p >= 0 && p <= 1)) throw std::invalid_argument("PopularityVector: entry outside [0,1]");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("PopularityVector: does not sum to 1");
  }

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t n) const { return probs[n]; }
};

/// Expected number of offloaders every user forms from the announced prices:
/// 1 + (M-1) * sum_n x_n y_n G(theta / pi_n). A zero price admits everyone.
inline double estimate_offloaders(const PriceVector& prices, const CachingDecision& caching,
                                  const PopularityVector& popularity, std::size_t num_users,
                                  const FrequencyDistribution& dist, double theta) {
  if (num_users == 0) return 1.0;
  double share = 0.0;
  for (std::size_t n = 0; n < caching.size(); ++n) {
    if (!caching.cached(n)) continue;
    const double g = prices[n] > 0 ? dist.cdf(theta / prices[n]) : 1.0;
    share += popularity[n] * g;
  }
  return 1.0 + static_cast<double>(num_users - 1) * share;
}

/// Offloading proportion at which local delay equals transmission plus edge
/// execution delay, computed with `m_hat` sharers of the band and the server.
inline double delta_threshold(const UserProfile& user, const Task& task, double m_hat, const SystemParams& params) {
  const double local = task.cycles_r / user.cpu_freq_f;
  const double tx = task.data_size_d / uplink_rate(user, m_hat, params);
  const double exe = task.cycles_r / (params.edge_freq_F / m_hat);
  return local / (tx + exe + local);
}

/// Best response of a user: delta when its price does not exceed theta/f
/// (ties offload), 0 otherwise or when the program is not cached.
inline double optimal_alpha(double price, const UserProfile& user, const Task& task, double m_hat,
                            const CachingDecision& caching, const SystemParams& params) {
  if (!caching.cached(static_cast<std::size_t>(task.program_psi))) return 0.0;
  if (price > user.characteristic(params.theta)) return 0.0;
  return delta_threshold(user, task, m_hat, params);
}

inline OffloadProfile threshold_profile(const PriceVector& prices, std::span<const UserProfile> users,
                                        std::span<const Task> tasks, double m_hat, const CachingDecision& caching,
                                        const SystemParams& params) {
  OffloadProfile out;
  out.alphas.resize(users.size());
  for (std::size_t m = 0; m < users.size(); ++m)
    out.alphas[m] = optimal_alpha(prices[static_cast<std::size_t>(tasks[m].program_psi)], users[m], tasks[m], m_hat,
                                  caching, params);
  return out;
}

enum class OffloadBaseline { CO, LC, RO };

inline OffloadProfile baseline_profile(OffloadBaseline kind, std::span<const UserProfile> users,
                                       std::span<const Task> tasks, const CachingDecision& caching, Rng& rng) {
  OffloadProfile out;
  out.alphas.assign(users.size(), 0.0);
  for (std::size_t m = 0; m < users.size(); ++m) {
    const bool cached = caching.cached(static_cast<std::size_t>(tasks[m].program_psi));
    switch (kind) {
      case OffloadBaseline::CO:
        out.alphas[m] = cached ? 1.0 : 0.0;
        break;
      case OffloadBaseline::LC:
        break;
      case OffloadBaseline::RO: {
        // Draw unconditionally so the stream does not depend on the cache.
        const double a = rng.uniform01();
        out.alphas[m] = cached ? a : 0.0;
        break;
      }
    }
  }
  return out;
}

}  // namespace mecsim
