#pragma once

// Leader's side of the slot game: per-program profit, the pricing rules
// (characteristic-parameter traversal, sigmoid relaxation, particle swarm,
// linear), the fixed-point loop between prices and the offloader estimate,
// and whole-frame play.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mecsim/model.hpp"
#include "mecsim/rng.hpp"
#include "mecsim/stage2.hpp"

namespace mecsim {

/// Everything the base station knows in one slot. Users are partitioned by
/// the program their task needs.
class SlotMarket {
 public:
  SlotMarket(std::vector<UserProfile> users, std::vector<Task> tasks, CachingDecision caching,
             PopularityVector popularity, FrequencyDistribution dist, SystemParams params)
      : users_(std::move(users)),
        tasks_(std::move(tasks)),
        caching_(std::move(caching)),
        popularity_(std::move(popularity)),
        dist_(dist),
        params_(params) {
    if (users_.size() != tasks_.size()) throw std::invalid_argument("SlotMarket: users and tasks differ in length");
    if (popularity_.size() != caching_.size())
      throw std::invalid_argument("SlotMarket: popularity and caching differ in length");
    members_.assign(caching_.size(), {});
    for (std::size_t m = 0; m < tasks_.size(); ++m) {
      const auto n = static_cast<std::size_t>(tasks_[m].program_psi);
      if (n >= caching_.size()) throw std::invalid_argument("SlotMarket: task program index out of range");
      members_[n].push_back(m);
    }
  }

  const std::vector<UserProfile>& users() const { return users_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  const CachingDecision& caching() const { return caching_; }
  const PopularityVector& popularity() const { return popularity_; }
  const FrequencyDistribution& dist() const { return dist_; }
  const SystemParams& params() const { return params_; }
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_programs() const { return caching_.size(); }
  const std::vector<std::size_t>& members(std::size_t n) const { return members_[n]; }

  SlotMarket with_caching(CachingDecision c) const {
    return {users_, tasks_, std::move(c), popularity_, dist_, params_};
  }

 private:
  std::vector<UserProfile> users_;
  std::vector<Task> tasks_;
  CachingDecision caching_;
  PopularityVector popularity_;
  FrequencyDistribution dist_;
  SystemParams params_;
  std::vector<std::vector<std::size_t>> members_;
};

struct EquilibriumResult {
  PriceVector prices;
  OffloadProfile profile;
  double m_hat_final = 1.0;
  int iterations = 0;
  bool converged = false;
};

// --- profit ----------------------------------------------------------------

/// Profit of program n at `price` when users best-respond with estimate m_hat.
inline double program_profit(double price, const SlotMarket& market, std::size_t n, double m_hat) {
  if (!market.caching().cached(n)) return 0.0;
  double profit = 0.0;
  for (std::size_t m : market.members(n)) {
    const double a = optimal_alpha(price, market.users()[m], market.tasks()[m], m_hat, market.caching(),
                                   market.params());
    profit += a * market.tasks()[m].cycles_r * price;
  }
  return profit;
}

inline double max_characteristic(const SlotMarket& market, std::size_t n) {
  double hi = 0.0;
  for (std::size_t m : market.members(n))
    hi = std::max(hi, market.users()[m].characteristic(market.params().theta));
  return hi;
}

// --- CPTO ------------------------------------------------------------------

/// Exact profit-maximizing price: the best characteristic parameter theta/f
/// among the program's users. Equal profits resolve to the lowest price.
inline double cpto(const SlotMarket& market, std::size_t n, double m_hat) {
  if (!market.caching().cached(n) || market.members(n).empty()) return 0.0;
  double best_price = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t m : market.members(n)) {
    const double candidate = market.users()[m].characteristic(market.params().theta);
    const double value = program_profit(candidate, market, n, m_hat);
    if (value > best_value || (value == best_value && candidate < best_price)) {
      best_value = value;
      best_price = candidate;
    }
  }
  return best_price;
}

// --- SCAO ------------------------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

/// Per-user weights r*delta and thresholds theta/f of one program. Delta does
/// not depend on the price, so it is evaluated once per solve.
struct SmoothProfit {
  std::vector<double> weight;
  std::vector<double> threshold;

  SmoothProfit(const SlotMarket& market, std::size_t n, double m_hat) {
    if (!market.caching().cached(n)) return;
    const auto& ms = market.members(n);
    weight.reserve(ms.size());
    threshold.reserve(ms.size());
    for (std::size_t m : ms) {
      const auto& u = market.users()[m];
      const auto& t = market.tasks()[m];
      weight.push_back(t.cycles_r * delta_threshold(u, t, m_hat, market.params()));
      threshold.push_back(u.characteristic(market.params().theta));
    }
  }

  double value(double price) const {
    double v = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i) v += weight[i] * price * sigmoid(threshold[i] - price);
    return v;
  }

  double gradient(double price) const {
    double g = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      const double s = sigmoid(threshold[i] - price);
      g += weight[i] * s * (1.0 - price * (1.0 - s));
    }
    return g;
  }
};

}  // namespace detail

inline double scao_profit_smooth(double price, const SlotMarket& market, std::size_t n, double m_hat) {
  return detail::SmoothProfit(market, n, m_hat).value(price);
}

inline double scao_gradient(double price, const SlotMarket& market, std::size_t n, double m_hat) {
  return detail::SmoothProfit(market, n, m_hat).gradient(price);
}

inline constexpr int kScaoGridPoints = 64;
inline constexpr double kScaoBracketTol = 1e-9;
inline constexpr double kPriceRangeFactor = 1.05;

/// Sigmoid-relaxed pricing. Stationary points of the smoothed profit are
/// located by a sign scan of its derivative plus bisection; the candidate
/// with the best true profit wins (endpoints included).
inline double scao(const SlotMarket& market, std::size_t n, double m_hat) {
  if (!market.caching().cached(n) || market.members(n).empty()) return 0.0;
  const detail::SmoothProfit smooth(market, n, m_hat);
  const double hi = kPriceRangeFactor * max_characteristic(market, n);

  std::vector<double> candidates{0.0};
  double x0 = 0.0;
  double g0 = smooth.gradient(x0);
  for (int i = 1; i < kScaoGridPoints; ++i) {
    const double x1 = hi * static_cast<double>(i) / (kScaoGridPoints - 1);
    const double g1 = smooth.gradient(x1);
    if (g0 == 0.0 && x0 > 0.0) {
      candidates.push_back(x0);
    } else if ((g0 > 0 && g1 < 0) || (g0 < 0 && g1 > 0)) {
      double lo = x0, up = x1, glo = g0;
      while (up - lo > kScaoBracketTol * std::max(std::abs(up), 1e-300)) {
        const double mid = 0.5 * (lo + up);
        const double gm = smooth.gradient(mid);
        if (gm == 0.0) {
          lo = up = mid;
          break;
        }
        if ((gm > 0) == (glo > 0)) {
          lo = mid;
          glo = gm;
        } else {
          up = mid;
        }
      }
      candidates.push_back(0.5 * (lo + up));
    }
    x0 = x1;
    g0 = g1;
  }
  candidates.push_back(hi);

  double best_price = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (double c : candidates) {
    const double v = program_profit(c, market, n, m_hat);
    if (v > best_value) {
      best_value = v;
      best_price = c;
    }
  }
  return best_price;
}

// --- DPO (particle swarm) ----------------------------------------------------

struct SwarmParams {
  int population = 100;
  int iterations = 200;
  double inertia = 0.729;
  double cognitive = 1.49445;
  double social = 1.49445;
};

/// Global-best particle swarm over [0, 1.05 * max theta/f] on the true profit.
inline double dpo(const SlotMarket& market, std::size_t n, double m_hat, Rng& rng, const SwarmParams& sp = {}) {
  if (!market.caching().cached(n) || market.members(n).empty()) return 0.0;
  const double hi = kPriceRangeFactor * max_characteristic(market, n);
  const auto pop = static_cast<std::size_t>(sp.population);

  std::vector<double> x(pop), v(pop), pbest(pop), pval(pop);
  double gbest = 0.0;
  double gval = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pop; ++i) {
    x[i] = rng.uniform(0.0, hi);
    v[i] = rng.uniform(-hi, hi) * 0.1;
    pbest[i] = x[i];
    pval[i] = program_profit(x[i], market, n, m_hat);
    if (pval[i] > gval) {
      gval = pval[i];
      gbest = x[i];
    }
  }
  for (int it = 0; it < sp.iterations; ++it) {
    for (std::size_t i = 0; i < pop; ++i) {
      const double r1 = rng.uniform01();
      const double r2 = rng.uniform01();
      v[i] = sp.inertia * v[i] + sp.cognitive * r1 * (pbest[i] - x[i]) + sp.social * r2 * (gbest - x[i]);
      v[i] = std::clamp(v[i], -hi, hi);
      x[i] = std::clamp(x[i] + v[i], 0.0, hi);
      const double f = program_profit(x[i], market, n, m_hat);
      if (f > pval[i]) {
        pval[i] = f;
        pbest[i] = x[i];
        if (f > gval) {
          gval = f;
          gbest = x[i];
        }
      }
    }
  }
  return gbest;
}

// --- LP --------------------------------------------------------------------

/// phi times the mean task workload of the program's users.
inline double lp(const SlotMarket& market, std::size_t n) {
  const auto& ms = market.members(n);
  if (ms.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t m : ms) sum += market.tasks()[m].cycles_r;
  return market.params().price_weight_phi * (sum / static_cast<double>(ms.size()));
}

// --- equilibrium -------------------------------------------------------------

enum class Pricer { CPTO, SCAO, DPO, LP };

inline std::string_view to_string(Pricer p) {
  switch (p) {
    case Pricer::CPTO: return "cpto";
    case Pricer::SCAO: return "scao";
    case Pricer::DPO: return "dpo";
    case Pricer::LP: return "lp";
  }
  return "?";
}

struct EquilibriumOptions {
  std::optional<PriceVector> init_prices;
  double tolerance = 1e-6;
  int max_iterations = 100;
  std::uint64_t seed = 0;  // swarm stream; per (iteration, program) sub-streams
  SwarmParams swarm{};
  bool complete_information = false;  // test hook: estimate := realized count
};

/// Number of users that offload at `prices` (thresholds only; delta > 0).
inline double realized_offloaders(const PriceVector& prices, const SlotMarket& market) {
  std::size_t count = 0;
  for (std::size_t m = 0; m < market.num_users(); ++m) {
    const auto n = static_cast<std::size_t>(market.tasks()[m].program_psi);
    if (market.caching().cached(n) && prices[n] <= market.users()[m].characteristic(market.params().theta)) ++count;
  }
  return static_cast<double>(std::max<std::size_t>(count, 1));
}

inline double offloader_estimate(const PriceVector& prices, const SlotMarket& market, bool complete_information) {
  if (complete_information) return realized_offloaders(prices, market);
  return estimate_offloaders(prices, market.caching(), market.popularity(), market.num_users(), market.dist(),
                             market.params().theta);
}

inline double price_program(Pricer pricer, const SlotMarket& market, std::size_t n, double m_hat, Rng& rng,
                            const SwarmParams& swarm = {}) {
  switch (pricer) {
    case Pricer::CPTO: return cpto(market, n, m_hat);
    case Pricer::SCAO: return scao(market, n, m_hat);
    case Pricer::DPO: return dpo(market, n, m_hat, rng, swarm);
    case Pricer::LP: return market.caching().cached(n) ? lp(market, n) : 0.0;
  }
  return 0.0;
}

/// Alternates the offloader estimate and per-program re-pricing (all programs
/// against the same estimate) until the largest relative price change drops
/// below the tolerance or the iteration cap is hit.
inline EquilibriumResult stackelberg_equilibrium(const SlotMarket& market, Pricer pricer,
                                                 const EquilibriumOptions& opt = {}) {
  const std::size_t N = market.num_programs();
  PriceVector prices = opt.init_prices.value_or(PriceVector::zeros(N));
  if (prices.size() != N) throw std::invalid_argument("stackelberg_equilibrium: init price length mismatch");

  EquilibriumResult res;
  for (int k = 1; k <= opt.max_iterations; ++k) {
    const double m_hat = offloader_estimate(prices, market, opt.complete_information);
    std::vector<double> next(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(k) * 64 + n));
      next[n] = price_program(pricer, market, n, m_hat, rng, opt.swarm);
    }
    bool small = true;
    for (std::size_t n = 0; n < N; ++n) {
      const double a = prices[n], b = next[n];
      if (std::abs(a - b) > opt.tolerance * std::max(std::abs(a), std::abs(b))) small = false;
    }
    prices = PriceVector(std::move(next));
    res.iterations = k;
    if (small) {
      res.converged = true;
      break;
    }
  }
  res.m_hat_final = offloader_estimate(prices, market, opt.complete_information);
  res.profile = threshold_profile(prices, market.users(), market.tasks(), res.m_hat_final, market.caching(),
                                  market.params());
  res.prices = std::move(prices);
  return res;
}

/// Users' response to prices that are not re-optimized.
inline EquilibriumResult respond_to_prices(const SlotMarket& market, const PriceVector& prices,
                                           bool complete_information = false) {
  EquilibriumResult res;
  res.prices = prices;
  res.m_hat_final = offloader_estimate(prices, market, complete_information);
  res.profile = threshold_profile(prices, market.users(), market.tasks(), res.m_hat_final, market.caching(),
                                  market.params());
  res.converged = true;
  return res;
}

/// Prices fixed for the whole frame: CPTO equilibrium of the first slot.
inline std::vector<PriceVector> ltsp_schedule(std::span<const SlotMarket> frame_markets,
                                              const EquilibriumOptions& opt = {}) {
  if (frame_markets.empty()) return {};
  const auto first = stackelberg_equilibrium(frame_markets.front(), Pricer::CPTO, opt);
  return std::vector<PriceVector>(frame_markets.size(), first.prices);
}

// --- frame play --------------------------------------------------------------

enum class PricingScheme { CPTO, SCAO, DPO, LP, LTSP };
enum class OffloadModel { TO, CO, LC, RO };

inline std::string_view to_string(PricingScheme p) {
  switch (p) {
    case PricingScheme::CPTO: return "cpto";
    case PricingScheme::SCAO: return "scao";
    case PricingScheme::DPO: return "dpo";
    case PricingScheme::LP: return "lp";
    case PricingScheme::LTSP: return "ltsp";
  }
  return "?";
}

inline std::string_view to_string(OffloadModel o) {
  switch (o) {
    case OffloadModel::TO: return "to";
    case OffloadModel::CO: return "co";
    case OffloadModel::LC: return "lc";
    case OffloadModel::RO: return "ro";
  }
  return "?";
}

struct FramePlayOptions {
  PricingScheme scheme = PricingScheme::CPTO;
  OffloadModel offloading = OffloadModel::TO;
  std::uint64_t seed = 0;  // swarm and random-offloading streams
  bool complete_information = false;
  bool record_timing = false;
};

struct SlotResult {
  EquilibriumResult equilibrium;
  OffloadProfile profile;  // realized (differs from equilibrium.profile for CO/LC/RO)
  SlotOutcome outcome;
  std::vector<double> per_program;
  double pricing_seconds = 0.0;
};

struct FrameResult {
  std::vector<SlotResult> slots;
  std::vector<double> slot_payments;
  std::vector<double> per_program;
  double total_payments = 0.0;
};

/// Plays the T slot games of one frame under a fixed cache.
inline FrameResult play_frame(std::span<const SlotMarket> markets, const FramePlayOptions& opt) {
  using clock = std::chrono::steady_clock;
  FrameResult fr;
  if (markets.empty()) return fr;
  const std::size_t N = markets.front().num_programs();
  fr.per_program.assign(N, 0.0);

  EquilibriumOptions eo;
  eo.complete_information = opt.complete_information;

  std::optional<PriceVector> frame_prices;
  for (std::size_t t = 0; t < markets.size(); ++t) {
    const SlotMarket& mk = markets[t];
    SlotResult sr;
    eo.seed = derive_seed(opt.seed, "slot/" + std::to_string(t));
    const auto start = clock::now();
    bool timed = true;
    switch (opt.scheme) {
      case PricingScheme::CPTO: sr.equilibrium = stackelberg_equilibrium(mk, Pricer::CPTO, eo); break;
      case PricingScheme::SCAO: sr.equilibrium = stackelberg_equilibrium(mk, Pricer::SCAO, eo); break;
      case PricingScheme::DPO: sr.equilibrium = stackelberg_equilibrium(mk, Pricer::DPO, eo); break;
      case PricingScheme::LP: sr.equilibrium = stackelberg_equilibrium(mk, Pricer::LP, eo); break;
      case PricingScheme::LTSP:
        if (!frame_prices) {
          frame_prices = ltsp_schedule(markets.subspan(0, 1), eo).front();
        } else {
          timed = false;
        }
        sr.equilibrium = respond_to_prices(mk, *frame_prices, opt.complete_information);
        break;
    }
    if (opt.record_timing && timed)
      sr.pricing_seconds = std::chrono::duration<double>(clock::now() - start).count();

    if (opt.offloading == OffloadModel::TO) {
      sr.profile = sr.equilibrium.profile;
    } else {
      Rng rng(opt.seed, "offload/" + std::to_string(t));
      const auto kind = opt.offloading == OffloadModel::CO   ? OffloadBaseline::CO
                        : opt.offloading == OffloadModel::LC ? OffloadBaseline::LC
                                                             : OffloadBaseline::RO;
      sr.profile = baseline_profile(kind, mk.users(), mk.tasks(), mk.caching(), rng);
    }
    sr.outcome = evaluate_slot(sr.equilibrium.prices, sr.profile, mk.users(), mk.tasks(), mk.caching(), mk.params());
    sr.per_program = per_program_payments(sr.equilibrium.prices, sr.profile, mk.tasks(), mk.caching());
    for (std::size_t n = 0; n < N; ++n) fr.per_program[n] += sr.per_program[n];
    fr.slot_payments.push_back(sr.outcome.bs_payment);
    fr.total_payments += sr.outcome.bs_payment;
    fr.slots.push_back(std::move(sr));
  }
  return fr;
}

}  // namespace mecsim
