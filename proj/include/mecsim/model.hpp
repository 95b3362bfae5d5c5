#pragma once

// Domain types and the physical/economic primitives of the single-cell MEC
// market: channel gain, uplink rate, delay terms, user cost and base-station
// utilities at slot and frame granularity.
//
// Units: data in bits, CPU work in cycles, frequencies in cycles/s, power in
// W, distances in m, prices in currency per cycle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mecsim {

/// Raised when an offloading proportion violates the caching constraint
/// alpha * (1 - x) == 0.
class ConstraintViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SystemParams {
  double bandwidth_W = 2e6;
  double edge_freq_F = 500e6;
  double noise_var = 1e-10;
  double theta = 2e7;
  double pathloss_const_lambda = 1.0;
  double pathloss_exp_e = 2.0;
  double cache_capacity_Z = 100.0;
  double price_weight_phi = 3e-9;
  double caching_cost_rate = 0.10;
  int num_programs_N = 4;
  int frames_J = 5;
  int slots_T = 5;

  void validate() const {
    if (!(bandwidth_W > 0)) throw std::invalid_argument("bandwidth_W must be > 0");
    if (!(edge_freq_F > 0)) throw std::invalid_argument("edge_freq_F must be > 0");
    if (!(noise_var > 0)) throw std::invalid_argument("noise_var must be > 0");
    if (!(theta > 0)) throw std::invalid_argument("theta must be > 0");
    if (!(pathloss_const_lambda > 0)) throw std::invalid_argument("pathloss constant must be > 0");
    if (!(caching_cost_rate >= 0 && caching_cost_rate <= 1))
      throw std::invalid_argument("caching_cost_rate must lie in [0,1]");
    if (!(cache_capacity_Z >= 0)) throw std::invalid_argument("cache_capacity_Z must be >= 0");
    if (!(price_weight_phi >= 0)) throw std::invalid_argument("price_weight_phi must be >= 0");
    if (num_programs_N < 1 || num_programs_N > 15)
      throw std::invalid_argument("num_programs_N must lie in [1,15]");
    if (frames_J < 1) throw std::invalid_argument("frames_J must be >= 1");
    if (slots_T < 1) throw std::invalid_argument("slots_T must be >= 1");
  }
};

struct UserProfile {
  int id = 0;
  double cpu_freq_f = 1e6;
  double tx_power_p = 0.1;
  double distance_o = 100.0;
  double fading_xi = 1.0;

  /// theta / f: the price per cycle at which the user stops offloading.
  double characteristic(double theta) const { return theta / cpu_freq_f; }
};

struct Task {
  int program_psi = 0;
  double data_size_d = 0.0;
  double intensity_beta = 0.0;
  double cycles_r = 0.0;
};

inline Task make_task(int program, double data_bits, double cycles_per_bit) {
  if (program < 0) throw std::invalid_argument("make_task: negative program index");
  if (!(data_bits > 0) || !(cycles_per_bit > 0))
    throw std::invalid_argument("make_task: data size and intensity must be > 0");
  return Task{program, data_bits, cycles_per_bit, data_bits * cycles_per_bit};
}

/// Which service programs sit in the edge cache, with their storage sizes.
class CachingDecision {
 public:
  CachingDecision() = default;
  CachingDecision(std::vector<std::uint8_t> mask, std::vector<double> sizes)
      : mask_(std::move(mask)), sizes_(std::move(sizes)) {
    if (mask_.size() != sizes_.size())
      throw std::invalid_argument("CachingDecision: mask and sizes differ in length");
    for (auto& b : mask_) b = b ? 1 : 0;
  }

  static CachingDecision none(std::vector<double> sizes) {
    std::vector<std::uint8_t> m(sizes.size(), 0);
    return {std::move(m), std::move(sizes)};
  }
  static CachingDecision all(std::vector<double> sizes) {
    std::vector<std::uint8_t> m(sizes.size(), 1);
    return {std::move(m), std::move(sizes)};
  }

  std::size_t size() const { return mask_.size(); }
  bool cached(std::size_t n) const { return n < mask_.size() && mask_[n] != 0; }
  void set(std::size_t n, bool on) { mask_.at(n) = on ? 1 : 0; }

  double used_storage() const {
    double used = 0.0;
    for (std::size_t n = 0; n < mask_.size(); ++n)
      if (mask_[n]) used += sizes_[n];
    return used;
  }
  bool feasible(double capacity) const { return used_storage() <= capacity; }

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const std::vector<double>& sizes() const { return sizes_; }

  friend bool operator==(const CachingDecision&, const CachingDecision&) = default;

 private:
  std::vector<std::uint8_t> mask_;
  std::vector<double> sizes_;
};

struct PriceVector {
  std::vector<double> prices;

  PriceVector() = default;
  explicit PriceVector(std::vector<double> p) : prices(std::move(p)) {
    for (double v : prices)
      if (!(v >= 0)) throw std::invalid_argument("PriceVector: prices must be >= 0");
  }
  static PriceVector zeros(std::size_t n) { return PriceVector(std::vector<double>(n, 0.0)); }

  std::size_t size() const { return prices.size(); }
  double operator[](std::size_t n) const { return prices[n]; }

  friend bool operator==(const PriceVector&, const PriceVector&) = default;
};

struct OffloadProfile {
  std::vector<double> alphas;

  std::size_t size() const { return alphas.size(); }
  double operator[](std::size_t m) const { return alphas[m]; }
  std::size_t offloader_count() const {
    return static_cast<std::size_t>(std::count_if(alphas.begin(), alphas.end(), [](double a) { return a > 0; }));
  }

  friend bool operator==(const OffloadProfile&, const OffloadProfile&) = default;
};

struct Delays {
  double tra = 0.0;
  double exe = 0.0;
  double loc = 0.0;
  double total = 0.0;
};

struct SlotOutcome {
  std::vector<double> payments_per_user;
  std::vector<double> delays_per_user;
  std::vector<double> costs_per_user;
  double bs_payment = 0.0;
  std::size_t offloader_count = 0;
};

// ---------------------------------------------------------------------------

inline double channel_gain(const UserProfile& user, const SystemParams& params) {
  return params.pathloss_const_lambda * user.fading_xi * std::pow(user.distance_o, -params.pathloss_exp_e);
}

/// Per-user uplink rate when the band is split among `offloader_count`
/// users. The count may be fractional (an expected number of offloaders).
inline double uplink_rate(const UserProfile& user, double offloader_count, const SystemParams& params) {
  if (!(offloader_count > 0))
    throw std::domain_error("uplink_rate: offloader_count must be >= 1");
  const double snr = user.tx_power_p * channel_gain(user, params) / params.noise_var;
  return (params.bandwidth_W / offloader_count) * std::log2(1.0 + snr);
}

inline Delays delays(double alpha, const UserProfile& user, const Task& task, double offloader_count,
                     const SystemParams& params) {
  if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("delays: alpha outside [0,1]");
  Delays d;
  if (alpha > 0) {
    d.tra = alpha * task.data_size_d / uplink_rate(user, offloader_count, params);
    d.exe = alpha * task.cycles_r / (params.edge_freq_F / offloader_count);
  }
  d.loc = (1.0 - alpha) * task.cycles_r / user.cpu_freq_f;
  d.total = std::max(d.tra + d.exe, d.loc);
  return d;
}

/// alpha * r * price * x_psi. Throws ConstraintViolation when a user offloads
/// a task whose program is not cached.
inline double user_payment(double alpha, double price, const Task& task, const CachingDecision& caching) {
  const bool cached = caching.cached(static_cast<std::size_t>(task.program_psi));
  if (alpha > 0 && !cached)
    throw ConstraintViolation("user_payment: offloading to an uncached program (program " +
                              std::to_string(task.program_psi) + ")");
  return cached ? alpha * task.cycles_r * price : 0.0;
}

inline double user_delay(double alpha, const UserProfile& user, const Task& task, double offloader_count,
                         const SystemParams& params) {
  return delays(alpha, user, task, offloader_count, params).total;
}

inline double user_cost(double alpha, double price, const UserProfile& user, const Task& task,
                        double offloader_count, const CachingDecision& caching, const SystemParams& params) {
  const double payment = user_payment(alpha, price, task, caching);
  return payment + params.theta * user_delay(alpha, user, task, offloader_count, params);
}

inline double bs_slot_payment(const PriceVector& prices, const OffloadProfile& profile, std::span<const Task> tasks,
                              const CachingDecision& caching) {
  if (profile.size() != tasks.size()) throw std::invalid_argument("bs_slot_payment: profile/task length mismatch");
  double total = 0.0;
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    const auto n = static_cast<std::size_t>(tasks[m].program_psi);
    total += user_payment(profile[m], prices[n], tasks[m], caching);
  }
  return total;
}

/// Payments earned per program in one slot.
inline std::vector<double> per_program_payments(const PriceVector& prices, const OffloadProfile& profile,
                                                std::span<const Task> tasks, const CachingDecision& caching) {
  std::vector<double> out(caching.size(), 0.0);
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    const auto n = static_cast<std::size_t>(tasks[m].program_psi);
    out[n] += user_payment(profile[m], prices[n], tasks[m], caching);
  }
  return out;
}

/// Caching cost of moving from `prev` to `now`: programs newly cached pay
/// `rate` times what they earned in the frame.
inline double caching_cost(const CachingDecision& now, const CachingDecision& prev,
                           std::span<const double> per_program, double rate) {
  double cost = 0.0;
  for (std::size_t n = 0; n < now.size(); ++n)
    if (now.cached(n) && !prev.cached(n)) cost += rate * per_program[n];
  return cost;
}

inline double bs_frame_utility(std::span<const double> slot_payments, const CachingDecision& caching_now,
                               const CachingDecision& caching_prev, std::span<const double> per_program,
                               double caching_cost_rate) {
  double total = 0.0;
  for (double p : slot_payments) total += p;
  return total - caching_cost(caching_now, caching_prev, per_program, caching_cost_rate);
}

/// Realized slot outcome. Delays use the actual number of offloaders.
inline SlotOutcome evaluate_slot(const PriceVector& prices, const OffloadProfile& profile,
                                 std::span<const UserProfile> users, std::span<const Task> tasks,
                                 const CachingDecision& caching, const SystemParams& params) {
  SlotOutcome out;
  const std::size_t count = profile.offloader_count();
  out.offloader_count = count;
  out.payments_per_user.resize(users.size());
  out.delays_per_user.resize(users.size());
  out.costs_per_user.resize(users.size());
  for (std::size_t m = 0; m < users.size(); ++m) {
    const auto n = static_cast<std::size_t>(tasks[m].program_psi);
    const double pay = user_payment(profile[m], prices[n], tasks[m], caching);
    const double delay =
        user_delay(profile[m], users[m], tasks[m], static_cast<double>(std::max<std::size_t>(count, 1)), params);
    out.payments_per_user[m] = pay;
    out.delays_per_user[m] = delay;
    out.costs_per_user[m] = pay + params.theta * delay;
    out.bs_payment += pay;
  }
  return out;
}

}  // namespace mecsim
