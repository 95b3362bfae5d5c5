#pragma once

// Frame-level service caching. The learning agent treats each frame as one
// MDP step: state = (frame, estimated popularity, previous cache), action =
// the cache mask as an integer code, reward = the base station's frame
// utility obtained by playing the T slot games under that cache. Also holds
// the popularity-greedy and static baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mecsim/model.hpp"
#include "mecsim/qnetwork.hpp"
#include "mecsim/rng.hpp"
#include "mecsim/stage1.hpp"
#include "mecsim/stage2.hpp"
#include "mecsim/workload.hpp"

namespace mecsim {

inline constexpr int kMaxPrograms = 15;

// --- action codec ------------------------------------------------------------

struct ActionCode {
  std::uint32_t code = 0;
  friend bool operator==(ActionCode, ActionCode) = default;
};

/// Bit n of the code is x_{n+1} (program n, zero-based).
inline ActionCode encode_action(std::span<const std::uint8_t> mask) {
  if (mask.size() > kMaxPrograms) throw std::invalid_argument("encode_action: more than 15 programs");
  std::uint32_t code = 0;
  for (std::size_t n = 0; n < mask.size(); ++n)
    if (mask[n]) code |= (1u << n);
  return {code};
}

inline ActionCode encode_action(const CachingDecision& c) { return encode_action(c.mask()); }

inline std::vector<std::uint8_t> decode_action(ActionCode a, std::size_t num_programs) {
  if (num_programs > kMaxPrograms) throw std::invalid_argument("decode_action: more than 15 programs");
  if (a.code >= (1u << num_programs)) throw std::out_of_range("decode_action: code out of range");
  std::vector<std::uint8_t> mask(num_programs);
  for (std::size_t n = 0; n < num_programs; ++n) mask[n] = (a.code >> n) & 1u;
  return mask;
}

inline CachingDecision decode_caching(ActionCode a, const std::vector<double>& sizes) {
  return {decode_action(a, sizes.size()), sizes};
}

// --- MDP types ---------------------------------------------------------------

struct MdpState {
  int frame_index = 1;  // 1-based
  int frames_total = 1;
  std::vector<double> popularity;
  ActionCode prev_action{};

  /// [j/J, y_1..y_N, bits of the previous action].
  std::vector<double> features() const {
    std::vector<double> f;
    f.reserve(1 + 2 * popularity.size());
    f.push_back(static_cast<double>(frame_index) / static_cast<double>(frames_total));
    f.insert(f.end(), popularity.begin(), popularity.end());
    for (std::size_t n = 0; n < popularity.size(); ++n) f.push_back(static_cast<double>((prev_action.code >> n) & 1u));
    return f;
  }
};

struct Transition {
  MdpState state;
  ActionCode action;
  double reward = 0.0;
  MdpState next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// k distinct slots, uniformly (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const {
    const std::size_t n = items_.size();
    if (k > n) throw std::invalid_argument("ReplayBuffer: sample larger than buffer");
    std::vector<std::size_t> picked;
    picked.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const auto t = static_cast<std::size_t>(rng.below(j + 1));
      if (std::find(picked.begin(), picked.end(), t) == picked.end())
        picked.push_back(t);
      else
        picked.push_back(j);
    }
    return picked;
  }

  std::vector<Transition> sample(std::size_t k, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(k);
    for (auto i : sample_indices(k, rng)) out.push_back(items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// Result of playing a frame's slot games under one cache mask. The caching
/// cost is not part of it because it depends on the previous mask.
struct FrameGameOutcome {
  std::vector<double> slot_payments;
  std::vector<double> per_program;
};

/// Memo of frame games keyed by (frame, action code).
class RewardCache {
 public:
  const FrameGameOutcome* find(std::size_t frame, ActionCode a) const {
    const auto it = map_.find(key(frame, a));
    if (it == map_.end()) {
      ++misses_;
      return nullptr;
    }
    ++hits_;
    return &it->second;
  }
  const FrameGameOutcome& insert(std::size_t frame, ActionCode a, FrameGameOutcome v) {
    return map_.insert_or_assign(key(frame, a), std::move(v)).first->second;
  }
  std::size_t size() const { return map_.size(); }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  static std::uint64_t key(std::size_t frame, ActionCode a) {
    return (static_cast<std::uint64_t>(frame) << 16) | a.code;
  }
  std::unordered_map<std::uint64_t, FrameGameOutcome> map_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

// --- environment -------------------------------------------------------------

struct EnvConfig {
  SystemParams params;
  std::vector<double> program_sizes;
  FrequencyDistribution dist;
  FramePlayOptions play;  // offloading is always TO for rewards
  double penalty_rho_c = 0.02;
};

inline std::vector<SlotMarket> frame_markets(const FrameWorkload& fw, const PopularityVector& popularity,
                                             const CachingDecision& caching, const FrequencyDistribution& dist,
                                             const SystemParams& params) {
  std::vector<SlotMarket> out;
  out.reserve(fw.slots());
  for (std::size_t t = 0; t < fw.slots(); ++t)
    out.emplace_back(fw.slot_users[t], fw.slot_tasks[t], caching, popularity, dist, params);
  return out;
}

inline FramePlayOptions frame_play_options(const FramePlayOptions& base, std::size_t frame) {
  FramePlayOptions o = base;
  o.seed = derive_seed(base.seed, "frame/" + std::to_string(frame));
  return o;
}

inline double infeasibility_penalty(const CachingDecision& c, double capacity, double rho_c) {
  return -rho_c * (c.used_storage() - capacity);
}

/// Reward of caching `action` in zero-based frame `frame`, computed from
/// scratch (no memo).
inline double frame_reward(std::size_t frame, ActionCode action, const FrameWorkload& fw,
                           const PopularityVector& popularity, ActionCode prev_action, const EnvConfig& cfg) {
  const CachingDecision now = decode_caching(action, cfg.program_sizes);
  if (!now.feasible(cfg.params.cache_capacity_Z))
    return infeasibility_penalty(now, cfg.params.cache_capacity_Z, cfg.penalty_rho_c);
  const CachingDecision prev = decode_caching(prev_action, cfg.program_sizes);
  const auto markets = frame_markets(fw, popularity, now, cfg.dist, cfg.params);
  auto opt = frame_play_options(cfg.play, frame);
  opt.offloading = OffloadModel::TO;
  const FrameResult fr = play_frame(markets, opt);
  return bs_frame_utility(fr.slot_payments, now, prev, fr.per_program, cfg.params.caching_cost_rate);
}

/// J frames of workload plus the memoized frame games. Workloads are the same
/// in every episode, which is what makes the memo sound.
class CachingEnvironment {
 public:
  CachingEnvironment(std::vector<FrameWorkload> frames, EnvConfig cfg)
      : frames_(std::move(frames)), cfg_(std::move(cfg)) {
    if (frames_.empty()) throw std::invalid_argument("CachingEnvironment: no frames");
    if (cfg_.program_sizes.size() != static_cast<std::size_t>(cfg_.params.num_programs_N))
      throw std::invalid_argument("CachingEnvironment: program_sizes length != N");
    popularity_ = estimated_popularity(frames_, cfg_.program_sizes.size());
  }

  std::size_t frames() const { return frames_.size(); }
  std::size_t num_programs() const { return cfg_.program_sizes.size(); }
  std::uint32_t num_actions() const { return 1u << num_programs(); }
  const EnvConfig& config() const { return cfg_; }
  const FrameWorkload& workload(std::size_t j) const { return frames_[j]; }
  const PopularityVector& popularity(std::size_t j) const { return popularity_[j]; }
  const RewardCache& cache() const { return cache_; }

  /// Number of slot equilibria solved so far.
  std::size_t equilibrium_calls() const { return equilibrium_calls_; }

  CachingDecision caching(ActionCode a) const { return decode_caching(a, cfg_.program_sizes); }
  bool feasible(ActionCode a) const { return caching(a).feasible(cfg_.params.cache_capacity_Z); }

  const FrameGameOutcome& play(std::size_t j, ActionCode a) {
    if (const auto* hit = cache_.find(j, a)) return *hit;
    const auto markets = frame_markets(frames_[j], popularity_[j], caching(a), cfg_.dist, cfg_.params);
    auto opt = frame_play_options(cfg_.play, j);
    opt.offloading = OffloadModel::TO;
    const FrameResult fr = play_frame(markets, opt);
    equilibrium_calls_ += markets.size();
    return cache_.insert(j, a, FrameGameOutcome{fr.slot_payments, fr.per_program});
  }

  double reward(std::size_t j, ActionCode a, ActionCode prev) {
    const CachingDecision now = caching(a);
    if (!now.feasible(cfg_.params.cache_capacity_Z))
      return infeasibility_penalty(now, cfg_.params.cache_capacity_Z, cfg_.penalty_rho_c);
    const FrameGameOutcome& g = play(j, a);
    return bs_frame_utility(g.slot_payments, now, caching(prev), g.per_program, cfg_.params.caching_cost_rate);
  }

  /// Upper bound on any frame's payments: a paying user never pays more than
  /// r * theta / f.
  double payment_bound() const {
    double best = 0.0;
    for (const auto& fw : frames_) {
      double s = 0.0;
      for (std::size_t t = 0; t < fw.slots(); ++t)
        for (std::size_t m = 0; m < fw.slot_users[t].size(); ++m)
          s += fw.slot_tasks[t][m].cycles_r * fw.slot_users[t][m].characteristic(cfg_.params.theta);
      best = std::max(best, s);
    }
    return best;
  }

  MdpState state(std::size_t j, ActionCode prev) const {
    const std::size_t jj = std::min(j, frames_.size() - 1);
    return MdpState{static_cast<int>(jj + 1), static_cast<int>(frames_.size()), popularity_[jj].probs, prev};
  }

 private:
  std::vector<FrameWorkload> frames_;
  EnvConfig cfg_;
  std::vector<PopularityVector> popularity_;
  RewardCache cache_;
  std::size_t equilibrium_calls_ = 0;
};

// --- learning ----------------------------------------------------------------

inline ActionCode select_action(const MdpState& state, double epsilon, const QNetwork& qnet, Rng& rng) {
  if (rng.uniform01() < epsilon) return {static_cast<std::uint32_t>(rng.below(qnet.output_dim()))};
  const auto q = qnet.forward(state.features());
  return {static_cast<std::uint32_t>(argmax(q))};
}

inline double target_value(const Transition& tr, const QNetwork& target_net, double gamma) {
  if (tr.terminal) return tr.reward;
  const auto q = target_net.forward(tr.next_state.features());
  return tr.reward + gamma * *std::max_element(q.begin(), q.end());
}

/// Squared TD errors summed over the batch (each sample is its own squared
/// error, no averaging); if `grad` is nonempty, also adds the loss gradient
/// with respect to the online parameters into it.
inline double batch_loss(const QNetwork& qnet, const QNetwork& target_net, std::span<const Transition> batch,
                         double gamma, std::span<double> grad = {}) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double loss = 0.0;
  std::vector<std::vector<double>> acts;
  for (const auto& tr : batch) {
    const double target = target_value(tr, target_net, gamma);
    qnet.forward_all(tr.state.features(), acts);
    const double q = acts.back()[tr.action.code];
    const double err = target - q;
    loss += err * err;
    if (!grad.empty()) qnet.backward(acts, tr.action.code, -2.0 * err, grad);
  }
  return loss;
}

/// One fixed-step gradient-descent update of the online network. Returns the
/// batch loss before the update.
inline double train_step(QNetwork& qnet, const QNetwork& target_net, std::span<const Transition> batch, double gamma,
                         double learning_rate) {
  std::vector<double> grad(qnet.parameters().size(), 0.0);
  const double loss = batch_loss(qnet, target_net, batch, gamma, grad);
  auto p = qnet.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * grad[i];
  return loss;
}

struct GndrlConfig {
  int episodes = 500;
  std::size_t batch_size = 64;
  double gamma = 0.9;
  double learning_rate = 0.001;
  int sync_every = 20;  // kappa
  std::size_t replay_capacity = 10000;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.8;
  std::vector<std::size_t> hidden{64, 64};
  double reward_scale = 0.0;  // 0: use the environment's payment bound
  std::uint64_t seed = 0;
};

/// Linear decay from eps_start to eps_end over the first eps_decay_fraction
/// of episodes, then constant.
inline double epsilon_at(int episode, const GndrlConfig& cfg) {
  const double horizon = cfg.eps_decay_fraction * cfg.episodes;
  if (horizon <= 0 || episode >= horizon) return cfg.eps_end;
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * (static_cast<double>(episode) / horizon);
}

struct GreedyRollout {
  std::vector<ActionCode> actions;
  std::vector<double> rewards;
  double total = 0.0;
  std::size_t infeasible = 0;
};

inline GreedyRollout greedy_rollout(const QNetwork& qnet, CachingEnvironment& env) {
  GreedyRollout g;
  ActionCode prev{0};
  for (std::size_t j = 0; j < env.frames(); ++j) {
    const auto q = qnet.forward(env.state(j, prev).features());
    const ActionCode a{static_cast<std::uint32_t>(argmax(q))};
    const double r = env.reward(j, a, prev);
    if (!env.feasible(a)) ++g.infeasible;
    g.actions.push_back(a);
    g.rewards.push_back(r);
    g.total += r;
    prev = a;
  }
  return g;
}

struct GndrlResult {
  QNetwork policy;
  QNetwork target;
  std::vector<double> episode_returns;  // epsilon-greedy, unscaled
  std::vector<GreedyRollout> greedy;    // greedy policy after each episode
  std::vector<ActionCode> caching_history;
  std::size_t train_steps = 0;
  double reward_scale = 1.0;
  Rng agent_rng;
};

inline QNetwork make_qnetwork(std::size_t num_programs, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  std::vector<std::size_t> sizes{2 * num_programs + 1};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(std::size_t{1} << num_programs);
  return QNetwork(sizes, seed);
}

/// Deep Q-learning over the frames of `env`; rewards are looked up in the
/// environment's memo before any slot game is solved.
inline GndrlResult run_gndrl(CachingEnvironment& env, const GndrlConfig& cfg) {
  if (cfg.episodes < 1) throw std::invalid_argument("run_gndrl: episodes must be >= 1");
  if (cfg.batch_size == 0 || cfg.sync_every < 1) throw std::invalid_argument("run_gndrl: bad batch/sync settings");
  GndrlResult res;
  res.agent_rng = Rng(cfg.seed, "agent/policy");
  Rng& rng = res.agent_rng;
  res.policy = make_qnetwork(env.num_programs(), cfg.hidden, derive_seed(cfg.seed, "agent/init"));
  res.target = res.policy;
  res.reward_scale = cfg.reward_scale > 0 ? cfg.reward_scale : std::max(env.payment_bound(), 1e-300);
  ReplayBuffer buffer(cfg.replay_capacity);

  const std::size_t J = env.frames();
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = epsilon_at(ep, cfg);
    ActionCode prev{0};
    double ret = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const MdpState s = env.state(j, prev);
      const ActionCode a = select_action(s, eps, res.policy, rng);
      const double r = env.reward(j, a, prev);
      ret += r;
      const bool terminal = (j + 1 == J);
      buffer.push(Transition{s, a, r / res.reward_scale, env.state(j + 1, a), terminal});

      const std::size_t k = std::min(cfg.batch_size, buffer.size());
      const auto batch = buffer.sample(k, rng);
      train_step(res.policy, res.target, batch, cfg.gamma, cfg.learning_rate);
      ++res.train_steps;
      if (res.train_steps % static_cast<std::size_t>(cfg.sync_every) == 0) res.target.copy_weights_from(res.policy);
      prev = a;
    }
    res.episode_returns.push_back(ret);
    res.greedy.push_back(greedy_rollout(res.policy, env));
  }
  res.caching_history = res.greedy.back().actions;
  return res;
}

// --- baselines ---------------------------------------------------------------

/// Most popular programs first (lower index on ties) until the next one does
/// not fit.
inline CachingDecision posc(const PopularityVector& popularity, const std::vector<double>& sizes, double capacity) {
  if (popularity.size() != sizes.size()) throw std::invalid_argument("posc: popularity/sizes length mismatch");
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return popularity[a] > popularity[b]; });
  CachingDecision c = CachingDecision::none(sizes);
  double used = 0.0;
  for (std::size_t n : order) {
    if (used + sizes[n] > capacity) break;
    used += sizes[n];
    c.set(n, true);
  }
  return c;
}

inline std::vector<CachingDecision> stsc(const CachingDecision& initial, std::size_t frames) {
  return std::vector<CachingDecision>(frames, initial);
}

// --- checkpoint --------------------------------------------------------------

namespace detail {

inline void write_hex(std::ostream& os, double v) {
  std::ostringstream s;
  s << std::hexfloat << v;
  os << s.str();
}

inline double read_hex(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated");
  return std::strtod(tok.c_str(), nullptr);
}

inline void expect(std::istream& is, const std::string& word) {
  std::string tok;
  if (!(is >> tok) || tok != word) throw std::runtime_error("checkpoint: expected '" + word + "', got '" + tok + "'");
}

inline void write_net(std::ostream& os, const char* name, const QNetwork& net) {
  os << name << ' ' << net.layer_sizes().size();
  for (auto s : net.layer_sizes()) os << ' ' << s;
  os << '\n' << net.parameters().size() << '\n';
  for (double p : net.parameters()) {
    write_hex(os, p);
    os << '\n';
  }
}

inline QNetwork read_net(std::istream& is, const char* name) {
  expect(is, name);
  std::size_t L = 0;
  is >> L;
  std::vector<std::size_t> sizes(L);
  for (auto& s : sizes) is >> s;
  QNetwork net(sizes, 0);
  std::size_t count = 0;
  is >> count;
  if (!is || count != net.parameters().size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto& p : net.parameters()) p = read_hex(is);
  return net;
}

}  // namespace detail

struct Checkpoint {
  QNetwork online;
  QNetwork target;
  GndrlConfig config;
  double reward_scale = 1.0;
  Rng rng;
};

/// Text layout, one token group per line:
///   mecsim-qnet 1
///   config <episodes> <batch> <gamma> <lr> <kappa> <replay> <eps_start> <eps_end> <eps_frac> <seed>
///   hidden <k> <h1> ... <hk>
///   reward_scale <x>
///   rng <mt19937_64 state>
///   online <L> <sizes...> / <count> / <params, one per line>
///   target ... (same)
/// Reals are written as hexadecimal floats so a reload is bit-exact.
inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  const auto& c = ck.config;
  os << "mecsim-qnet 1\n";
  os << "config " << c.episodes << ' ' << c.batch_size << ' ';
  detail::write_hex(os, c.gamma);
  os << ' ';
  detail::write_hex(os, c.learning_rate);
  os << ' ' << c.sync_every << ' ' << c.replay_capacity << ' ';
  detail::write_hex(os, c.eps_start);
  os << ' ';
  detail::write_hex(os, c.eps_end);
  os << ' ';
  detail::write_hex(os, c.eps_decay_fraction);
  os << ' ' << c.seed << '\n';
  os << "hidden " << c.hidden.size();
  for (auto h : c.hidden) os << ' ' << h;
  os << "\nreward_scale ";
  detail::write_hex(os, ck.reward_scale);
  os << "\nrng " << ck.rng.engine() << '\n';
  detail::write_net(os, "online", ck.online);
  detail::write_net(os, "target", ck.target);
}

inline Checkpoint load_checkpoint(std::istream& is) {
  Checkpoint ck;
  detail::expect(is, "mecsim-qnet");
  int version = 0;
  is >> version;
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  auto& c = ck.config;
  detail::expect(is, "config");
  is >> c.episodes >> c.batch_size;
  c.gamma = detail::read_hex(is);
  c.learning_rate = detail::read_hex(is);
  is >> c.sync_every >> c.replay_capacity;
  c.eps_start = detail::read_hex(is);
  c.eps_end = detail::read_hex(is);
  c.eps_decay_fraction = detail::read_hex(is);
  is >> c.seed;
  detail::expect(is, "hidden");
  std::size_t k = 0;
  is >> k;
  c.hidden.resize(k);
  for (auto& h : c.hidden) is >> h;
  detail::expect(is, "reward_scale");
  ck.reward_scale = detail::read_hex(is);
  detail::expect(is, "rng");
  is >> ck.rng.engine();
  if (!is) throw std::runtime_error("checkpoint: malformed header");
  ck.online = detail::read_net(is, "online");
  ck.target = detail::read_net(is, "target");
  return ck;
}

}  // namespace mecsim
