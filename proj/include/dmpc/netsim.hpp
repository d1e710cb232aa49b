#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <ostream>
#include <vector>

#include "dmpc/graph.hpp"
#include "dmpc/message.hpp"

namespace dmpc {

// Directed-link transport characteristics. Jitter is lognormal with the given
// mean, added on top of the deterministic base latency.
struct LinkProfile {
  double base_ms = 0.1;
  double jitter_mean_ms = 0.0;
  double drop_prob = 0.0;

  // Wired direct links between offboard solver processes.
  static LinkProfile offboard() { return {0.1, 0.02, 0.0}; }
  // Wireless onboard links: slower, heavy-tailed, occasionally lossy.
  static LinkProfile onboard() { return {3.0, 1.5, 0.005}; }
  static LinkProfile perfect() { return {0.0, 0.0, 0.0}; }
};

struct BusEvent {
  double send_ms = 0.0;
  double deliver_ms = 0.0;  // meaningless when dropped
  bool dropped = false;
  std::uint64_t draw_index = 0;  // per-link send counter
  std::uint64_t epoch = 0;
  MsgKind kind = MsgKind::CopyAndMultiplier;
  std::uint32_t k = 0, l = 0, sender = 0, receiver = 0;
};

// What a receiver waits for in one exchange phase.
struct Expected {
  MsgKind kind;
  std::uint32_t k, l;
  int sender;
};

// A consumed delivery that matched no expected slot: a late or duplicate
// arrival from an earlier phase, iteration, or control step.
struct StrayMessage {
  std::uint64_t epoch = 0;
  AdmmMessage msg;
};

struct ReceiveResult {
  std::vector<AdmmMessage> matched;  // current-epoch messages matching Expected, sender order
  std::vector<StrayMessage> others;  // consumed messages that match nothing
  double time_ms = 0.0;              // virtual time at which the receiver proceeds
  bool complete = false;
};

// Deterministic virtual-time message transport between graph neighbors.
// Deliveries and drops are fixed at send time from counter-indexed per-link
// streams, so a run's event log depends only on the seed and the send
// schedule, never on message content or host timing.
class MessageBus {
 public:
  MessageBus(const CouplingGraph& graph, const LinkProfile& profile, std::uint64_t seed)
      : graph_(graph), profile_(profile), seed_(seed), inbox_(graph.size()) {
    require(profile.base_ms >= 0.0 && profile.jitter_mean_ms >= 0.0,
            "netsim: latency must be nonnegative");
    require(profile.drop_prob >= 0.0 && profile.drop_prob <= 1.0,
            "netsim: drop probability must be in [0,1]");
    counters_.assign(static_cast<std::size_t>(graph.size()) * graph.size(), 0);
  }

  // Advanced by the harness at each control step; stamps cross-step deliveries.
  void set_epoch(std::uint64_t e) { epoch_ = e; }
  std::uint64_t epoch() const { return epoch_; }

  void send(const AdmmMessage& m, double now_ms) {
    std::lock_guard<std::mutex> lock(mu_);
    require(m.sender < static_cast<std::uint32_t>(graph_.size()) &&
                m.receiver < static_cast<std::uint32_t>(graph_.size()),
            "netsim: agent id out of range");
    require(graph_.adjacent(static_cast<int>(m.sender), static_cast<int>(m.receiver)),
            "netsim: sender and receiver are not neighbors");

    const std::uint64_t link = m.sender * static_cast<std::uint64_t>(graph_.size()) + m.receiver;
    const std::uint64_t count = counters_[link]++;
    const double u_drop = uniform(link, count, 0);
    const bool dropped = u_drop < profile_.drop_prob;
    const double jitter = jitter_draw(link, count);
    const double deliver = now_ms + profile_.base_ms + jitter;

    BusEvent ev;
    ev.send_ms = now_ms;
    ev.deliver_ms = deliver;
    ev.dropped = dropped;
    ev.draw_index = count;
    ev.epoch = epoch_;
    ev.kind = m.kind;
    ev.k = m.k;
    ev.l = m.l;
    ev.sender = m.sender;
    ev.receiver = m.receiver;
    events_.push_back(ev);

    if (dropped) {
      ++dropped_count_;
      return;
    }
    Delivery d{deliver, next_seq_++, epoch_, m};
    auto& box = inbox_[m.receiver];
    box.insert(std::upper_bound(box.begin(), box.end(), d,
                                [](const Delivery& a, const Delivery& b) {
                                  return std::tie(a.deliver_ms, a.seq) <
                                         std::tie(b.deliver_ms, b.seq);
                                }),
               d);
  }

  // Waits (in virtual time) for the expected messages (all sharing one
  // kind/k/l tag) up to the deadline, then drains the mailbox selectively:
  // only deliveries at or before the wanted phase in (epoch, k, l, kind)
  // order are consumed, so a message for a later phase of the same iteration
  // stays queued for the receive that actually wants it. Kind order inside an
  // iteration follows the enum: copies are exchanged before averages.
  // Matched messages come back in ascending sender order.
  ReceiveResult receive_until(int agent, double now_ms, double deadline_ms,
                              const std::vector<Expected>& want) {
    std::lock_guard<std::mutex> lock(mu_);
    require(deadline_ms >= now_ms, "netsim: deadline before current time");
    for (std::size_t i = 1; i < want.size(); ++i)
      require(want[i].kind == want[0].kind && want[i].k == want[0].k && want[i].l == want[0].l,
              "netsim: one receive waits for one phase tag");
    const auto& box = inbox_[agent];

    const auto key_of = [](std::uint64_t epoch, const AdmmMessage& m) {
      return std::array<std::uint64_t, 4>{epoch, m.k, m.l,
                                          static_cast<std::uint64_t>(m.kind)};
    };
    const std::array<std::uint64_t, 4> wanted_key =
        want.empty() ? std::array<std::uint64_t, 4>{0, 0, 0, 0}
                     : std::array<std::uint64_t, 4>{epoch_, want[0].k, want[0].l,
                                                    static_cast<std::uint64_t>(want[0].kind)};

    std::vector<double> found(want.size(), -1.0);
    double last_needed = now_ms;
    std::size_t hits = 0;
    for (const auto& d : box) {
      if (d.deliver_ms > deadline_ms) break;
      if (d.epoch != epoch_) continue;
      for (std::size_t wi = 0; wi < want.size(); ++wi) {
        if (found[wi] >= 0.0) continue;
        const auto& w = want[wi];
        if (d.msg.kind == w.kind && d.msg.k == w.k && d.msg.l == w.l &&
            d.msg.sender == static_cast<std::uint32_t>(w.sender)) {
          found[wi] = d.deliver_ms;
          last_needed = std::max(last_needed, d.deliver_ms);
          ++hits;
          break;
        }
      }
      if (hits == want.size()) break;
    }

    ReceiveResult r;
    r.complete = hits == want.size();
    r.time_ms = r.complete ? last_needed : deadline_ms;

    std::vector<std::pair<int, AdmmMessage>> matched;
    auto& mbox = inbox_[agent];
    std::size_t keep = 0;
    for (std::size_t i = 0; i < mbox.size(); ++i) {
      auto& d = mbox[i];
      if (d.deliver_ms > r.time_ms || (!want.empty() && key_of(d.epoch, d.msg) > wanted_key)) {
        mbox[keep++] = std::move(d);
        continue;
      }
      ++consumed_count_;
      bool is_match = false;
      if (d.epoch == epoch_)
        for (std::size_t wi = 0; wi < want.size(); ++wi) {
          const auto& w = want[wi];
          if (d.msg.kind == w.kind && d.msg.k == w.k && d.msg.l == w.l &&
              d.msg.sender == static_cast<std::uint32_t>(w.sender) &&
              found[wi] == d.deliver_ms) {
            found[wi] = -2.0;  // consume each expected slot once
            is_match = true;
            break;
          }
        }
      if (is_match)
        matched.emplace_back(d.msg.sender, std::move(d.msg));
      else
        r.others.push_back({d.epoch, std::move(d.msg)});
    }
    mbox.resize(keep);

    std::sort(matched.begin(), matched.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [s, m] : matched) r.matched.push_back(std::move(m));
    return r;
  }

  std::size_t pending(int agent) const {
    std::lock_guard<std::mutex> lock(mu_);
    return inbox_[agent].size();
  }
  std::uint64_t sent() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_.size();
  }
  std::uint64_t dropped() const { return dropped_count_; }
  std::uint64_t consumed() const { return consumed_count_; }
  // Quiescent-state accessor; do not call while agent threads are running.
  const std::vector<BusEvent>& events() const { return events_; }

  void write_event_csv(std::ostream& os) const {
    std::lock_guard<std::mutex> lock(mu_);
    os << "send_ms,deliver_ms,dropped,sender,receiver,kind,k,l,epoch,draw_index\n";
    for (const auto& e : events_) {
      os << e.send_ms << ',' << (e.dropped ? -1.0 : e.deliver_ms) << ',' << (e.dropped ? 1 : 0)
         << ',' << e.sender << ',' << e.receiver << ','
         << (e.kind == MsgKind::CopyAndMultiplier ? "copy" : "avg") << ',' << e.k << ',' << e.l
         << ',' << e.epoch << ',' << e.draw_index << '\n';
    }
  }

 private:
  struct Delivery {
    double deliver_ms;
    std::uint64_t seq;
    std::uint64_t epoch;
    AdmmMessage msg;
  };

  double uniform(std::uint64_t link, std::uint64_t count, std::uint64_t salt) const {
    const std::uint64_t x = stream_seed(seed_, link, count, salt);
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

  double jitter_draw(std::uint64_t link, std::uint64_t count) const {
    if (profile_.jitter_mean_ms <= 0.0) return 0.0;
    const double u1 = std::max(uniform(link, count, 1), 1e-12);
    const double u2 = uniform(link, count, 2);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    const double sigma = 0.8;
    return profile_.jitter_mean_ms * std::exp(sigma * z - 0.5 * sigma * sigma);
  }

  mutable std::mutex mu_;
  CouplingGraph graph_;
  LinkProfile profile_;
  std::uint64_t seed_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dropped_count_ = 0;
  std::uint64_t consumed_count_ = 0;
  std::vector<std::vector<Delivery>> inbox_;
  std::vector<std::uint64_t> counters_;
  std::vector<BusEvent> events_;
};

}  // namespace dmpc
