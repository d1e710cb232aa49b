#pragma once

#include <vector>

#include "dmpc/graph.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

// Per-agent decision vector, in this order:
//   own state trajectory   (N+1)*6
//   own input trajectory    N*3
//   copy of each neighbor's state trajectory, ascending neighbor id
//   slack variables: 4 table-box rows per stage, one row per neighbor pair
//   per stage, one obstacle row per stage when an obstacle is present
class DecisionLayout {
 public:
  DecisionLayout() = default;

  DecisionLayout(const CouplingGraph& graph, int agent, int horizon, bool obstacle)
      : agent_(agent), N_(horizon), obstacle_(obstacle), neighbors_(graph.neighbors(agent)) {
    require(horizon >= 1, "layout: horizon must be at least 1");
    x_off_ = 0;
    u_off_ = (N_ + 1) * kStateDim;
    copies_off_ = u_off_ + N_ * kInputDim;
    core_dim_ = copies_off_ + static_cast<int>(neighbors_.size()) * (N_ + 1) * kStateDim;
    slack_box_off_ = core_dim_;
    slack_nbr_off_ = slack_box_off_ + 4 * (N_ + 1);
    slack_obs_off_ = slack_nbr_off_ + static_cast<int>(neighbors_.size()) * (N_ + 1);
    slack_dim_ = slack_obs_off_ - core_dim_ + (obstacle_ ? (N_ + 1) : 0);
    dim_ = core_dim_ + slack_dim_;
  }

  int agent() const { return agent_; }
  int horizon() const { return N_; }
  bool has_obstacle() const { return obstacle_; }
  const std::vector<int>& neighbors() const { return neighbors_; }

  int dim() const { return dim_; }
  int core_dim() const { return core_dim_; }
  int slack_dim() const { return slack_dim_; }

  int x(int t) const { return x_off_ + t * kStateDim; }
  int u(int t) const { return u_off_ + t * kInputDim; }

  int neighbor_index(int j) const {
    for (std::size_t k = 0; k < neighbors_.size(); ++k)
      if (neighbors_[k] == j) return static_cast<int>(k);
    require(false, "layout: not a neighbor of this agent");
    return -1;
  }

  int w(int j, int t) const {
    return copies_off_ + neighbor_index(j) * (N_ + 1) * kStateDim + t * kStateDim;
  }
  int w_base(int j) const { return w(j, 0); }

  int s_box(int t, int face) const { return slack_box_off_ + t * 4 + face; }
  int s_nbr(int j, int t) const {
    return slack_nbr_off_ + neighbor_index(j) * (N_ + 1) + t;
  }
  int s_obs(int t) const {
    require(obstacle_, "layout: no obstacle slack configured");
    return slack_obs_off_ + t;
  }

 private:
  int agent_ = 0, N_ = 0;
  bool obstacle_ = false;
  std::vector<int> neighbors_;
  int x_off_ = 0, u_off_ = 0, copies_off_ = 0;
  int slack_box_off_ = 0, slack_nbr_off_ = 0, slack_obs_off_ = 0;
  int core_dim_ = 0, slack_dim_ = 0, dim_ = 0;
};

struct DecisionDims {
  std::vector<int> per_agent;  // states + inputs + neighbor copies
  std::vector<int> slack;      // softened-row slack counts
  int total = 0;
  int total_slack = 0;
};

inline DecisionDims decision_dims(const CouplingGraph& graph, int horizon,
                                  bool obstacle = false) {
  DecisionDims d;
  for (int i = 0; i < graph.size(); ++i) {
    DecisionLayout l(graph, i, horizon, obstacle);
    d.per_agent.push_back(l.core_dim());
    d.slack.push_back(l.slack_dim());
    d.total += l.core_dim();
    d.total_slack += l.slack_dim();
  }
  return d;
}

// One consensus tie: the copy held by `holder` must equal the state trajectory
// owned by `owner`; both offsets address (N+1)*6 contiguous entries.
struct ConsensusTie {
  int owner = 0;
  int holder = 0;
  int holder_off = 0;  // copy location in the holder's vector
};

struct CouplingMap {
  std::vector<DecisionLayout> layouts;
  std::vector<ConsensusTie> ties;  // one per directed edge (owner -> holder)
  int traj_len = 0;                // (N+1)*6

  int group_size(int owner, const CouplingGraph& g) const { return g.degree(owner) + 1; }
};

inline CouplingMap build_coupling_map(const CouplingGraph& graph, int horizon,
                                      bool obstacle = false) {
  CouplingMap m;
  m.traj_len = (horizon + 1) * kStateDim;
  for (int i = 0; i < graph.size(); ++i)
    m.layouts.emplace_back(graph, i, horizon, obstacle);
  for (int holder = 0; holder < graph.size(); ++holder)
    for (int owner : graph.neighbors(holder))
      m.ties.push_back({owner, holder, m.layouts[holder].w_base(owner)});
  return m;
}

}  // namespace dmpc
