#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "dmpc/types.hpp"

namespace dmpc {

// Undirected, connected coupling graph over agents 0..size-1.
class CouplingGraph {
 public:
  CouplingGraph() = default;

  CouplingGraph(int size, std::vector<std::pair<int, int>> edges) : size_(size) {
    require(size >= 1, "graph: need at least one agent");
    adj_.resize(size);
    for (auto [a, b] : edges) {
      require(a >= 0 && a < size && b >= 0 && b < size, "graph: edge index out of range");
      require(a != b, "graph: self-loops not allowed");
      if (a > b) std::swap(a, b);
      if (std::find(edges_.begin(), edges_.end(), std::make_pair(a, b)) != edges_.end())
        continue;
      edges_.emplace_back(a, b);
      adj_[a].push_back(b);
      adj_[b].push_back(a);
    }
    for (auto& nbrs : adj_) std::sort(nbrs.begin(), nbrs.end());
    std::sort(edges_.begin(), edges_.end());
    require(connected(), "graph: must be connected");
  }

  static CouplingGraph path(int size) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i + 1 < size; ++i) e.emplace_back(i, i + 1);
    return CouplingGraph(size, std::move(e));
  }

  int size() const { return size_; }
  const std::vector<int>& neighbors(int i) const { return adj_.at(i); }
  int degree(int i) const { return static_cast<int>(adj_.at(i).size()); }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  bool adjacent(int i, int j) const {
    const auto& n = adj_.at(i);
    return std::binary_search(n.begin(), n.end(), j);
  }

 private:
  bool connected() const {
    if (size_ == 1) return true;
    std::vector<char> seen(size_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj_[v])
        if (!seen[w]) {
          seen[w] = 1;
          ++count;
          stack.push_back(w);
        }
    }
    return count == size_;
  }

  int size_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adj_;
};

}  // namespace dmpc
