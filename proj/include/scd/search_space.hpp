#pragma once

// Between-executable space (candidate pairs), within-executable space
// (links), and the transitive clone-class partition used by skip evaluation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scd/error.hpp"
#include "scd/trace.hpp"

namespace scd {

/// Unordered executable pair stored canonically with a < b.
struct CandidatePair {
  std::string a;
  std::string b;

  CandidatePair() = default;
  CandidatePair(std::string x, std::string y) {
    if (x == y) throw Error(Errc::InvalidArgument, "candidate pair needs two distinct executables");
    if (y < x) std::swap(x, y);
    a = std::move(x);
    b = std::move(y);
  }

  auto operator<=>(const CandidatePair&) const = default;
};

/// One IO pair of executable a matched with one IO pair of executable b.
struct Link {
  IOPair pair_a;
  IOPair pair_b;

  auto operator<=>(const Link&) const = default;
};

/// |Ex|! / (2 (|Ex|-2)!) computed as n(n-1)/2.
inline std::uint64_t bes_size(std::uint64_t n) {
  if (n < 2) throw Error(Errc::TooFew, "need at least two executables");
  return (n % 2 == 0) ? (n / 2) * (n - 1) : n * ((n - 1) / 2);
}

inline std::vector<CandidatePair> build_bes(std::span<const ExecutableSchema> executables) {
  std::vector<std::string> ids;
  ids.reserve(executables.size());
  for (const auto& e : executables) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end())
    throw Error(Errc::DuplicateId, "executable id \"" + *dup + "\" appears twice");
  std::vector<CandidatePair> pairs;
  pairs.reserve(ids.size() < 2 ? 0 : bes_size(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(ids[i], ids[j]);
  return pairs;
}

inline std::vector<Link> build_wes(const ExecutableSchema& a, const ExecutableSchema& b) {
  const auto pa = io_pairs(a);
  const auto pb = io_pairs(b);
  std::vector<Link> links;
  links.reserve(pa.size() * pb.size());
  for (const auto& x : pa)
    for (const auto& y : pb) links.push_back({x, y});
  return links;
}

/// Sum of WES sizes over every candidate pair.
inline std::uint64_t total_space(std::span<const ExecutableSchema> executables) {
  std::map<std::string, std::uint64_t> io_count;
  for (const auto& e : executables) io_count[e.id] = io_pairs(e).size();
  std::uint64_t total = 0;
  for (const auto& c : build_bes(executables)) total += io_count[c.a] * io_count[c.b];
  return total;
}

/// Disjoint-set forest over executable ids (union by rank, path compression).
class CloneClasses {
 public:
  CloneClasses() = default;
  explicit CloneClasses(std::span<const std::string> ids) {
    for (const auto& id : ids) add(id);
  }

  void add(const std::string& id) {
    if (index_.count(id)) return;
    index_.emplace(id, parent_.size());
    ids_.push_back(id);
    parent_.push_back(parent_.size());
    rank_.push_back(0);
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  void unite(const std::string& a, const std::string& b) {
    std::size_t ra = find(lookup(a)), rb = find(lookup(b));
    if (ra == rb) return;
    if (rank_[ra] < rank_[rb]) std::swap(ra, rb);
    parent_[rb] = ra;
    if (rank_[ra] == rank_[rb]) ++rank_[ra];
  }

  bool same_class(const std::string& a, const std::string& b) const { return find(lookup(a)) == find(lookup(b)); }

  /// Classes as sorted id lists, ordered by their first id. Singletons included.
  std::vector<std::vector<std::string>> classes() const {
    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < ids_.size(); ++i) groups[find(i)].push_back(ids_[i]);
    std::vector<std::vector<std::string>> out;
    for (auto& [_, members] : groups) {
      std::sort(members.begin(), members.end());
      out.push_back(std::move(members));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t lookup(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::UnknownId, "unknown executable id \"" + id + "\"");
    return it->second;
  }

  std::size_t find(std::size_t x) const {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> ids_;
  mutable std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

}  // namespace scd
