#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dstc/error.hpp"

namespace dstc {

/// Stratified fold assignment: fold_of[i] is the fold of item i.
struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> members_except(std::size_t a, std::size_t b) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != a && fold_of[i] != b) out.push_back(i);
    return out;
  }
};

/// Each class is shuffled with the seed and dealt round-robin over the folds.
/// Dealing continues where the previous class stopped so total fold sizes also
/// differ by at most one.
inline FoldAssignment kfold_split(const std::vector<int>& labels, std::size_t k,
                                  std::uint64_t seed) {
  if (k < 2) throw ContractError("kfold_split: need k >= 2, got " + std::to_string(k));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, ids] : by_class) {
    if (ids.size() < k) {
      throw ContractError("kfold_split: class " + std::to_string(label) + " has " +
                          std::to_string(ids.size()) + " items, fewer than k = " +
                          std::to_string(k));
    }
  }
  std::mt19937_64 rng(seed);
  FoldAssignment out{k, std::vector<std::size_t>(labels.size(), 0)};
  std::size_t next = 0;
  for (auto& [label, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t id : ids) {
      out.fold_of[id] = next;
      next = (next + 1) % k;
    }
  }
  return out;
}

}  // namespace dstc
