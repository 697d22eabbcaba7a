#pragma once

// Orderings of the backbone pool. Each strategy returns a permutation of the
// registry ids; the search evaluates backbones in that order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vibes/core_model.hpp"
#include "vibes/error.hpp"
#include "vibes/rng.hpp"

namespace vibes {

struct Permutation {
  std::vector<std::string> order;

  friend bool operator==(const Permutation&, const Permutation&) = default;
};

/// True when `perm` lists every registry id exactly once.
inline bool is_permutation_of(const Permutation& perm, const Registry& registry) {
  if (perm.order.size() != registry.size()) return false;
  std::unordered_set<std::string_view> ids;
  for (const auto& id : perm.order)
    if (registry.find(id) == nullptr || !ids.insert(id).second) return false;
  return true;
}

enum class Strategy { random, complexity_asc, complexity_desc, pretrain_size_desc, dataset_cycling };

inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::random, Strategy::complexity_asc,
                                                        Strategy::complexity_desc, Strategy::pretrain_size_desc,
                                                        Strategy::dataset_cycling};

constexpr std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::complexity_asc: return "complexity-asc";
    case Strategy::complexity_desc: return "complexity-desc";
    case Strategy::pretrain_size_desc: return "pretrain-size-desc";
    case Strategy::dataset_cycling: return "dataset-cycling";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  for (const auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

/// Strategies whose order does not depend on the seed.
constexpr bool is_deterministic(Strategy s) noexcept { return s != Strategy::random && s != Strategy::dataset_cycling; }

inline Permutation order_random(const Registry& registry, std::uint64_t seed) {
  Permutation perm;
  for (const auto& b : registry.backbones()) perm.order.push_back(b.id);
  Xoshiro256 rng(seed);
  shuffle(perm.order, rng);
  return perm;
}

enum class Direction { increasing, decreasing };

/// Sorted by parameter count; equal counts fall back to ascending id.
inline Permutation order_by_complexity(const Registry& registry, Direction direction) {
  std::vector<const BackboneRecord*> items;
  for (const auto& b : registry.backbones()) items.push_back(&b);
  std::stable_sort(items.begin(), items.end(), [direction](const BackboneRecord* a, const BackboneRecord* b) {
    if (a->param_count != b->param_count)
      return direction == Direction::increasing ? a->param_count < b->param_count : a->param_count > b->param_count;
    return a->id < b->id;
  });
  Permutation perm;
  for (const auto* b : items) perm.order.push_back(b->id);
  return perm;
}

/// Largest pretraining set first; equal sizes fall back to ascending id.
inline Permutation order_by_pretrain_size_desc(const Registry& registry) {
  std::vector<const BackboneRecord*> items;
  for (const auto& b : registry.backbones()) items.push_back(&b);
  std::stable_sort(items.begin(), items.end(), [](const BackboneRecord* a, const BackboneRecord* b) {
    if (a->pretrain_dataset_size != b->pretrain_dataset_size)
      return a->pretrain_dataset_size > b->pretrain_dataset_size;
    return a->id < b->id;
  });
  Permutation perm;
  for (const auto* b : items) perm.order.push_back(b->id);
  return perm;
}

struct CyclingOptions {
  /// When false, each group keeps registry order (used by tests).
  bool shuffle_within_group = true;
};

/// Round-robin over pretraining-dataset groups.
///
/// Groups are visited by descending dataset size (the largest size recorded for
/// any member), ties by ascending tag. Each group is shuffled with its own
/// generator seeded by `seed ^ fnv1a64(tag)`. Exhausted groups are skipped.
inline Permutation order_dataset_cycling(const Registry& registry, std::uint64_t seed, CyclingOptions opts = {}) {
  struct Group {
    std::string tag;
    std::int64_t size = 0;
    std::vector<std::string> members;
  };
  std::map<std::string, Group> by_tag;
  for (const auto& b : registry.backbones()) {
    auto& g = by_tag[b.pretrain_dataset];
    g.tag = b.pretrain_dataset;
    g.size = std::max(g.size, b.pretrain_dataset_size);
    g.members.push_back(b.id);
  }
  std::vector<Group> groups;
  for (auto& [tag, g] : by_tag) groups.push_back(std::move(g));
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.size != b.size ? a.size > b.size : a.tag < b.tag; });
  if (opts.shuffle_within_group) {
    for (auto& g : groups) {
      Xoshiro256 rng(seed ^ fnv1a64(g.tag));
      shuffle(g.members, rng);
    }
  }
  Permutation perm;
  perm.order.reserve(registry.size());
  for (std::size_t round = 0; perm.order.size() < registry.size(); ++round)
    for (const auto& g : groups)
      if (round < g.members.size()) perm.order.push_back(g.members[round]);
  return perm;
}

inline Permutation make_permutation(Strategy strategy, const Registry& registry, std::uint64_t seed) {
  switch (strategy) {
    case Strategy::random: return order_random(registry, seed);
    case Strategy::complexity_asc: return order_by_complexity(registry, Direction::increasing);
    case Strategy::complexity_desc: return order_by_complexity(registry, Direction::decreasing);
    case Strategy::pretrain_size_desc: return order_by_pretrain_size_desc(registry);
    case Strategy::dataset_cycling: return order_dataset_cycling(registry, seed);
  }
  throw ConfigError("unknown strategy");
}

}  // namespace vibes
