#include "mmfs/episodes/sampler.hpp"

#include <numeric>

#include "mmfs/core/error.hpp"

namespace mmfs {

namespace {

// First `count` entries of a partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> choose_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(count);
  return pool;
}

}  // namespace

std::vector<std::size_t> Episode::all_items() const {
  std::vector<std::size_t> items = support;
  items.insert(items.end(), query.begin(), query.end());
  return items;
}

Episode sample_episode(const DatasetManifest& manifest, Split split, std::size_t ways, std::size_t shots,
                       std::size_t queries_per_class, Rng& stream) {
  if (ways == 0 || shots == 0 || queries_per_class == 0) throw ConfigError("episode: N, K and T must be positive");
  const auto& classes = manifest.split_classes(split);
  if (classes.size() < ways) {
    throw DataError("episode: " + std::string(to_string(split)) + " has " + std::to_string(classes.size()) +
                    " classes, " + std::to_string(ways) + "-way episodes need " + std::to_string(ways));
  }
  Episode episode;
  episode.split = split;
  episode.ways = ways;
  episode.shots = shots;
  episode.queries_per_class = queries_per_class;

  const auto chosen = choose_without_replacement(classes.size(), ways, stream);
  std::vector<std::vector<std::size_t>> picked(ways);
  for (std::size_t label = 0; label < ways; ++label) {
    const std::string& name = classes[chosen[label]];
    const auto& members = manifest.items_of_class(name);
    if (members.size() < shots + queries_per_class) {
      throw DataError("episode: class '" + name + "' has " + std::to_string(members.size()) + " items, needs K+T = " +
                      std::to_string(shots + queries_per_class));
    }
    episode.classes.push_back(name);
    for (std::size_t idx : choose_without_replacement(members.size(), shots + queries_per_class, stream)) {
      picked[label].push_back(members[idx]);
    }
  }
  for (std::size_t label = 0; label < ways; ++label) {
    for (std::size_t k = 0; k < shots; ++k) {
      episode.support.push_back(picked[label][k]);
      episode.support_labels.push_back(static_cast<int>(label));
    }
  }
  for (std::size_t label = 0; label < ways; ++label) {
    for (std::size_t t = 0; t < queries_per_class; ++t) {
      episode.query.push_back(picked[label][shots + t]);
      episode.query_labels.push_back(static_cast<int>(label));
    }
  }
  return episode;
}

}  // namespace mmfs
