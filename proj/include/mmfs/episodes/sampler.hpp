#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmfs/core/rng.hpp"
#include "mmfs/episodes/manifest.hpp"

namespace mmfs {

/// Item indices and remapped labels of one N-way K-shot episode. Support
/// and query rows are grouped by label: label j's K support items come
/// first in order, likewise its T query items.
struct Episode {
  Split split = Split::MetaTrain;
  std::vector<std::string> classes;  // label j ↔ classes[j]
  std::vector<std::size_t> support;
  std::vector<int> support_labels;
  std::vector<std::size_t> query;
  std::vector<int> query_labels;
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t queries_per_class = 0;

  /// Support items followed by query items.
  std::vector<std::size_t> all_items() const;
};

/// Samples N distinct classes of the split, then K + T distinct items of
/// each. The result depends only on the manifest and the stream state.
/// Throws DataError naming the shortfall when the split is too small.
Episode sample_episode(const DatasetManifest& manifest, Split split, std::size_t ways, std::size_t shots,
                       std::size_t queries_per_class, Rng& stream);

}  // namespace mmfs
