#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmfs/episodes/manifest.hpp"
#include "mmfs/harness/model.hpp"

namespace mmfs {

struct ExportSpec {
  Split split = Split::MetaTest;
  std::size_t classes = 10;
  std::size_t per_class = 10;
  std::uint64_t seed = 0;
};

struct ExportedRow {
  std::string class_name;
  std::size_t item = 0;  // manifest index
  std::vector<double> embedding;
};

/// Eval-mode embeddings (fused, or single-modality) of `per_class` random
/// items from each of `classes` random classes of the split. Throws
/// DataError on a shortfall.
std::vector<ExportedRow> collect_embeddings(const MultiModalModel& model, const DatasetManifest& manifest,
                                            const ExportSpec& spec);

/// CSV with header "class,item,e0,...,e{d-1}", one row per item.
void write_embeddings_csv(const std::filesystem::path& path, const std::vector<ExportedRow>& rows);

}  // namespace mmfs
