#include "mmfs/harness/export.hpp"

#include <charconv>
#include <fstream>
#include <numeric>

#include "mmfs/core/error.hpp"

namespace mmfs {

namespace {

/// First `count` entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> choose(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  order.resize(count);
  return order;
}

}  // namespace

std::vector<ExportedRow> collect_embeddings(const MultiModalModel& model, const DatasetManifest& manifest,
                                            const ExportSpec& spec) {
  model.check_compatible(manifest);
  const auto& classes = manifest.split_classes(spec.split);
  if (classes.size() < spec.classes) {
    throw DataError("export: split " + std::string(to_string(spec.split)) + " has " + std::to_string(classes.size()) +
                    " classes, " + std::to_string(spec.classes) + " requested");
  }
  Rng rng = Rng::stream(spec.seed, "export");
  std::vector<ExportedRow> rows;
  NoGradGuard no_grad;
  for (std::size_t c : choose(classes.size(), spec.classes, rng)) {
    const auto& name = classes[c];
    const auto& items = manifest.items_of_class(name);
    if (items.size() < spec.per_class) {
      throw DataError("export: class '" + name + "' has " + std::to_string(items.size()) + " items, " +
                      std::to_string(spec.per_class) + " requested");
    }
    std::vector<std::size_t> chosen;
    for (std::size_t i : choose(items.size(), spec.per_class, rng)) chosen.push_back(items[i]);
    const Tensor embeddings = model.embed(manifest, chosen, false, nullptr).fused;
    const std::size_t d = embeddings.size(1);
    const auto values = embeddings.values();
    for (std::size_t r = 0; r < chosen.size(); ++r) {
      rows.push_back(ExportedRow{name, chosen[r], std::vector<double>(values.begin() + r * d, values.begin() + (r + 1) * d)});
    }
  }
  return rows;
}

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<ExportedRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("export: cannot write " + path.string());
  const std::size_t d = rows.empty() ? 0 : rows.front().embedding.size();
  out << "class,item";
  for (std::size_t k = 0; k < d; ++k) out << ",e" << k;
  out << '\n';
  char buffer[64];
  for (const auto& row : rows) {
    out << row.class_name << ',' << row.item;
    for (double v : row.embedding) {
      auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
      out << ',' << std::string_view(buffer, static_cast<std::size_t>(end - buffer));
    }
    out << '\n';
  }
  if (!out) throw DataError("export: write failed for " + path.string());
}

}  // namespace mmfs
