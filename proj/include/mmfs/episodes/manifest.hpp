#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mmfs {

enum class Split { MetaTrain, MetaVal, MetaTest };

inline constexpr std::array<Split, 3> kAllSplits{Split::MetaTrain, Split::MetaVal, Split::MetaTest};

/// "meta_train", "meta_val", "meta_test".
std::string_view to_string(Split split);
Split parse_split(std::string_view token);

struct MultiModalItem {
  std::string class_name;
  std::array<std::size_t, 3> image_shape{};  // C, H, W
  std::vector<float> image;                  // row-major C×H×W
  std::vector<std::string> sentences;

  bool operator==(const MultiModalItem&) const = default;
};

/// Immutable, validated collection of items with disjoint class splits.
class DatasetManifest {
 public:
  DatasetManifest() = default;

  /// Throws DataError if items disagree on image shape or sentence count, a
  /// class appears in more than one split, or a split class has no items.
  DatasetManifest(std::vector<MultiModalItem> items, std::map<Split, std::vector<std::string>> splits,
                  std::size_t sentences_per_item);

  const std::vector<MultiModalItem>& items() const { return items_; }
  const MultiModalItem& item(std::size_t index) const { return items_.at(index); }
  std::size_t size() const { return items_.size(); }

  /// Classes in order of first appearance.
  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::string>& split_classes(Split split) const;
  /// Item indices of a class in manifest order.
  const std::vector<std::size_t>& items_of_class(const std::string& class_name) const;

  std::size_t sentences_per_item() const { return sentences_per_item_; }
  std::array<std::size_t, 3> image_shape() const { return image_shape_; }

  bool operator==(const DatasetManifest& other) const;

 private:
  std::vector<MultiModalItem> items_;
  std::map<Split, std::vector<std::string>> splits_;
  std::size_t sentences_per_item_ = 0;
  std::array<std::size_t, 3> image_shape_{};
  std::vector<std::string> classes_;
  std::map<std::string, std::vector<std::size_t>> class_items_;
};

/// Sidecar split file written next to a manifest: "<manifest>.splits.json".
std::filesystem::path splits_path_for(const std::filesystem::path& manifest_path);

/// JSON-lines manifest plus the sidecar split file. Floats use shortest
/// round-trip decimal encoding, so save → load is exact.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace mmfs
