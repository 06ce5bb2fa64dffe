#include "mmfs/episodes/manifest.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

#include "mmfs/core/error.hpp"

namespace mmfs {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::MetaTrain: return "meta_train";
    case Split::MetaVal: return "meta_val";
    case Split::MetaTest: return "meta_test";
  }
  return "meta_train";
}

Split parse_split(std::string_view token) {
  if (token == "meta_train") return Split::MetaTrain;
  if (token == "meta_val") return Split::MetaVal;
  if (token == "meta_test") return Split::MetaTest;
  throw ConfigError("unknown split '" + std::string(token) + "' (expected meta_train, meta_val or meta_test)");
}

DatasetManifest::DatasetManifest(std::vector<MultiModalItem> items, std::map<Split, std::vector<std::string>> splits,
                                 std::size_t sentences_per_item)
    : items_(std::move(items)), splits_(std::move(splits)), sentences_per_item_(sentences_per_item) {
  if (items_.empty()) throw DataError("manifest: no items");
  if (sentences_per_item_ == 0) throw DataError("manifest: sentence count must be positive");
  image_shape_ = items_.front().image_shape;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (item.class_name.empty()) throw DataError("manifest: item " + std::to_string(i) + " has an empty class");
    if (item.image_shape != image_shape_) {
      throw DataError("manifest: item " + std::to_string(i) + " image shape differs from the first item");
    }
    if (item.image.size() != image_shape_[0] * image_shape_[1] * image_shape_[2] || item.image.empty()) {
      throw DataError("manifest: item " + std::to_string(i) + " has " + std::to_string(item.image.size()) +
                      " image values for its shape");
    }
    if (item.sentences.size() != sentences_per_item_) {
      throw DataError("manifest: item " + std::to_string(i) + " has " + std::to_string(item.sentences.size()) +
                      " sentences, expected " + std::to_string(sentences_per_item_));
    }
    auto [it, inserted] = class_items_.try_emplace(item.class_name);
    if (inserted) classes_.push_back(item.class_name);
    it->second.push_back(i);
  }
  for (Split split : kAllSplits) splits_.try_emplace(split);

  std::map<std::string, Split> owner;
  for (const auto& [split, names] : splits_) {
    std::set<std::string> seen;
    for (const auto& name : names) {
      if (!seen.insert(name).second) {
        throw DataError("manifest: class '" + name + "' listed twice in " + std::string(to_string(split)));
      }
      auto [it, inserted] = owner.emplace(name, split);
      if (!inserted) {
        throw DataError("manifest: split overlap, class '" + name + "' is in both " +
                        std::string(to_string(it->second)) + " and " + std::string(to_string(split)));
      }
      if (!class_items_.contains(name)) {
        throw DataError("manifest: split class '" + name + "' has no items");
      }
    }
  }
}

const std::vector<std::string>& DatasetManifest::split_classes(Split split) const { return splits_.at(split); }

const std::vector<std::size_t>& DatasetManifest::items_of_class(const std::string& class_name) const {
  auto it = class_items_.find(class_name);
  if (it == class_items_.end()) throw DataError("manifest: unknown class '" + class_name + "'");
  return it->second;
}

bool DatasetManifest::operator==(const DatasetManifest& other) const {
  return items_ == other.items_ && splits_ == other.splits_ && sentences_per_item_ == other.sentences_per_item_;
}

std::filesystem::path splits_path_for(const std::filesystem::path& manifest_path) {
  return std::filesystem::path(manifest_path.string() + ".splits.json");
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path);
    if (!out) throw DataError("manifest: cannot write " + path.string());
    for (const auto& item : manifest.items()) {
      json record;
      record["class"] = item.class_name;
      record["image_shape"] = item.image_shape;
      record["image"] = item.image;
      record["sentences"] = item.sentences;
      out << record.dump() << '\n';
    }
  }
  json splits;
  for (Split split : kAllSplits) splits[std::string(to_string(split))] = manifest.split_classes(split);
  splits["n_sentences"] = manifest.sentences_per_item();
  std::ofstream out(splits_path_for(path));
  if (!out) throw DataError("manifest: cannot write " + splits_path_for(path).string());
  out << splits.dump(2) << '\n';
}

namespace {

template <typename T>
T field(const json& record, const char* key, const std::string& where) {
  if (!record.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  try {
    return record.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path.string());

  const auto splits_file = splits_path_for(path);
  std::ifstream splits_in(splits_file);
  if (!splits_in) throw DataError("manifest: missing split file " + splits_file.string());
  json splits_json;
  try {
    splits_json = json::parse(splits_in);
  } catch (const json::exception& e) {
    throw DataError(splits_file.string() + ": " + e.what());
  }
  const std::string split_where = splits_file.string();
  const auto sentences = field<std::size_t>(splits_json, "n_sentences", split_where);
  std::map<Split, std::vector<std::string>> splits;
  for (Split split : kAllSplits) {
    splits[split] = field<std::vector<std::string>>(splits_json, std::string(to_string(split)).c_str(), split_where);
  }

  std::vector<MultiModalItem> items;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_number);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    MultiModalItem item;
    item.class_name = field<std::string>(record, "class", where);
    const auto shape = field<std::vector<std::size_t>>(record, "image_shape", where);
    if (shape.size() != 3) throw DataError(where + ": image_shape must be [C,H,W]");
    item.image_shape = {shape[0], shape[1], shape[2]};
    item.image = field<std::vector<float>>(record, "image", where);
    item.sentences = field<std::vector<std::string>>(record, "sentences", where);
    if (item.image.size() != shape[0] * shape[1] * shape[2]) {
      throw DataError(where + ": image has " + std::to_string(item.image.size()) + " values, shape needs " +
                      std::to_string(shape[0] * shape[1] * shape[2]));
    }
    if (item.sentences.size() != sentences) {
      throw DataError(where + ": wrong sentence count " + std::to_string(item.sentences.size()) + ", expected " +
                      std::to_string(sentences));
    }
    items.push_back(std::move(item));
  }
  try {
    return DatasetManifest(std::move(items), std::move(splits), sentences);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace mmfs
