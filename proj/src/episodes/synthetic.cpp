#include "mmfs/episodes/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "mmfs/core/error.hpp"
#include "mmfs/core/rng.hpp"

namespace mmfs {

void SyntheticSpec::validate() const {
  if (!(image_noise >= 0.0)) throw ConfigError("synthetic: image_noise must be >= 0");
  if (!(text_signal >= 0.0 && text_signal <= 1.0)) throw ConfigError("synthetic: text_signal must lie in [0, 1]");
  if (train_classes + val_classes + test_classes == 0) throw ConfigError("synthetic: no classes requested");
  if (items_per_class == 0 || latent_dim == 0 || channels == 0 || height == 0 || width == 0 ||
      sentences_per_item == 0 || words_per_sentence == 0 || class_vocab == 0 || shared_vocab == 0) {
    throw ConfigError("synthetic: sizes must be positive");
  }
}

namespace {

std::string class_name(std::size_t index) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "class_%03zu", index);
  return buffer;
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t total_classes = spec.train_classes + spec.val_classes + spec.test_classes;
  const std::size_t pixels = spec.channels * spec.height * spec.width;

  Rng render_rng = Rng::stream(spec.seed, "synthetic/render");
  std::vector<double> render(pixels * spec.latent_dim);
  const double render_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (double& v : render) v = render_scale * render_rng.normal();

  const auto class_tokens = static_cast<std::size_t>(
      std::llround(spec.text_signal * static_cast<double>(spec.words_per_sentence)));

  std::vector<MultiModalItem> items;
  items.reserve(total_classes * spec.items_per_class);
  std::map<Split, std::vector<std::string>> splits;
  for (std::size_t c = 0; c < total_classes; ++c) {
    const std::string name = class_name(c);
    if (c < spec.train_classes) {
      splits[Split::MetaTrain].push_back(name);
    } else if (c < spec.train_classes + spec.val_classes) {
      splits[Split::MetaVal].push_back(name);
    } else {
      splits[Split::MetaTest].push_back(name);
    }

    Rng latent_rng = Rng::stream(spec.seed, "synthetic/latent", c);
    std::vector<double> latent(spec.latent_dim);
    for (double& v : latent) v = latent_rng.normal();
    std::vector<double> clean(pixels, 0.0);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t k = 0; k < spec.latent_dim; ++k) clean[p] += render[p * spec.latent_dim + k] * latent[k];

    for (std::size_t i = 0; i < spec.items_per_class; ++i) {
      Rng item_rng = Rng::stream(spec.seed, "synthetic/item", c * spec.items_per_class + i);
      MultiModalItem item;
      item.class_name = name;
      item.image_shape = {spec.channels, spec.height, spec.width};
      item.image.resize(pixels);
      for (std::size_t p = 0; p < pixels; ++p) {
        item.image[p] = static_cast<float>(clean[p] + spec.image_noise * item_rng.normal());
      }
      for (std::size_t s = 0; s < spec.sentences_per_item; ++s) {
        std::vector<std::string> words;
        words.reserve(spec.words_per_sentence);
        for (std::size_t w = 0; w < spec.words_per_sentence; ++w) {
          if (w < class_tokens) {
            words.push_back("c" + std::to_string(c) + "w" + std::to_string(item_rng.below(spec.class_vocab)));
          } else {
            words.push_back("w" + std::to_string(item_rng.below(spec.shared_vocab)));
          }
        }
        for (std::size_t w = words.size(); w > 1; --w) std::swap(words[w - 1], words[item_rng.below(w)]);
        std::string sentence;
        for (const auto& word : words) {
          if (!sentence.empty()) sentence.push_back(' ');
          sentence += word;
        }
        item.sentences.push_back(std::move(sentence));
      }
      items.push_back(std::move(item));
    }
  }
  return DatasetManifest(std::move(items), std::move(splits), spec.sentences_per_item);
}

}  // namespace mmfs
