#include "mmfs/encoders/tokenizer.hpp"

#include <cctype>

#include "mmfs/core/error.hpp"
#include "mmfs/core/rng.hpp"

namespace mmfs {

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t token_bucket(std::string_view token, std::size_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("token_bucket: vocabulary size must be positive");
  return static_cast<std::size_t>(fnv1a64(token) % vocab_size);
}

TokenSequence encode_sentence(std::string_view sentence, std::size_t vocab_size) {
  TokenSequence ids;
  for (const auto& token : tokenize(sentence)) ids.push_back(token_bucket(token, vocab_size));
  return ids;
}

}  // namespace mmfs
