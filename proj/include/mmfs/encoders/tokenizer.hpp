#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mmfs {

/// Bucket ids of one sentence, in token order.
using TokenSequence = std::vector<std::size_t>;

inline constexpr std::size_t kDefaultVocabSize = 4096;

/// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> tokenize(std::string_view sentence);

/// FNV-1a 64-bit hash of the token bytes, modulo `vocab_size`. Stable across
/// platforms so manifests stay portable.
std::size_t token_bucket(std::string_view token, std::size_t vocab_size);

TokenSequence encode_sentence(std::string_view sentence, std::size_t vocab_size);

}  // namespace mmfs
