#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/vec.hpp"

namespace diana {

inline constexpr std::string_view kFeaturizerId = "fnv1a64-sgn/v1";
inline constexpr std::string_view kSepToken = "[SEP]";

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void add_feature(std::string_view gram, Vector& acc) {
  const std::uint64_t h = fnv1a64(gram);
  acc[static_cast<std::size_t>(h % acc.size())] += (h >> 63) == 0 ? 1.0 : -1.0;
}

inline Vector hash_ngrams(const TokenSeq& seq, std::size_t dim) {
  Vector acc(dim, 0.0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    add_feature(seq[i], acc);
    if (i + 1 < seq.size()) add_feature(seq[i] + ' ' + seq[i + 1], acc);
  }
  return acc;
}

}  // namespace detail

// Frozen query encoder: signed feature hashing of unigrams and adjacent bigrams
// (tokens joined by one space) over context ++ [SEP] ++ question, L2-normalized.
// [SEP] is only inserted when both parts are non-empty. A sequence of n tokens yields
// 2n - 1 features, an odd count, so some bucket is always non-zero.
inline Vector encode(const TokenSeq& context, const TokenSeq& question, int dim) {
  if (dim < 2) throw ConfigError("feature dimension must be >= 2");
  if (context.empty() && question.empty()) throw EncodingError("empty input");

  TokenSeq seq = context;
  if (!context.empty() && !question.empty()) seq.emplace_back(kSepToken);
  seq.insert(seq.end(), question.begin(), question.end());

  Vector v = detail::hash_ngrams(seq, static_cast<std::size_t>(dim));
  const double n = vec::norm(v);
  for (double& x : v) x /= n;
  return v;
}

inline Vector encode(const QAInstance& inst, int dim) { return encode(inst.context, inst.question, dim); }
inline Vector encode(const Query& q, int dim) { return encode(q.context, q.question, dim); }

}  // namespace diana
