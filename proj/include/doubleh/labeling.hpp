// SPDX-License-Identifier: Apache-2.0
//
// Hashtag-driven weak labels for tweets and users.
#pragma once

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "doubleh/errors.hpp"

namespace doubleh {

enum class StanceLabel : std::uint8_t { Negative = 0, Positive = 1 };

inline int to_int(StanceLabel l) { return static_cast<int>(l); }
inline StanceLabel stance_from_int(long v) {
  if (v != 0 && v != 1) throw DataError("stance label must be 0 or 1, got " + std::to_string(v));
  return v == 1 ? StanceLabel::Positive : StanceLabel::Negative;
}

/// Lookup key for a hashtag: leading '#' stripped, case-folded, NFC.
inline std::string normalize_hashtag(std::string_view tag) {
  if (!tag.empty() && tag.front() == '#') tag.remove_prefix(1);
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(tag.data(), static_cast<int32_t>(tag.size())));
  text.foldCase();
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw DataError("cannot normalize hashtag");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

/// Hashtag -> candidate map. Exactly two candidates; one of them is the
/// positive class (label 1).
class HashtagLexicon {
 public:
  HashtagLexicon() = default;

  HashtagLexicon(std::string positive_candidate, const std::map<std::string, std::string>& entries)
      : positive_(std::move(positive_candidate)) {
    for (const auto& [tag, candidate] : entries) add(tag, candidate);
    validate();
  }

  /// {"positive_candidate": str, "entries": {hashtag: candidate}}
  static HashtagLexicon from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("positive_candidate") || !j.contains("entries") || !j["entries"].is_object()) {
      throw DataError("lexicon must be an object with 'positive_candidate' and 'entries'");
    }
    std::map<std::string, std::string> entries;
    for (const auto& [tag, cand] : j["entries"].items()) {
      if (!cand.is_string()) throw DataError("lexicon entry '" + tag + "' must map to a candidate name");
      entries.emplace(tag, cand.get<std::string>());
    }
    return HashtagLexicon(j["positive_candidate"].get<std::string>(), entries);
  }

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [tag, cand] : entries_) entries[tag] = cand;
    return {{"positive_candidate", positive_}, {"entries", entries}};
  }

  const std::string& positive_candidate() const noexcept { return positive_; }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  /// Candidate for a raw hashtag, if the lexicon knows it.
  std::optional<std::string> candidate(std::string_view hashtag) const {
    auto it = entries_.find(normalize_hashtag(hashtag));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view hashtag) const { return candidate(hashtag).has_value(); }

  StanceLabel label_of(const std::string& candidate) const {
    return candidate == positive_ ? StanceLabel::Positive : StanceLabel::Negative;
  }

 private:
  void add(const std::string& tag, const std::string& candidate) {
    const std::string key = normalize_hashtag(tag);
    if (key.empty()) throw DataError("lexicon contains an empty hashtag");
    auto [it, inserted] = entries_.emplace(key, candidate);
    if (!inserted && it->second != candidate) {
      throw DataError("lexicon hashtag '" + key + "' maps to two candidates");
    }
  }

  void validate() const {
    std::set<std::string> candidates;
    for (const auto& [tag, cand] : entries_) candidates.insert(cand);
    if (candidates.size() > 2) throw DataError("lexicon names more than two candidates");
    if (!candidates.empty() && !candidates.contains(positive_)) {
      throw DataError("positive candidate '" + positive_ + "' has no lexicon entries");
    }
  }

  std::string positive_;
  std::map<std::string, std::string> entries_;
};

/// Label of a tweet: defined iff at least one hashtag is in the lexicon and all
/// lexicon hashtags agree on the candidate. Other hashtags are ignored.
inline std::optional<StanceLabel> label_tweet(std::span<const std::string> hashtags, const HashtagLexicon& lexicon) {
  if (lexicon.empty()) throw ConfigError("label_tweet: empty lexicon");
  std::optional<std::string> agreed;
  for (const std::string& tag : hashtags) {
    auto cand = lexicon.candidate(tag);
    if (!cand) continue;
    if (agreed && *agreed != *cand) return std::nullopt;
    agreed = std::move(cand);
  }
  if (!agreed) return std::nullopt;
  return lexicon.label_of(*agreed);
}

/// Fraction of positive labels; nullopt when the list is empty (the user
/// cannot be labeled).
inline std::optional<double> user_positive_ratio(std::span<const StanceLabel> labels) {
  if (labels.empty()) return std::nullopt;
  std::size_t positive = 0;
  for (StanceLabel l : labels) positive += l == StanceLabel::Positive;
  return static_cast<double>(positive) / static_cast<double>(labels.size());
}

enum class TieRule { Positive, Negative };

inline StanceLabel label_user(double ratio, double threshold = 0.5, TieRule tie = TieRule::Positive) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("user label threshold must lie in [0, 1]");
  if (ratio > threshold) return StanceLabel::Positive;
  if (ratio < threshold) return StanceLabel::Negative;
  return tie == TieRule::Positive ? StanceLabel::Positive : StanceLabel::Negative;
}

/// Equal-width bins over [0, 1]. A value on an inner edge goes to the higher
/// bin; 1.0 goes to the last bin.
inline std::vector<std::size_t> ratio_histogram(std::span<const double> ratios, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("ratio " + std::to_string(r) + " outside [0, 1]");
    auto b = static_cast<std::size_t>(std::floor(r * static_cast<double>(bins)));
    counts[b >= bins ? bins - 1 : b] += 1;
  }
  return counts;
}

struct UserLabel {
  std::uint32_t user = 0;
  double ratio = 0.0;
  StanceLabel label = StanceLabel::Negative;
  std::size_t labeled_tweet_count = 0;
};

/// Labels every user from the labels of the tweets it posted or retweeted.
/// `user_tweets[u]` lists tweet indices (repeats count), `tweet_labels[t]` the
/// tweet's weak label. Users with no labeled tweet are left out.
inline std::vector<UserLabel> label_users(std::span<const std::vector<std::uint32_t>> user_tweets,
                                          std::span<const std::optional<StanceLabel>> tweet_labels,
                                          double threshold = 0.5, TieRule tie = TieRule::Positive) {
  std::vector<UserLabel> out;
  std::vector<StanceLabel> labels;
  for (std::size_t u = 0; u < user_tweets.size(); ++u) {
    labels.clear();
    for (std::uint32_t t : user_tweets[u]) {
      if (t >= tweet_labels.size()) throw DataError("user references unknown tweet index");
      if (tweet_labels[t]) labels.push_back(*tweet_labels[t]);
    }
    const auto ratio = user_positive_ratio(labels);
    if (!ratio) continue;
    out.push_back({static_cast<std::uint32_t>(u), *ratio, label_user(*ratio, threshold, tie), labels.size()});
  }
  return out;
}

}  // namespace doubleh
