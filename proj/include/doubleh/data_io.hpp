// SPDX-License-Identifier: Apache-2.0
//
// Dataset records, text preprocessing, node features, the synthetic
// planted-community generator and JSONL serialization.
//
// File layout of a dataset directory:
//   users.jsonl         {"id", "profile", "location"?, "fields"?}
//   tweets.jsonl        {"id", "author_id", "text", "hashtags": [...], "retweet_of"?}
//   interactions.jsonl  {"user_id", "tweet_id", "kind": "post"|"retweet"}   (optional)
//   labels.jsonl        {"user_id", "label", "f_u"?, "labeled_tweet_count"?} (optional)
//   features.jsonl      {"node": "u:<id>"|"t:<id>", "vec": [...]}          (optional)
#pragma once

#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "doubleh/errors.hpp"
#include "doubleh/graph.hpp"
#include "doubleh/labeling.hpp"
#include "doubleh/random.hpp"
#include "doubleh/tensor.hpp"

namespace doubleh {

struct UserRecord {
  std::string id;
  std::string profile;
  std::optional<std::string> location;
  std::map<std::string, std::string> fields;

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

struct TweetRecord {
  std::string id;
  std::string author_id;
  std::string text;
  std::vector<std::string> hashtags;
  std::optional<std::string> retweet_of;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

struct InteractionRecord {
  std::string user_id;
  std::string tweet_id;
  EdgeKind kind = EdgeKind::Post;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

struct LabelRecord {
  std::string user_id;
  StanceLabel label = StanceLabel::Negative;
  std::optional<double> ratio;
  std::optional<std::size_t> labeled_tweet_count;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

struct Dataset {
  std::vector<UserRecord> users;
  std::vector<TweetRecord> tweets;
  std::optional<std::vector<InteractionRecord>> interactions;
  std::vector<LabelRecord> labels;
  std::map<std::string, std::vector<double>> features;  ///< keyed "u:<id>" / "t:<id>"

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::string user_key(std::string_view id) { return "u:" + std::string(id); }
inline std::string tweet_key(std::string_view id) { return "t:" + std::string(id); }

// --- text preprocessing ---------------------------------------------------

/// Profile followed by one template sentence per present optional field:
/// location becomes "My location is <loc>.", other fields "My <key> is <value>.".
inline std::string compose_profile(const UserRecord& user) {
  std::vector<std::string> parts;
  if (!user.profile.empty()) parts.push_back(user.profile);
  if (user.location && !user.location->empty()) parts.push_back("My location is " + *user.location + ".");
  for (const auto& [key, value] : user.fields) {
    if (!value.empty()) parts.push_back("My " + key + " is " + value + ".");
  }
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

/// Codepoint ranges treated as emoji/emoticons:
///   U+1F000-1FAFF  mahjong, playing cards, enclosed alphanumerics/ideographs,
///                  pictographs, emoticons, transport, geometric ext., supplemental
///   U+2600-27BF    miscellaneous symbols, dingbats
///   U+2300-23FF    miscellaneous technical (watch, hourglass, media controls)
///   U+2B00-2BFF    miscellaneous symbols and arrows (star, large circles)
///   U+FE00-FE0F    variation selectors
///   U+200D         zero width joiner
///   U+20E3         combining enclosing keycap
///   U+E0020-E007F  tag characters (flag sequences)
inline bool is_emoji_codepoint(char32_t c) {
  return (c >= 0x1F000 && c <= 0x1FAFF) || (c >= 0x2600 && c <= 0x27BF) || (c >= 0x2300 && c <= 0x23FF) ||
         (c >= 0x2B00 && c <= 0x2BFF) || (c >= 0xFE00 && c <= 0xFE0F) || c == 0x200D || c == 0x20E3 ||
         (c >= 0xE0020 && c <= 0xE007F);
}

inline std::string strip_emoji(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    if (c >= 0 && is_emoji_codepoint(static_cast<char32_t>(c))) continue;
    out.append(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
  return out;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

/// Token starting with a URI scheme followed by "://".
inline bool is_url_token(std::string_view token) {
  const std::size_t sep = token.find("://");
  if (sep == std::string_view::npos || sep == 0) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  if (!alpha(token[0])) return false;
  for (std::size_t i = 1; i < sep; ++i) {
    const char c = token[i];
    if (!(alpha(c) || (c >= '0' && c <= '9') || c == '+' || c == '.' || c == '-')) return false;
  }
  return true;
}

/// Hashtag text of a "#tag" token with trailing ASCII punctuation dropped.
inline std::optional<std::string_view> hashtag_of(std::string_view token) {
  if (token.size() < 2 || token.front() != '#') return std::nullopt;
  std::string_view tag = token;
  while (tag.size() > 1 && std::string_view(".,!?;:)\"'").find(tag.back()) != std::string_view::npos) {
    tag.remove_suffix(1);
  }
  if (tag.size() < 2) return std::nullopt;
  return tag;
}

/// Drops emoji codepoints, URL tokens and lexicon hashtags; collapses
/// whitespace to single spaces.
inline std::string clean_text(std::string_view text, const HashtagLexicon* lexicon = nullptr) {
  const std::string no_emoji = strip_emoji(text);
  std::string out;
  for (std::string_view token : split_whitespace(no_emoji)) {
    if (is_url_token(token)) continue;
    if (lexicon != nullptr && !lexicon->empty()) {
      if (auto tag = hashtag_of(token); tag && lexicon->contains(*tag)) continue;
    }
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

inline std::string clean_text(std::string_view text, const HashtagLexicon& lexicon) { return clean_text(text, &lexicon); }

// --- features ---------------------------------------------------------------

enum class FeatureMethod { HashedBagOfWords, SeededRandom, ExternalFile };

inline const char* to_string(FeatureMethod m) {
  switch (m) {
    case FeatureMethod::HashedBagOfWords: return "hashed";
    case FeatureMethod::SeededRandom: return "random";
    case FeatureMethod::ExternalFile: return "file";
  }
  return "?";
}

struct FeatureProvider {
  FeatureMethod method = FeatureMethod::HashedBagOfWords;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  /// Vectors for ExternalFile, keyed like Dataset::features.
  std::map<std::string, std::vector<double>> external;
};

inline void normalize_in_place(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

/// Hashed bag of words: ASCII-lowercased whitespace tokens, bucket =
/// FNV-1a-64(token) mod dim, counts L2-normalized. Empty text gives zeros.
inline std::vector<double> hashed_bag_of_words(std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  for (std::string_view token : split_whitespace(text)) {
    std::string lower(token);
    for (char& c : lower)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    v[fnv1a64(lower) % dim] += 1.0;
  }
  normalize_in_place(v);
  return v;
}

/// Feature vector for one node. `node_key` is "u:<id>" or "t:<id>".
inline std::vector<double> featurize(std::string_view text, const FeatureProvider& provider,
                                     std::string_view node_key) {
  if (provider.dim == 0) throw ConfigError("feature dimension must be at least 1");
  switch (provider.method) {
    case FeatureMethod::HashedBagOfWords:
      return hashed_bag_of_words(text, provider.dim);
    case FeatureMethod::SeededRandom: {
      Rng rng(derive_seed(provider.seed, fnv1a64(node_key)));
      std::vector<double> v(provider.dim);
      for (double& x : v) x = standard_normal(rng);
      normalize_in_place(v);
      return v;
    }
    case FeatureMethod::ExternalFile: {
      auto it = provider.external.find(std::string(node_key));
      if (it == provider.external.end()) throw DataError("feature file has no vector for " + std::string(node_key));
      if (it->second.size() != provider.dim) {
        throw DataError("feature vector for " + std::string(node_key) + " has dimension " +
                        std::to_string(it->second.size()) + ", expected " + std::to_string(provider.dim));
      }
      return it->second;
    }
  }
  return {};
}

// --- graph derivation -------------------------------------------------------

/// String ids <-> dense node indices. Tweet nodes are the non-retweet records.
struct GraphIndex {
  std::vector<std::string> user_ids;
  std::vector<std::string> tweet_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> tweet_index;

  std::optional<NodeRef> find_user(const std::string& id) const {
    auto it = user_index.find(id);
    if (it == user_index.end()) return std::nullopt;
    return NodeRef::user(it->second);
  }
  std::optional<NodeRef> find_tweet(const std::string& id) const {
    auto it = tweet_index.find(id);
    if (it == tweet_index.end()) return std::nullopt;
    return NodeRef::tweet(it->second);
  }
  std::string key(NodeRef n) const {
    return n.kind == NodeKind::User ? user_key(user_ids.at(n.index)) : tweet_key(tweet_ids.at(n.index));
  }
};

struct DatasetGraph {
  GraphIndex index;
  std::vector<InteractionRecord> interactions;  ///< explicit or derived
  BipartiteGraph graph;
};

/// Root of a retweet chain. Throws on dangling references and cycles.
inline const TweetRecord& resolve_root(const TweetRecord& tweet,
                                       const std::unordered_map<std::string, const TweetRecord*>& by_id) {
  const TweetRecord* cur = &tweet;
  std::size_t steps = 0;
  while (cur->retweet_of) {
    auto it = by_id.find(*cur->retweet_of);
    if (it == by_id.end()) throw DataError("tweet '" + cur->id + "' retweets unknown tweet '" + *cur->retweet_of + "'");
    cur = it->second;
    if (++steps > by_id.size()) throw DataError("retweet chain starting at '" + tweet.id + "' is cyclic");
  }
  return *cur;
}

/// Post edges from authorship of non-retweet tweets, retweet edges from each
/// retweet record to the root of its chain.
inline std::vector<InteractionRecord> derive_interactions(const Dataset& data) {
  std::unordered_map<std::string, const TweetRecord*> by_id;
  for (const TweetRecord& t : data.tweets) by_id.emplace(t.id, &t);
  std::vector<InteractionRecord> out;
  for (const TweetRecord& t : data.tweets) {
    if (!t.retweet_of) {
      out.push_back({t.author_id, t.id, EdgeKind::Post});
    } else {
      out.push_back({t.author_id, resolve_root(t, by_id).id, EdgeKind::Retweet});
    }
  }
  return out;
}

inline DatasetGraph build_dataset_graph(const Dataset& data) {
  DatasetGraph dg;
  GraphIndex& ix = dg.index;
  for (const UserRecord& u : data.users) {
    if (!ix.user_index.emplace(u.id, static_cast<std::uint32_t>(ix.user_ids.size())).second) {
      throw DataError("duplicate user id '" + u.id + "'");
    }
    ix.user_ids.push_back(u.id);
  }
  for (const TweetRecord& t : data.tweets) {
    if (t.retweet_of) continue;
    if (!ix.tweet_index.emplace(t.id, static_cast<std::uint32_t>(ix.tweet_ids.size())).second) {
      throw DataError("duplicate tweet id '" + t.id + "'");
    }
    ix.tweet_ids.push_back(t.id);
  }
  dg.interactions = data.interactions ? *data.interactions : derive_interactions(data);
  std::vector<Interaction> edges;
  edges.reserve(dg.interactions.size());
  for (const InteractionRecord& r : dg.interactions) {
    auto endpoint = [&](const std::string& id, bool want_user) -> NodeRef {
      const auto user = ix.find_user(id);
      const auto tweet = ix.find_tweet(id);
      if (want_user && user) return *user;
      if (!want_user && tweet) return *tweet;
      // An id that only resolves as the other kind makes a same-kind edge,
      // which build() rejects as non-bipartite.
      if (want_user && tweet) return *tweet;
      if (!want_user && user) return *user;
      throw DataError("interaction references unknown " + std::string(want_user ? "user" : "tweet") + " '" + id + "'");
    };
    edges.push_back({endpoint(r.user_id, true), endpoint(r.tweet_id, false), r.kind});
  }
  dg.graph = BipartiteGraph::build(ix.user_ids.size(), ix.tweet_ids.size(), edges);
  return dg;
}

/// Feature matrix with one row per graph node (BipartiteGraph::global order)
/// taken from the dataset's feature map.
inline Tensor dataset_feature_matrix(const Dataset& data, const DatasetGraph& dg) {
  const std::size_t n = dg.graph.num_nodes();
  if (n == 0) return Tensor(0, 0);
  std::size_t dim = 0;
  Tensor out;
  for (std::size_t g = 0; g < n; ++g) {
    const std::string key = dg.index.key(dg.graph.node(g));
    auto it = data.features.find(key);
    if (it == data.features.end()) throw DataError("no feature vector for node " + key);
    if (g == 0) {
      dim = it->second.size();
      if (dim == 0) throw DataError("empty feature vector for node " + key);
      out = Tensor(n, dim);
    }
    if (it->second.size() != dim) throw DataError("feature vector for " + key + " has inconsistent dimension");
    std::copy(it->second.begin(), it->second.end(), out.row(g).begin());
  }
  return out;
}

/// Feature matrix computed by a provider over preprocessed node text: users
/// from compose_profile, tweets from clean_text.
inline Tensor provider_feature_matrix(const Dataset& data, const DatasetGraph& dg, const FeatureProvider& provider,
                                      const HashtagLexicon* lexicon) {
  std::unordered_map<std::string, const UserRecord*> users;
  for (const UserRecord& u : data.users) users.emplace(u.id, &u);
  std::unordered_map<std::string, const TweetRecord*> tweets;
  for (const TweetRecord& t : data.tweets) tweets.emplace(t.id, &t);
  Tensor out(dg.graph.num_nodes(), provider.dim);
  for (std::size_t g = 0; g < dg.graph.num_nodes(); ++g) {
    const NodeRef n = dg.graph.node(g);
    std::string text;
    if (n.kind == NodeKind::User) {
      text = compose_profile(*users.at(dg.index.user_ids[n.index]));
    } else {
      text = clean_text(tweets.at(dg.index.tweet_ids[n.index])->text, lexicon);
    }
    const auto v = featurize(text, provider, dg.index.key(n));
    std::copy(v.begin(), v.end(), out.row(g).begin());
  }
  return out;
}

/// Weak labels for every user of a dataset from the hashtags of the tweets it
/// posted or retweeted (retweets count the root tweet).
inline std::vector<LabelRecord> weak_label_dataset(const Dataset& data, const HashtagLexicon& lexicon,
                                                   double threshold = 0.5, TieRule tie = TieRule::Positive) {
  const DatasetGraph dg = build_dataset_graph(data);
  std::unordered_map<std::string, const TweetRecord*> tweets;
  for (const TweetRecord& t : data.tweets) tweets.emplace(t.id, &t);
  std::vector<std::optional<StanceLabel>> tweet_labels(dg.index.tweet_ids.size());
  for (std::size_t t = 0; t < tweet_labels.size(); ++t) {
    tweet_labels[t] = label_tweet(tweets.at(dg.index.tweet_ids[t])->hashtags, lexicon);
  }
  std::vector<std::vector<std::uint32_t>> user_tweets(dg.index.user_ids.size());
  for (const InteractionRecord& r : dg.interactions) {
    user_tweets[dg.index.user_index.at(r.user_id)].push_back(dg.index.tweet_index.at(r.tweet_id));
  }
  std::vector<LabelRecord> out;
  for (const UserLabel& ul : label_users(user_tweets, tweet_labels, threshold, tie)) {
    out.push_back({dg.index.user_ids[ul.user], ul.label, ul.ratio, ul.labeled_tweet_count});
  }
  return out;
}

// --- synthetic data ---------------------------------------------------------

/// Two planted communities. Community 1 is the positive class.
struct SyntheticParams {
  std::size_t users_per_community = 200;
  std::size_t tweets_per_user = 5;
  std::size_t retweets_per_user = 5;
  double p_in = 0.9;         ///< probability a retweet stays in the community
  double mu = 1.0;           ///< tweet feature shift along the signal axis
  double noise = 1.0;        ///< tweet feature noise per coordinate
  double user_mu = 0.0;      ///< user feature shift
  double user_noise = 1.0;   ///< user feature noise per coordinate
  std::size_t feature_dim = 16;
  double hashtag_rate = 1.0;  ///< probability an authored tweet carries its community hashtag
  std::uint64_t seed = 7;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_in) || !prob(hashtag_rate)) throw ConfigError("synthetic probabilities must lie in [0, 1]");
    if (!(noise >= 0.0) || !(user_noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
    if (!std::isfinite(mu) || !std::isfinite(user_mu)) throw ConfigError("synthetic shifts must be finite");
    if (feature_dim == 0) throw ConfigError("feature dimension must be at least 1");
  }

  friend bool operator==(const SyntheticParams&, const SyntheticParams&) = default;
};

inline void to_json(nlohmann::json& j, const SyntheticParams& p) {
  j = {{"users_per_community", p.users_per_community},
       {"tweets_per_user", p.tweets_per_user},
       {"retweets_per_user", p.retweets_per_user},
       {"p_in", p.p_in},
       {"mu", p.mu},
       {"noise", p.noise},
       {"user_mu", p.user_mu},
       {"user_noise", p.user_noise},
       {"feature_dim", p.feature_dim},
       {"hashtag_rate", p.hashtag_rate},
       {"seed", p.seed}};
}

struct SyntheticData {
  Dataset dataset;  ///< labels hold the planted communities
  HashtagLexicon lexicon;
  std::vector<int> community;  ///< per user, in dataset order
};

inline SyntheticData generate_synthetic(const SyntheticParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, 0x5e7));
  SyntheticData out;
  out.lexicon = HashtagLexicon("B", {{"voteb", "B"}, {"teamb", "B"}, {"votea", "A"}, {"teama", "A"}});
  const std::array<std::array<const char*, 2>, 2> tags{{{"VoteA", "TeamA"}, {"VoteB", "TeamB"}}};
  Dataset& d = out.dataset;
  const std::size_t n_users = 2 * params.users_per_community;

  auto feature = [&](double shift, double noise) {
    std::vector<double> v(params.feature_dim);
    for (double& x : v) x = noise * standard_normal(rng);
    v[0] += shift;
    normalize_in_place(v);
    return v;
  };

  for (std::size_t u = 0; u < n_users; ++u) {
    const int c = u < params.users_per_community ? 0 : 1;
    out.community.push_back(c);
    UserRecord rec{"u" + std::to_string(u), "synthetic user " + std::to_string(u), std::nullopt, {}};
    if (u % 3 == 0) rec.location = "Springfield";
    d.users.push_back(rec);
    d.labels.push_back({rec.id, c == 1 ? StanceLabel::Positive : StanceLabel::Negative, std::nullopt, std::nullopt});
    d.features[user_key(rec.id)] = feature((c == 1 ? 1.0 : -1.0) * params.user_mu, params.user_noise);
  }

  std::array<std::vector<std::size_t>, 2> pool;  // authored tweet positions per community
  for (std::size_t u = 0; u < n_users; ++u) {
    const int c = out.community[u];
    for (std::size_t k = 0; k < params.tweets_per_user; ++k) {
      const std::size_t pos = d.tweets.size();
      TweetRecord t{"t" + std::to_string(pos), d.users[u].id, "synthetic tweet " + std::to_string(pos), {}, std::nullopt};
      if (uniform01(rng) < params.hashtag_rate) {
        const char* tag = tags[static_cast<std::size_t>(c)][uniform_index(rng, 2)];
        t.hashtags.push_back(tag);
        t.text += std::string(" #") + tag;
      }
      d.features[tweet_key(t.id)] = feature((c == 1 ? 1.0 : -1.0) * params.mu, params.noise);
      d.tweets.push_back(std::move(t));
      pool[static_cast<std::size_t>(c)].push_back(pos);
    }
  }

  std::size_t next_retweet = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    const int c = out.community[u];
    for (std::size_t k = 0; k < params.retweets_per_user; ++k) {
      const bool inside = uniform01(rng) < params.p_in;
      const auto& candidates = pool[static_cast<std::size_t>(inside ? c : 1 - c)];
      // Own tweets are excluded from the in-community pool.
      const std::size_t own = inside ? params.tweets_per_user : 0;
      if (candidates.size() <= own) {
        throw ConfigError(std::string("synthetic generator: empty ") + (inside ? "within" : "cross") +
                          "-community retweet pool");
      }
      std::size_t pick = uniform_index(rng, candidates.size() - own);
      if (inside) {
        const std::size_t first_own = (u - (c == 1 ? params.users_per_community : 0)) * params.tweets_per_user;
        if (pick >= first_own) pick += own;
      }
      const TweetRecord original = d.tweets[candidates[pick]];
      d.tweets.push_back({"r" + std::to_string(next_retweet++), d.users[u].id, original.text, original.hashtags,
                          original.id});
    }
  }
  return out;
}

// --- JSONL serialization ----------------------------------------------------

namespace detail {

inline std::string id_field(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw DataError("line " + std::to_string(line) + ": missing '" + key + "'");
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw DataError("line " + std::to_string(line) + ": '" + key + "' must be a string or integer id");
}

template <class Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.filename().string() + " line " + std::to_string(number) + ": malformed JSON");
    }
    if (!j.is_object()) throw DataError(path.filename().string() + " line " + std::to_string(number) + ": not an object");
    try {
      fn(j, number);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.filename().string() + " line " + std::to_string(number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + ": " + e.what());
    }
  }
}

inline void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace detail

inline EdgeKind parse_edge_kind(const std::string& s) {
  if (s == "post") return EdgeKind::Post;
  if (s == "retweet") return EdgeKind::Retweet;
  throw DataError("unknown interaction kind '" + s + "'");
}

inline nlohmann::json to_json(const UserRecord& u) {
  nlohmann::json j = {{"id", u.id}, {"profile", u.profile}};
  if (u.location) j["location"] = *u.location;
  if (!u.fields.empty()) j["fields"] = u.fields;
  return j;
}

inline nlohmann::json to_json(const TweetRecord& t) {
  nlohmann::json j = {{"id", t.id}, {"author_id", t.author_id}, {"text", t.text}, {"hashtags", t.hashtags}};
  if (t.retweet_of) j["retweet_of"] = *t.retweet_of;
  return j;
}

inline nlohmann::json to_json(const InteractionRecord& r) {
  return {{"user_id", r.user_id}, {"tweet_id", r.tweet_id}, {"kind", to_string(r.kind)}};
}

inline nlohmann::json to_json(const LabelRecord& r) {
  nlohmann::json j = {{"user_id", r.user_id}, {"label", to_int(r.label)}};
  if (r.ratio) j["f_u"] = *r.ratio;
  if (r.labeled_tweet_count) j["labeled_tweet_count"] = *r.labeled_tweet_count;
  return j;
}

inline std::vector<LabelRecord> read_labels(const std::filesystem::path& path) {
  std::vector<LabelRecord> out;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
    LabelRecord r;
    r.user_id = detail::id_field(j, "user_id", line);
    if (!seen.insert(r.user_id).second) throw DataError("line " + std::to_string(line) + ": duplicate user label");
    r.label = stance_from_int(j.at("label").get<long>());
    if (j.contains("f_u") && !j["f_u"].is_null()) r.ratio = j["f_u"].get<double>();
    if (j.contains("labeled_tweet_count")) r.labeled_tweet_count = j["labeled_tweet_count"].get<std::size_t>();
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<LabelRecord>& labels) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : labels) rows.push_back(to_json(r));
  detail::write_lines(path, rows);
}

inline std::map<std::string, std::vector<double>> read_features(const std::filesystem::path& path) {
  std::map<std::string, std::vector<double>> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
    const std::string node = j.at("node").get<std::string>();
    if (node.size() < 3 || (node.rfind("u:", 0) != 0 && node.rfind("t:", 0) != 0)) {
      throw DataError("line " + std::to_string(line) + ": node key must look like u:<id> or t:<id>");
    }
    if (!out.emplace(node, j.at("vec").get<std::vector<double>>()).second) {
      throw DataError("line " + std::to_string(line) + ": duplicate feature vector for " + node);
    }
  });
  return out;
}

inline void write_features(const std::filesystem::path& path, const std::map<std::string, std::vector<double>>& f) {
  std::vector<nlohmann::json> rows;
  for (const auto& [node, vec] : f) rows.push_back({{"node", node}, {"vec", vec}});
  detail::write_lines(path, rows);
}

/// Checks id uniqueness and references between records.
inline void validate_dataset(const Dataset& d) {
  std::set<std::string> users, tweets;
  for (const auto& u : d.users)
    if (!users.insert(u.id).second) throw DataError("duplicate user id '" + u.id + "'");
  for (const auto& t : d.tweets)
    if (!tweets.insert(t.id).second) throw DataError("duplicate tweet id '" + t.id + "'");
  for (const auto& t : d.tweets) {
    if (!users.contains(t.author_id)) throw DataError("tweet '" + t.id + "' has unknown author '" + t.author_id + "'");
    if (t.retweet_of && !tweets.contains(*t.retweet_of)) {
      throw DataError("tweet '" + t.id + "' retweets unknown tweet '" + *t.retweet_of + "'");
    }
  }
  for (const auto& l : d.labels)
    if (!users.contains(l.user_id)) throw DataError("label for unknown user '" + l.user_id + "'");
}

struct DatasetPaths {
  std::filesystem::path dir;
  std::filesystem::path users() const { return dir / "users.jsonl"; }
  std::filesystem::path tweets() const { return dir / "tweets.jsonl"; }
  std::filesystem::path interactions() const { return dir / "interactions.jsonl"; }
  std::filesystem::path labels() const { return dir / "labels.jsonl"; }
  std::filesystem::path features() const { return dir / "features.jsonl"; }
};

inline Dataset read_dataset(const DatasetPaths& paths) {
  Dataset d;
  std::set<std::string> seen;
  detail::for_each_jsonl(paths.users(), [&](const nlohmann::json& j, std::size_t line) {
    UserRecord u;
    u.id = detail::id_field(j, "id", line);
    if (!seen.insert(u.id).second) throw DataError("line " + std::to_string(line) + ": duplicate user id '" + u.id + "'");
    u.profile = j.value("profile", std::string());
    if (j.contains("location") && !j["location"].is_null()) u.location = j["location"].get<std::string>();
    if (j.contains("fields")) u.fields = j["fields"].get<std::map<std::string, std::string>>();
    d.users.push_back(std::move(u));
  });
  seen.clear();
  detail::for_each_jsonl(paths.tweets(), [&](const nlohmann::json& j, std::size_t line) {
    TweetRecord t;
    t.id = detail::id_field(j, "id", line);
    if (!seen.insert(t.id).second) throw DataError("line " + std::to_string(line) + ": duplicate tweet id '" + t.id + "'");
    t.author_id = detail::id_field(j, "author_id", line);
    t.text = j.value("text", std::string());
    if (j.contains("hashtags")) t.hashtags = j["hashtags"].get<std::vector<std::string>>();
    if (j.contains("retweet_of") && !j["retweet_of"].is_null()) t.retweet_of = detail::id_field(j, "retweet_of", line);
    d.tweets.push_back(std::move(t));
  });
  if (std::filesystem::exists(paths.interactions())) {
    std::vector<InteractionRecord> rs;
    detail::for_each_jsonl(paths.interactions(), [&](const nlohmann::json& j, std::size_t line) {
      rs.push_back({detail::id_field(j, "user_id", line), detail::id_field(j, "tweet_id", line),
                    parse_edge_kind(j.at("kind").get<std::string>())});
    });
    d.interactions = std::move(rs);
  }
  if (std::filesystem::exists(paths.labels())) d.labels = read_labels(paths.labels());
  if (std::filesystem::exists(paths.features())) d.features = read_features(paths.features());
  validate_dataset(d);
  return d;
}

inline void write_dataset(const Dataset& d, const DatasetPaths& paths) {
  validate_dataset(d);
  std::filesystem::create_directories(paths.dir);
  std::vector<nlohmann::json> rows;
  for (const auto& u : d.users) rows.push_back(to_json(u));
  detail::write_lines(paths.users(), rows);
  rows.clear();
  for (const auto& t : d.tweets) rows.push_back(to_json(t));
  detail::write_lines(paths.tweets(), rows);
  if (d.interactions) {
    rows.clear();
    for (const auto& r : *d.interactions) rows.push_back(to_json(r));
    detail::write_lines(paths.interactions(), rows);
  } else {
    std::filesystem::remove(paths.interactions());
  }
  if (!d.labels.empty()) {
    write_labels(paths.labels(), d.labels);
  } else {
    std::filesystem::remove(paths.labels());
  }
  if (!d.features.empty()) {
    write_features(paths.features(), d.features);
  } else {
    std::filesystem::remove(paths.features());
  }
}

inline HashtagLexicon read_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return HashtagLexicon::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.filename().string() + ": " + e.what());
  }
}

}  // namespace doubleh
