#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nrt/errors.hpp"
#include "nrt/rng.hpp"

namespace nrt {

// ---------------------------------------------------------------------------
// Raw records straight off the JSON-lines file, before any encoding.

struct RawRecord {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::string review_text;
  std::string tips_text;  // empty when the source had none; see extract_tips
};

enum class Schema { kAmazon, kYelp, kGeneric };

inline std::optional<Schema> parse_schema(const std::string& name) {
  if (name == "amazon") return Schema::kAmazon;
  if (name == "yelp") return Schema::kYelp;
  if (name == "generic") return Schema::kGeneric;
  return std::nullopt;
}

struct ParseStats {
  std::size_t total_lines = 0;
  std::size_t malformed = 0;
  std::size_t dropped_empty_text = 0;  // neither tips nor review present
};

struct ParsedFile {
  std::vector<RawRecord> records;
  ParseStats stats;
};

namespace detail {

struct SchemaFields {
  const char* user;
  const char* item;
  const char* rating;
  const char* review;
  const char* tips;
};

inline SchemaFields fields_for(Schema schema) {
  switch (schema) {
    case Schema::kAmazon:
      return {"reviewerID", "asin", "overall", "reviewText", "summary"};
    case Schema::kYelp:
      return {"user_id", "business_id", "stars", "text", "tips"};
    case Schema::kGeneric:
    default:
      return {"user", "item", "rating", "review", "tips"};
  }
}

}  // namespace detail

// Parses one JSON line into a record. Returns nullopt for malformed input:
// bad JSON, missing/empty user or item, missing or out-of-range rating.
inline std::optional<RawRecord> parse_record_line(const std::string& line, Schema schema) {
  const auto fields = detail::fields_for(schema);
  nlohmann::json doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;

  RawRecord rec;
  const auto user_it = doc.find(fields.user);
  const auto item_it = doc.find(fields.item);
  if (user_it == doc.end() || !user_it->is_string() || user_it->get<std::string>().empty())
    return std::nullopt;
  if (item_it == doc.end() || !item_it->is_string() || item_it->get<std::string>().empty())
    return std::nullopt;
  rec.user = user_it->get<std::string>();
  rec.item = item_it->get<std::string>();

  const auto rating_it = doc.find(fields.rating);
  if (rating_it == doc.end() || !rating_it->is_number()) return std::nullopt;
  rec.rating = rating_it->get<double>();
  if (!(rec.rating >= 0.0 && rec.rating <= 5.0)) return std::nullopt;

  if (const auto it = doc.find(fields.review); it != doc.end() && it->is_string())
    rec.review_text = it->get<std::string>();
  if (const auto it = doc.find(fields.tips); it != doc.end() && it->is_string())
    rec.tips_text = it->get<std::string>();
  return rec;
}

// First sentence of a text: everything up to the first `.`/`!`/`?` that is
// followed by whitespace or the end of the text (terminator included).
inline std::string first_sentence(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) {
        return text.substr(0, i + 1);
      }
    }
  }
  return text;
}

inline bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

// Tips resolution: keep the provided tips when present, otherwise fall back
// to the first sentence of the review. Returns nullopt when both are empty
// (the record carries no usable text and is dropped).
inline std::optional<std::string> extract_tips(const RawRecord& rec) {
  if (!is_blank(rec.tips_text)) return rec.tips_text;
  if (!is_blank(rec.review_text)) return first_sentence(rec.review_text);
  return std::nullopt;
}

// Reads a whole JSON-lines file. Malformed lines are counted and skipped;
// more than 10% malformed is treated as a broken corpus. Records without any
// text are dropped here (counted separately) so downstream always has tips.
inline ParsedFile parse_records(const std::string& path, Schema schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  ParsedFile out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    ++out.stats.total_lines;
    auto rec = parse_record_line(line, schema);
    if (!rec) {
      ++out.stats.malformed;
      continue;
    }
    auto tips = extract_tips(*rec);
    if (!tips) {
      ++out.stats.dropped_empty_text;
      continue;
    }
    rec->tips_text = *tips;
    out.records.push_back(std::move(*rec));
  }
  if (in.bad()) throw IoError("read failure on corpus file: " + path);
  if (out.stats.total_lines > 0 &&
      out.stats.malformed * 10 > out.stats.total_lines) {
    throw CorpusError("corpus " + path + ": " + std::to_string(out.stats.malformed) + " of " +
                      std::to_string(out.stats.total_lines) + " lines are malformed (>10%)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenization: lowercase, strip punctuation except intra-word apostrophes,
// split on whitespace. Bytes >= 0x80 are kept as word characters so UTF-8
// words survive intact.

inline std::vector<std::string> tokenize(const std::string& text) {
  std::string cleaned(text.size(), ' ');
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c) || c >= 0x80) {
      cleaned[i] = static_cast<char>(std::tolower(c));
    } else if (c == '\'') {
      const bool left = i > 0 && (std::isalnum(static_cast<unsigned char>(text[i - 1])) ||
                                  static_cast<unsigned char>(text[i - 1]) >= 0x80);
      const bool right = i + 1 < text.size() &&
                         (std::isalnum(static_cast<unsigned char>(text[i + 1])) ||
                          static_cast<unsigned char>(text[i + 1]) >= 0x80);
      if (left && right) cleaned[i] = '\'';
    }
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t start = i;
    while (i < cleaned.size() && cleaned[i] != ' ') ++i;
    if (i > start) tokens.push_back(cleaned.substr(start, i - start));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary with reserved UNK/EOS slots and a term-frequency floor.

class Vocabulary {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kEosId = 1;
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kEosToken = "</s>";

  Vocabulary() : tokens_{kUnkToken, kEosToken} {}

  // Tokens must be unique, already filtered, in a deterministic order.
  explicit Vocabulary(std::vector<std::string> retained, std::size_t min_tf = 1)
      : Vocabulary() {
    min_tf_ = min_tf;
    for (auto& tok : retained) {
      to_id_.emplace(tok, static_cast<int>(tokens_.size()));
      tokens_.push_back(std::move(tok));
    }
  }

  int id(const std::string& token) const {
    const auto it = to_id_.find(token);
    return it == to_id_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw IndexError("vocabulary: token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_tf() const { return min_tf_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // FNV-1a over the token list; embedded in archives and checkpoints so a
  // checkpoint can refuse a corpus it was not trained on.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](const std::string& s) {
      for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    };
    for (const auto& t : tokens_) mix(t);
    return h;
  }

 private:
  std::unordered_map<std::string, int> to_id_;
  std::vector<std::string> tokens_;
  std::size_t min_tf_ = 1;
};

// Term frequencies over reviews and tips of the training records combined;
// tokens at or above min_tf are retained in first-appearance order.
inline Vocabulary build_vocab(std::span<const RawRecord> train_records, std::size_t min_tf) {
  if (train_records.empty()) throw CorpusError("cannot build a vocabulary from an empty training set");
  std::unordered_map<std::string, std::size_t> tf;
  std::vector<std::string> order;
  const auto count = [&](const std::string& text) {
    for (auto& tok : tokenize(text)) {
      auto [it, inserted] = tf.emplace(std::move(tok), 0);
      if (inserted) order.push_back(it->first);
      ++it->second;
    }
  };
  for (const auto& rec : train_records) {
    count(rec.review_text);
    count(rec.tips_text);
  }
  std::vector<std::string> retained;
  for (const auto& tok : order) {
    if (tf[tok] >= min_tf) retained.push_back(tok);
  }
  return Vocabulary(std::move(retained), min_tf);
}

// ---------------------------------------------------------------------------
// Encoded interactions and the split corpus.

struct Interaction {
  int user = -1;
  int item = -1;
  double rating = 0.0;
  std::vector<int> review_tokens;
  std::vector<int> tips_tokens;                // always ends with EOS
  std::vector<std::pair<int, std::int64_t>> review_bow;  // sorted by token id
  std::string tips_text;                       // raw text kept for evaluation
};

struct SplitCorpus {
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::size_t dropped_cold = 0;  // valid/test records with unseen user or item
};

struct RawSplit {
  std::vector<RawRecord> train;
  std::vector<RawRecord> valid;
  std::vector<RawRecord> test;
};

// Deterministic shuffled 80/10/10 split.
inline RawSplit split_records(std::vector<RawRecord> records, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 17));
  rng.shuffle(records);
  const std::size_t n = records.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n * 9 / 10 - n_train;
  RawSplit out;
  out.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train),
                   records.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), records.end());
  return out;
}

struct PreparedCorpus {
  Vocabulary vocab;
  SplitCorpus splits;
  std::vector<std::string> user_names;  // dense id -> original id string
  std::vector<std::string> item_names;
  ParseStats parse_stats;
};

namespace detail {

inline Interaction encode_interaction(const RawRecord& rec, const Vocabulary& vocab,
                                      int user, int item) {
  Interaction out;
  out.user = user;
  out.item = item;
  out.rating = rec.rating;
  out.tips_text = rec.tips_text;
  for (const auto& tok : tokenize(rec.review_text))
    out.review_tokens.push_back(vocab.id(tok));
  for (const auto& tok : tokenize(rec.tips_text))
    out.tips_tokens.push_back(vocab.id(tok));
  out.tips_tokens.push_back(Vocabulary::kEosId);
  std::map<int, std::int64_t> counts;
  for (const int id : out.review_tokens) ++counts[id];
  out.review_bow.assign(counts.begin(), counts.end());
  return out;
}

}  // namespace detail

// Assigns dense user/item ids from training occurrences, encodes every
// record against the vocabulary, and drops valid/test records whose user or
// item never appears in training (counted in dropped_cold).
inline PreparedCorpus assemble(const RawSplit& split, Vocabulary vocab) {
  PreparedCorpus out;
  out.vocab = std::move(vocab);
  std::unordered_map<std::string, int> user_ids;
  std::unordered_map<std::string, int> item_ids;
  for (const auto& rec : split.train) {
    if (user_ids.emplace(rec.user, static_cast<int>(out.user_names.size())).second)
      out.user_names.push_back(rec.user);
    if (item_ids.emplace(rec.item, static_cast<int>(out.item_names.size())).second)
      out.item_names.push_back(rec.item);
    out.splits.train.push_back(detail::encode_interaction(
        rec, out.vocab, user_ids[rec.user], item_ids[rec.item]));
  }
  const auto encode_warm = [&](const std::vector<RawRecord>& recs,
                               std::vector<Interaction>& dst) {
    for (const auto& rec : recs) {
      const auto uit = user_ids.find(rec.user);
      const auto iit = item_ids.find(rec.item);
      if (uit == user_ids.end() || iit == item_ids.end()) {
        ++out.splits.dropped_cold;
        continue;
      }
      dst.push_back(detail::encode_interaction(rec, out.vocab, uit->second, iit->second));
    }
  };
  encode_warm(split.valid, out.splits.valid);
  encode_warm(split.test, out.splits.test);
  out.splits.user_count = out.user_names.size();
  out.splits.item_count = out.item_names.size();
  return out;
}

// Whole ingestion pipeline for one file.
inline PreparedCorpus prepare_corpus(const std::string& path, Schema schema,
                                     std::size_t min_tf, std::uint64_t seed) {
  ParsedFile parsed = parse_records(path, schema);
  if (parsed.records.empty()) throw CorpusError("corpus " + path + " contains no usable records");
  RawSplit split = split_records(std::move(parsed.records), seed);
  if (split.train.empty()) throw CorpusError("corpus " + path + ": training split is empty");
  Vocabulary vocab = build_vocab(split.train, min_tf);
  PreparedCorpus out = assemble(split, std::move(vocab));
  out.parse_stats = parsed.stats;
  return out;
}

// ---------------------------------------------------------------------------
// Mini-batching. Tips are right-padded to the batch maximum; padded
// positions hold EOS as a harmless gather index and are masked out of the
// loss. Order reshuffles every epoch from (seed, epoch).

struct Batch {
  std::vector<int> users;
  std::vector<int> items;
  std::vector<double> ratings;
  std::vector<const std::vector<std::pair<int, std::int64_t>>*> bows;
  std::size_t tips_steps = 0;       // padded length T
  std::vector<int> tips_tokens;     // T x B, index [t * B + b]
  std::vector<std::uint8_t> tips_mask;  // same layout, 1 = real position

  std::size_t size() const { return users.size(); }
  int tips_at(std::size_t t, std::size_t b) const { return tips_tokens[t * size() + b]; }
  bool live_at(std::size_t t, std::size_t b) const { return tips_mask[t * size() + b] != 0; }
};

inline Batch make_batch(std::span<const Interaction* const> rows) {
  Batch batch;
  const std::size_t b_sz = rows.size();
  for (const Interaction* it : rows) {
    batch.users.push_back(it->user);
    batch.items.push_back(it->item);
    batch.ratings.push_back(it->rating);
    batch.bows.push_back(&it->review_bow);
    batch.tips_steps = std::max(batch.tips_steps, it->tips_tokens.size());
  }
  batch.tips_tokens.assign(batch.tips_steps * b_sz, Vocabulary::kEosId);
  batch.tips_mask.assign(batch.tips_steps * b_sz, 0);
  for (std::size_t b = 0; b < b_sz; ++b) {
    const auto& tips = rows[b]->tips_tokens;
    for (std::size_t t = 0; t < tips.size(); ++t) {
      batch.tips_tokens[t * b_sz + b] = tips[t];
      batch.tips_mask[t * b_sz + b] = 1;
    }
  }
  return batch;
}

class Batcher {
 public:
  Batcher(const std::vector<Interaction>& part, std::size_t batch_size, std::uint64_t seed)
      : part_(&part), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ == 0) throw UsageError("batch size must be >= 1");
  }

  // Batches for one epoch, in the epoch's shuffled order.
  std::vector<Batch> epoch(std::uint64_t epoch_index) const {
    std::vector<std::size_t> order(part_->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed_, epoch_index + 1));
    rng.shuffle(order);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
      const std::size_t end = std::min(order.size(), start + batch_size_);
      std::vector<const Interaction*> rows;
      rows.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) rows.push_back(&(*part_)[order[i]]);
      batches.push_back(make_batch(rows));
    }
    return batches;
  }

 private:
  const std::vector<Interaction>* part_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace nrt
