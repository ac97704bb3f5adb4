#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nrt/corpus.hpp"
#include "nrt/hypers.hpp"
#include "nrt/model.hpp"
#include "nrt/train.hpp"

namespace nrt {

// ---------------------------------------------------------------------------
// Container layout shared by prepared-corpus archives and model checkpoints:
//
//   8 bytes magic "NRTBOX1\n"
//   8 bytes little-endian manifest length M
//   M bytes manifest JSON
//   raw payload (array bytes at the offsets the manifest declares)
//
// Arrays are 64-bit little-endian, IEEE-754 doubles ("f64le") or two's
// complement integers ("i64le"). The manifest format_version guards
// compatibility.

inline constexpr char kContainerMagic[8] = {'N', 'R', 'T', 'B', 'O', 'X', '1', '\n'};
inline constexpr const char* kFormatVersion = "nrt-container-1";

struct ArrayView {
  std::string name;
  std::string dtype;  // "f64le" or "i64le"
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
};

class ContainerWriter {
 public:
  explicit ContainerWriter(std::string kind) { manifest_["kind"] = std::move(kind); }

  nlohmann::json& manifest() { return manifest_; }

  void add_f64(const std::string& name, std::size_t rows, std::size_t cols,
               std::span<const double> values) {
    add_array(name, "f64le", rows, cols, values.data(), values.size() * sizeof(double));
  }

  void add_matrix(const std::string& name, const Matrix& m) {
    add_f64(name, m.rows, m.cols, m.data);
  }

  void add_i64(const std::string& name, std::span<const std::int64_t> values) {
    add_array(name, "i64le", 1, values.size(), values.data(),
              values.size() * sizeof(std::int64_t));
  }

  void write(const std::string& path) {
    manifest_["format_version"] = kFormatVersion;
    const std::string manifest_bytes = manifest_.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kContainerMagic, sizeof(kContainerMagic));
    const std::uint64_t len = manifest_bytes.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    out.write(lenbuf, 8);
    out.write(manifest_bytes.data(), static_cast<std::streamsize>(manifest_bytes.size()));
    out.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
    if (!out) throw IoError("write failure: " + path);
  }

 private:
  void add_array(const std::string& name, const char* dtype, std::size_t rows,
                 std::size_t cols, const void* bytes, std::size_t length) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = dtype;
    entry["rows"] = rows;
    entry["cols"] = cols;
    entry["offset"] = payload_.size();
    entry["length"] = length;
    manifest_["arrays"].push_back(entry);
    const char* p = static_cast<const char*>(bytes);
    payload_.insert(payload_.end(), p, p + length);
  }

  nlohmann::json manifest_;
  std::string payload_;
};

class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kContainerMagic, 8) != 0)
      throw CheckpointError(path + ": not a container file (bad magic)");
    char lenbuf[8];
    in.read(lenbuf, 8);
    if (in.gcount() != 8) throw CheckpointError(path + ": truncated header");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
      len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
    std::string manifest_bytes(len, '\0');
    in.read(manifest_bytes.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len)
      throw CheckpointError(path + ": truncated manifest");
    manifest_ = nlohmann::json::parse(manifest_bytes, nullptr, /*allow_exceptions=*/false);
    if (manifest_.is_discarded())
      throw CheckpointError(path + ": manifest is not valid JSON");
    if (manifest_.value("format_version", "") != kFormatVersion)
      throw CheckpointError(path + ": unsupported format_version '" +
                            manifest_.value("format_version", "<missing>") + "'");
    payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    path_ = path;
  }

  const nlohmann::json& manifest() const { return manifest_; }
  std::string kind() const { return manifest_.value("kind", ""); }

  Matrix read_matrix(const std::string& name) const {
    const nlohmann::json& entry = find_entry(name, "f64le");
    Matrix m(entry["rows"].get<std::size_t>(), entry["cols"].get<std::size_t>());
    copy_bytes(entry, m.data.data(), m.size() * sizeof(double), name);
    return m;
  }

  std::vector<std::int64_t> read_i64(const std::string& name) const {
    const nlohmann::json& entry = find_entry(name, "i64le");
    std::vector<std::int64_t> out(entry["cols"].get<std::size_t>());
    copy_bytes(entry, out.data(), out.size() * sizeof(std::int64_t), name);
    return out;
  }

  bool has_array(const std::string& name) const {
    if (!manifest_.contains("arrays")) return false;
    for (const auto& entry : manifest_["arrays"])
      if (entry.value("name", "") == name) return true;
    return false;
  }

 private:
  const nlohmann::json& find_entry(const std::string& name, const char* dtype) const {
    if (manifest_.contains("arrays")) {
      for (const auto& entry : manifest_["arrays"]) {
        if (entry.value("name", "") == name) {
          if (entry.value("dtype", "") != dtype)
            throw CheckpointError(path_ + ": array " + name + " has dtype " +
                                  entry.value("dtype", "?") + ", expected " + dtype);
          return entry;
        }
      }
    }
    throw CheckpointError(path_ + ": missing array " + name);
  }

  void copy_bytes(const nlohmann::json& entry, void* dst, std::size_t expected,
                  const std::string& name) const {
    const std::size_t offset = entry["offset"].get<std::size_t>();
    const std::size_t length = entry["length"].get<std::size_t>();
    if (length != expected)
      throw CheckpointError(path_ + ": array " + name + " has " + std::to_string(length) +
                            " bytes, expected " + std::to_string(expected));
    if (offset + length > payload_.size())
      throw CheckpointError(path_ + ": truncated payload for array " + name);
    std::memcpy(dst, payload_.data() + offset, length);
  }

  nlohmann::json manifest_;
  std::string payload_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Hypers <-> JSON, reused by checkpoints and config echoes.

inline nlohmann::json hypers_to_json(const Hypers& h) {
  nlohmann::json j;
  j["user_dim"] = h.user_dim;
  j["item_dim"] = h.item_dim;
  j["word_dim"] = h.word_dim;
  j["hidden_dim"] = h.hidden_dim;
  j["rating_layers"] = h.rating_layers;
  j["review_layers"] = h.review_layers;
  j["gru_layers"] = h.gru_layers;
  j["rating_levels"] = h.rating_levels;
  j["lambda_rating"] = h.lambda_rating;
  j["lambda_review"] = h.lambda_review;
  j["lambda_tips"] = h.lambda_tips;
  j["lambda_reg"] = h.lambda_reg;
  j["batch_size"] = h.batch_size;
  j["init_range"] = h.init_range;
  j["beam_width"] = h.beam_width;
  j["max_tip_len"] = h.max_tip_len;
  j["ln_n"] = h.ln_n;
  j["ln_alpha"] = h.ln_alpha;
  j["adadelta_rho"] = h.adadelta_rho;
  j["adadelta_eps"] = h.adadelta_eps;
  return j;
}

inline Hypers hypers_from_json(const nlohmann::json& j) {
  Hypers h;
  h.user_dim = j.at("user_dim").get<std::size_t>();
  h.item_dim = j.at("item_dim").get<std::size_t>();
  h.word_dim = j.at("word_dim").get<std::size_t>();
  h.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  h.rating_layers = j.at("rating_layers").get<std::size_t>();
  h.review_layers = j.at("review_layers").get<std::size_t>();
  h.gru_layers = j.at("gru_layers").get<std::size_t>();
  h.rating_levels = j.at("rating_levels").get<std::size_t>();
  h.lambda_rating = j.at("lambda_rating").get<double>();
  h.lambda_review = j.at("lambda_review").get<double>();
  h.lambda_tips = j.at("lambda_tips").get<double>();
  h.lambda_reg = j.at("lambda_reg").get<double>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  h.init_range = j.at("init_range").get<double>();
  h.beam_width = j.at("beam_width").get<std::size_t>();
  h.max_tip_len = j.at("max_tip_len").get<std::size_t>();
  h.ln_n = j.at("ln_n").get<double>();
  h.ln_alpha = j.at("ln_alpha").get<double>();
  h.adadelta_rho = j.at("adadelta_rho").get<double>();
  h.adadelta_eps = j.at("adadelta_eps").get<double>();
  return h;
}

// ---------------------------------------------------------------------------
// Prepared-corpus archive.

namespace detail {

inline void add_split(ContainerWriter& writer, const std::string& prefix,
                      const std::vector<Interaction>& part) {
  std::vector<std::int64_t> users, items, rev_tok, rev_off, tip_tok, tip_off, bow_tok,
      bow_cnt, bow_off;
  std::vector<double> ratings;
  rev_off.push_back(0);
  tip_off.push_back(0);
  bow_off.push_back(0);
  std::vector<std::string> tips_text;
  for (const Interaction& it : part) {
    users.push_back(it.user);
    items.push_back(it.item);
    ratings.push_back(it.rating);
    for (int t : it.review_tokens) rev_tok.push_back(t);
    rev_off.push_back(static_cast<std::int64_t>(rev_tok.size()));
    for (int t : it.tips_tokens) tip_tok.push_back(t);
    tip_off.push_back(static_cast<std::int64_t>(tip_tok.size()));
    for (const auto& [tok, count] : it.review_bow) {
      bow_tok.push_back(tok);
      bow_cnt.push_back(count);
    }
    bow_off.push_back(static_cast<std::int64_t>(bow_tok.size()));
    tips_text.push_back(it.tips_text);
  }
  writer.add_i64(prefix + ".user", users);
  writer.add_i64(prefix + ".item", items);
  writer.add_f64(prefix + ".rating", 1, ratings.size(), ratings);
  writer.add_i64(prefix + ".review_tok", rev_tok);
  writer.add_i64(prefix + ".review_off", rev_off);
  writer.add_i64(prefix + ".tips_tok", tip_tok);
  writer.add_i64(prefix + ".tips_off", tip_off);
  writer.add_i64(prefix + ".bow_tok", bow_tok);
  writer.add_i64(prefix + ".bow_cnt", bow_cnt);
  writer.add_i64(prefix + ".bow_off", bow_off);
  writer.manifest()["tips_text"][prefix] = tips_text;
}

inline std::vector<Interaction> read_split(const ContainerReader& reader,
                                           const std::string& prefix) {
  const auto users = reader.read_i64(prefix + ".user");
  const auto items = reader.read_i64(prefix + ".item");
  const Matrix ratings = reader.read_matrix(prefix + ".rating");
  const auto rev_tok = reader.read_i64(prefix + ".review_tok");
  const auto rev_off = reader.read_i64(prefix + ".review_off");
  const auto tip_tok = reader.read_i64(prefix + ".tips_tok");
  const auto tip_off = reader.read_i64(prefix + ".tips_off");
  const auto bow_tok = reader.read_i64(prefix + ".bow_tok");
  const auto bow_cnt = reader.read_i64(prefix + ".bow_cnt");
  const auto bow_off = reader.read_i64(prefix + ".bow_off");
  const auto texts = reader.manifest().at("tips_text").at(prefix);
  if (users.size() != items.size() || users.size() != ratings.cols ||
      users.size() + 1 != rev_off.size() || users.size() + 1 != tip_off.size() ||
      users.size() + 1 != bow_off.size() || texts.size() != users.size()) {
    throw CheckpointError("corpus archive: inconsistent sizes in split " + prefix);
  }
  std::vector<Interaction> out(users.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Interaction& it = out[i];
    it.user = static_cast<int>(users[i]);
    it.item = static_cast<int>(items[i]);
    it.rating = ratings(0, i);
    for (std::int64_t k = rev_off[i]; k < rev_off[i + 1]; ++k)
      it.review_tokens.push_back(static_cast<int>(rev_tok[static_cast<std::size_t>(k)]));
    for (std::int64_t k = tip_off[i]; k < tip_off[i + 1]; ++k)
      it.tips_tokens.push_back(static_cast<int>(tip_tok[static_cast<std::size_t>(k)]));
    for (std::int64_t k = bow_off[i]; k < bow_off[i + 1]; ++k)
      it.review_bow.emplace_back(static_cast<int>(bow_tok[static_cast<std::size_t>(k)]),
                                 bow_cnt[static_cast<std::size_t>(k)]);
    it.tips_text = texts[i].get<std::string>();
  }
  return out;
}

}  // namespace detail

inline void save_corpus(const PreparedCorpus& corpus, const std::string& path) {
  ContainerWriter writer("corpus");
  auto& manifest = writer.manifest();
  // Reserved tokens are implicit; only the retained tail is stored.
  manifest["vocab"]["tokens"] = std::vector<std::string>(
      corpus.vocab.tokens().begin() + 2, corpus.vocab.tokens().end());
  manifest["vocab"]["min_tf"] = corpus.vocab.min_tf();
  manifest["vocab_hash"] = corpus.vocab.hash();
  manifest["users"] = corpus.user_names;
  manifest["items"] = corpus.item_names;
  manifest["dropped_cold"] = corpus.splits.dropped_cold;
  manifest["parse"]["total_lines"] = corpus.parse_stats.total_lines;
  manifest["parse"]["malformed"] = corpus.parse_stats.malformed;
  manifest["parse"]["dropped_empty_text"] = corpus.parse_stats.dropped_empty_text;
  detail::add_split(writer, "train", corpus.splits.train);
  detail::add_split(writer, "valid", corpus.splits.valid);
  detail::add_split(writer, "test", corpus.splits.test);
  writer.write(path);
}

inline PreparedCorpus load_corpus(const std::string& path) {
  ContainerReader reader(path);
  if (reader.kind() != "corpus")
    throw CheckpointError(path + ": container kind '" + reader.kind() + "', expected corpus");
  const auto& manifest = reader.manifest();
  PreparedCorpus out;
  out.vocab = Vocabulary(manifest.at("vocab").at("tokens").get<std::vector<std::string>>(),
                         manifest.at("vocab").at("min_tf").get<std::size_t>());
  if (manifest.at("vocab_hash").get<std::uint64_t>() != out.vocab.hash())
    throw CheckpointError(path + ": vocab_hash does not match the stored vocabulary");
  out.user_names = manifest.at("users").get<std::vector<std::string>>();
  out.item_names = manifest.at("items").get<std::vector<std::string>>();
  out.splits.train = detail::read_split(reader, "train");
  out.splits.valid = detail::read_split(reader, "valid");
  out.splits.test = detail::read_split(reader, "test");
  out.splits.user_count = out.user_names.size();
  out.splits.item_count = out.item_names.size();
  out.splits.dropped_cold = manifest.value("dropped_cold", std::size_t{0});
  out.parse_stats.total_lines = manifest.at("parse").value("total_lines", std::size_t{0});
  out.parse_stats.malformed = manifest.at("parse").value("malformed", std::size_t{0});
  out.parse_stats.dropped_empty_text =
      manifest.at("parse").value("dropped_empty_text", std::size_t{0});
  return out;
}

// ---------------------------------------------------------------------------
// NRT checkpoints: parameter slots plus Adadelta accumulators.

inline void save_checkpoint(NrtParams& params, const AdadeltaState& state,
                            std::uint64_t vocab_hash, const std::string& path) {
  ContainerWriter writer("checkpoint");
  auto& manifest = writer.manifest();
  manifest["model_type"] = "nrt";
  manifest["hypers"] = hypers_to_json(params.hypers());
  manifest["vocab_hash"] = vocab_hash;
  manifest["num_users"] = params.num_users();
  manifest["num_items"] = params.num_items();
  manifest["vocab_size"] = params.vocab_size();
  const auto slots = params.slots();
  if (state.grad_sq.size() != slots.size())
    throw CheckpointError("optimizer state does not cover every parameter slot");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    writer.add_matrix("param." + slots[i]->name, slots[i]->value);
    writer.add_matrix("opt.grad_sq." + slots[i]->name, state.grad_sq[i]);
    writer.add_matrix("opt.delta_sq." + slots[i]->name, state.delta_sq[i]);
  }
  writer.write(path);
}

struct LoadedCheckpoint {
  NrtParams params;
  AdadeltaState state;
  std::uint64_t vocab_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  ContainerReader reader(path);
  if (reader.kind() != "checkpoint")
    throw CheckpointError(path + ": container kind '" + reader.kind() +
                          "', expected checkpoint");
  const auto& manifest = reader.manifest();
  if (manifest.value("model_type", "") != "nrt")
    throw CheckpointError(path + ": model_type '" + manifest.value("model_type", "?") +
                          "', expected nrt");
  const Hypers hypers = hypers_from_json(manifest.at("hypers"));
  LoadedCheckpoint out{
      NrtParams(hypers, manifest.at("num_users").get<std::size_t>(),
                manifest.at("num_items").get<std::size_t>(),
                manifest.at("vocab_size").get<std::size_t>()),
      AdadeltaState{},
      manifest.at("vocab_hash").get<std::uint64_t>()};
  auto slots = out.params.slots();
  out.state = AdadeltaState::for_slots(slots, hypers.adadelta_rho, hypers.adadelta_eps);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Matrix value = reader.read_matrix("param." + slots[i]->name);
    if (!value.same_shape(slots[i]->value))
      throw CheckpointError(path + ": param " + slots[i]->name + " has shape " +
                            value.shape_str() + ", expected " + slots[i]->value.shape_str());
    slots[i]->value = std::move(value);
    out.state.grad_sq[i] = reader.read_matrix("opt.grad_sq." + slots[i]->name);
    out.state.delta_sq[i] = reader.read_matrix("opt.delta_sq." + slots[i]->name);
  }
  return out;
}

}  // namespace nrt
