#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nrt/errors.hpp"
#include "nrt/hypers.hpp"

namespace nrt {

// Plain key=value run configuration. Every Hypers field is a key; unknown
// keys are rejected, missing keys keep their defaults. `#` starts a comment.
struct RunConfig {
  Hypers hypers;
  std::uint64_t seed = 1;
  std::size_t min_tf = 5;
  std::size_t patience = 5;
  std::size_t max_epochs = 30;
  std::size_t mf_factor_dim = 10;
  std::string schema = "generic";
  std::string corpus;  // optional path defaults; CLI flags take precedence
  std::string out;

  static RunConfig from_string(const std::string& text);
  static RunConfig from_file(const std::string& path);
  std::string echo() const;

 private:
  void set(const std::string& key, const std::string& value);
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: key " + key + " has non-numeric value '" + value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: key " + key + " has non-integer value '" + value + "'");
  }
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_u64;
  const auto as_size = [&]() { return static_cast<std::size_t>(parse_u64(key, value)); };
  if (key == "user_dim") hypers.user_dim = as_size();
  else if (key == "item_dim") hypers.item_dim = as_size();
  else if (key == "word_dim") hypers.word_dim = as_size();
  else if (key == "hidden_dim") hypers.hidden_dim = as_size();
  else if (key == "rating_layers") hypers.rating_layers = as_size();
  else if (key == "review_layers") hypers.review_layers = as_size();
  else if (key == "gru_layers") hypers.gru_layers = as_size();
  else if (key == "rating_levels") hypers.rating_levels = as_size();
  else if (key == "lambda_rating") hypers.lambda_rating = parse_double(key, value);
  else if (key == "lambda_review") hypers.lambda_review = parse_double(key, value);
  else if (key == "lambda_tips") hypers.lambda_tips = parse_double(key, value);
  else if (key == "lambda_reg") hypers.lambda_reg = parse_double(key, value);
  else if (key == "batch_size") hypers.batch_size = as_size();
  else if (key == "init_range") hypers.init_range = parse_double(key, value);
  else if (key == "beam_width") hypers.beam_width = as_size();
  else if (key == "max_tip_len") hypers.max_tip_len = as_size();
  else if (key == "ln_n") hypers.ln_n = parse_double(key, value);
  else if (key == "ln_alpha") hypers.ln_alpha = parse_double(key, value);
  else if (key == "adadelta_rho") hypers.adadelta_rho = parse_double(key, value);
  else if (key == "adadelta_eps") hypers.adadelta_eps = parse_double(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "min_tf") min_tf = as_size();
  else if (key == "patience") patience = as_size();
  else if (key == "max_epochs") max_epochs = as_size();
  else if (key == "mf_factor_dim") mf_factor_dim = as_size();
  else if (key == "schema") schema = value;
  else if (key == "corpus") corpus = value;
  else if (key == "out") out = value;
  else throw UsageError("config: unknown key '" + key + "'");
}

inline RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    config.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  config.hypers.validate();
  return config;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

inline std::string RunConfig::echo() const {
  std::ostringstream out_text;
  const auto emit = [&](const char* key, const auto& value) {
    out_text << key << "=" << value << "\n";
  };
  emit("user_dim", hypers.user_dim);
  emit("item_dim", hypers.item_dim);
  emit("word_dim", hypers.word_dim);
  emit("hidden_dim", hypers.hidden_dim);
  emit("rating_layers", hypers.rating_layers);
  emit("review_layers", hypers.review_layers);
  emit("gru_layers", hypers.gru_layers);
  emit("rating_levels", hypers.rating_levels);
  emit("lambda_rating", hypers.lambda_rating);
  emit("lambda_review", hypers.lambda_review);
  emit("lambda_tips", hypers.lambda_tips);
  emit("lambda_reg", hypers.lambda_reg);
  emit("batch_size", hypers.batch_size);
  emit("init_range", hypers.init_range);
  emit("beam_width", hypers.beam_width);
  emit("max_tip_len", hypers.max_tip_len);
  emit("ln_n", hypers.ln_n);
  emit("ln_alpha", hypers.ln_alpha);
  emit("adadelta_rho", hypers.adadelta_rho);
  emit("adadelta_eps", hypers.adadelta_eps);
  emit("seed", seed);
  emit("min_tf", min_tf);
  emit("patience", patience);
  emit("max_epochs", max_epochs);
  emit("mf_factor_dim", mf_factor_dim);
  emit("schema", schema);
  if (!corpus.empty()) emit("corpus", corpus);
  if (!out.empty()) emit("out", out);
  return out_text.str();
}

}  // namespace nrt
