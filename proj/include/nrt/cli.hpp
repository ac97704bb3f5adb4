#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nrt/baseline.hpp"
#include "nrt/checkpoint.hpp"
#include "nrt/config.hpp"
#include "nrt/corpus.hpp"
#include "nrt/decode.hpp"
#include "nrt/metrics.hpp"
#include "nrt/stem.hpp"
#include "nrt/train.hpp"

namespace nrt::cli {

inline std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

inline void require_readable(const std::string& path, const char* what) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw UsageError(std::string(what) + " not readable: " + path);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failure: " + path);
}

// ---------------------------------------------------------------------------
// prepare

inline int cmd_prepare(const std::string& input, const std::string& schema_name,
                       std::size_t min_tf, std::uint64_t seed, const std::string& out_path) {
  const auto schema = parse_schema(schema_name);
  if (!schema) throw UsageError("unknown schema '" + schema_name + "'");
  require_readable(input, "input corpus");
  PreparedCorpus corpus = prepare_corpus(input, *schema, min_tf, seed);
  save_corpus(corpus, out_path);
  std::cout << "users=" << corpus.splits.user_count << "\n"
            << "items=" << corpus.splits.item_count << "\n"
            << "vocab=" << corpus.vocab.size() << "\n"
            << "train=" << corpus.splits.train.size() << "\n"
            << "valid=" << corpus.splits.valid.size() << "\n"
            << "test=" << corpus.splits.test.size() << "\n"
            << "dropped_cold=" << corpus.splits.dropped_cold << "\n"
            << "malformed=" << corpus.parse_stats.malformed << "\n"
            << "dropped_empty_text=" << corpus.parse_stats.dropped_empty_text << "\n"
            << "vocab_hash=" << corpus.vocab.hash() << "\n"
            << "archive=" << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline std::string report_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,joint,rating,review,tips,val_mae,val_rmse,seconds,best\n";
  for (const EpochRow& row : report.rows) {
    out << row.epoch << ',' << fmt(row.joint) << ',' << fmt(row.rating) << ','
        << fmt(row.review) << ',' << fmt(row.tips) << ',' << fmt(row.val_mae) << ','
        << fmt(row.val_rmse) << ',' << fmt(row.seconds, 3) << ',' << (row.best ? 1 : 0)
        << "\n";
  }
  return out.str();
}

inline int cmd_train(const std::string& corpus_path, const std::string& config_path,
                     const std::string& out_dir, const std::string& model, bool quiet) {
  require_readable(corpus_path, "corpus archive");
  RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  PreparedCorpus corpus = load_corpus(corpus_path);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir + "/config.echo", config.echo());

  if (model == "mf") {
    MfTrainOptions options;
    options.factor_dim = config.mf_factor_dim;
    options.lambda = config.hypers.lambda_reg;
    options.seed = config.seed;
    options.max_epochs = config.max_epochs;
    options.patience = config.patience;
    options.batch_size = config.hypers.batch_size;
    options.init_range = config.hypers.init_range;
    options.adadelta_rho = config.hypers.adadelta_rho;
    options.adadelta_eps = config.hypers.adadelta_eps;
    MfTrainResult result = mf_train(corpus, options);
    save_mf_checkpoint(result.params, options, corpus.vocab.hash(), out_dir + "/checkpoint.mf");
    write_text_file(out_dir + "/report.csv", report_csv(result.report));
    if (result.report.aborted) {
      write_text_file(out_dir + "/ABORTED", result.report.abort_reason + "\n");
      std::cerr << "training aborted: " << result.report.abort_reason << "\n";
      return 1;
    }
    if (!result.report.rows.empty()) {
      const EpochRow& last = result.report.rows[result.report.best_epoch];
      std::cout << "best_epoch=" << result.report.best_epoch << "\n"
                << "val_mae=" << fmt(last.val_mae) << "\n"
                << "val_rmse=" << fmt(last.val_rmse) << "\n";
    }
    std::cout << "checkpoint=" << out_dir << "/checkpoint.mf\n";
    return 0;
  }
  if (model != "nrt") throw UsageError("unknown model '" + model + "' (expected nrt or mf)");

  TrainOptions options;
  options.max_epochs = config.max_epochs;
  options.patience = config.patience;
  options.seed = config.seed;
  if (!quiet) {
    options.on_epoch = [](const EpochRow& row) {
      std::cerr << "epoch " << row.epoch << " joint=" << fmt(row.joint)
                << " rating=" << fmt(row.rating) << " review=" << fmt(row.review)
                << " tips=" << fmt(row.tips) << " val_rmse=" << fmt(row.val_rmse)
                << (row.best ? " *" : "") << "\n";
    };
  }
  TrainResult result = train(corpus, config.hypers, options);
  save_checkpoint(result.params, result.state, corpus.vocab.hash(),
                  out_dir + "/checkpoint.nrt");
  write_text_file(out_dir + "/report.csv", report_csv(result.report));
  if (result.report.aborted) {
    write_text_file(out_dir + "/ABORTED", result.report.abort_reason + "\n");
    std::cerr << "training aborted: " << result.report.abort_reason << "\n";
    return 1;
  }
  if (!result.report.rows.empty()) {
    const EpochRow& best = result.report.rows[result.report.best_epoch];
    std::cout << "best_epoch=" << result.report.best_epoch << "\n"
              << "val_mae=" << fmt(best.val_mae) << "\n"
              << "val_rmse=" << fmt(best.val_rmse) << "\n";
  }
  std::cout << "checkpoint=" << out_dir << "/checkpoint.nrt\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate

inline const std::vector<Interaction>& pick_split(const PreparedCorpus& corpus,
                                                  const std::string& split) {
  if (split == "train") return corpus.splits.train;
  if (split == "valid") return corpus.splits.valid;
  if (split == "test") return corpus.splits.test;
  throw UsageError("unknown split '" + split + "' (expected train, valid or test)");
}

inline std::string render_tokens(const Vocabulary& vocab, std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token(tokens[i]);
  }
  return out;
}

inline int cmd_generate(const std::string& checkpoint_path, const std::string& corpus_path,
                        const std::string& split, std::size_t beam, std::size_t max_len,
                        bool length_norm, bool clamp_ratings, const std::string& out_path) {
  require_readable(checkpoint_path, "checkpoint");
  require_readable(corpus_path, "corpus archive");
  PreparedCorpus corpus = load_corpus(corpus_path);
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  if (loaded.vocab_hash != corpus.vocab.hash()) {
    throw CheckpointError("vocabulary mismatch: checkpoint hash " +
                          std::to_string(loaded.vocab_hash) + " vs corpus hash " +
                          std::to_string(corpus.vocab.hash()));
  }
  const Hypers& hypers = loaded.params.hypers();
  if (beam == 0) beam = hypers.beam_width;
  if (max_len == 0) max_len = hypers.max_tip_len;
  const std::vector<Interaction>& part = pick_split(corpus, split);

  std::ostringstream out;
  out << "user\titem\trating\ttips\tnorm_score\traw_score\n";
  for (const Interaction& it : part) {
    std::vector<BeamHypothesis> hyps =
        beam_search(loaded.params, it.user, it.item, beam, max_len);
    BeamHypothesis best;
    double norm_score = 0.0;
    if (length_norm) {
      auto ranked = length_normalize(std::move(hyps), hypers.ln_n, hypers.ln_alpha);
      best = std::move(ranked.front().hyp);
      norm_score = ranked.front().normalized_score;
    } else {
      best = std::move(hyps.front());
      norm_score = best.log_likelihood;
    }
    double rhat = rating_predict(loaded.params, it.user, it.item);
    if (clamp_ratings) rhat = std::min(5.0, std::max(0.0, rhat));
    out << corpus.user_names[static_cast<std::size_t>(it.user)] << '\t'
        << corpus.item_names[static_cast<std::size_t>(it.item)] << '\t' << fmt(rhat) << '\t'
        << render_tokens(corpus.vocab, surface_tokens(best)) << '\t' << fmt(norm_score)
        << '\t' << fmt(best.log_likelihood) << "\n";
  }
  write_text_file(out_path, out.str());
  std::cout << "predictions=" << out_path << "\n" << "rows=" << part.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct PredictionRow {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::string tips;
};

inline std::vector<PredictionRow> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file: " + path);
  std::vector<PredictionRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("user\t", 0) == 0) continue;  // header
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 6)
      throw CorpusError(path + ": predictions row with " + std::to_string(fields.size()) +
                        " fields, expected 6");
    PredictionRow row;
    row.user = fields[0];
    row.item = fields[1];
    row.rating = detail::parse_double("rating", fields[2]);
    row.tips = fields[3];
    rows.push_back(std::move(row));
  }
  return rows;
}

struct MetricsReport {
  std::optional<RatingEval> rating;
  RougeScores rouge;
  std::size_t count = 0;
};

inline std::string metrics_key_values(const MetricsReport& report) {
  std::ostringstream out;
  out << "count=" << report.count << "\n";
  if (report.rating) {
    out << "mae=" << fmt(report.rating->mae) << "\n";
    out << "rmse=" << fmt(report.rating->rmse) << "\n";
  }
  const auto emit = [&](const char* name, const RougeTriple& t) {
    out << name << "_recall=" << fmt(t.recall) << "\n"
        << name << "_precision=" << fmt(t.precision) << "\n"
        << name << "_f1=" << fmt(t.f1) << "\n";
  };
  emit("rouge_1", report.rouge.r1);
  emit("rouge_2", report.rouge.r2);
  emit("rouge_l", report.rouge.rl);
  emit("rouge_su4", report.rouge.rsu4);
  return out.str();
}

inline std::string metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  out << "pairs scored: " << report.count << "\n";
  if (report.rating) {
    out << "MAE  = " << fmt(report.rating->mae) << "\n";
    out << "RMSE = " << fmt(report.rating->rmse) << "\n";
  }
  out << "metric      recall   precision  f1\n";
  const auto emit = [&](const char* name, const RougeTriple& t) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-10s  %.4f   %.4f     %.4f\n", name, t.recall,
                  t.precision, t.f1);
    out << buf;
  };
  emit("ROUGE-1", report.rouge.r1);
  emit("ROUGE-2", report.rouge.r2);
  emit("ROUGE-L", report.rouge.rl);
  emit("ROUGE-SU4", report.rouge.rsu4);
  return out.str();
}

inline int finish_evaluate(const MetricsReport& report, const std::string& out_path,
                           const std::string& per_pair_path,
                           const std::vector<RougeScores>& per_pair) {
  std::cout << metrics_table(report) << metrics_key_values(report);
  if (!out_path.empty()) write_text_file(out_path, metrics_key_values(report));
  if (!per_pair_path.empty()) {
    std::ostringstream out;
    out << "pair\trouge_1_f1\trouge_2_f1\trouge_l_f1\trouge_su4_f1\n";
    for (std::size_t i = 0; i < per_pair.size(); ++i) {
      out << i << '\t' << fmt(per_pair[i].r1.f1) << '\t' << fmt(per_pair[i].r2.f1) << '\t'
          << fmt(per_pair[i].rl.f1) << '\t' << fmt(per_pair[i].rsu4.f1) << "\n";
    }
    write_text_file(per_pair_path, out.str());
  }
  return 0;
}

inline int cmd_evaluate_corpus(const std::string& predictions_path,
                               const std::string& corpus_path, const std::string& split,
                               bool stem, const std::string& out_path,
                               const std::string& per_pair_path) {
  require_readable(predictions_path, "predictions file");
  require_readable(corpus_path, "corpus archive");
  PreparedCorpus corpus = load_corpus(corpus_path);
  const std::vector<Interaction>& part = pick_split(corpus, split);
  std::vector<PredictionRow> rows = read_predictions(predictions_path);
  if (rows.size() != part.size())
    throw CorpusError("predictions have " + std::to_string(rows.size()) + " rows but split '" +
                      split + "' has " + std::to_string(part.size()));

  std::vector<std::pair<double, double>> rating_pairs;
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> text_pairs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Interaction& truth = part[i];
    if (rows[i].user != corpus.user_names[static_cast<std::size_t>(truth.user)] ||
        rows[i].item != corpus.item_names[static_cast<std::size_t>(truth.item)]) {
      throw CorpusError("predictions row " + std::to_string(i) +
                        " does not align with the corpus split (user/item mismatch)");
    }
    rating_pairs.emplace_back(truth.rating, rows[i].rating);
    std::vector<std::string> cand = tokenize(rows[i].tips);
    std::vector<std::string> ref = tokenize(truth.tips_text);
    if (stem) {
      cand = stem_tokens(cand);
      ref = stem_tokens(ref);
    }
    text_pairs.emplace_back(std::move(cand), std::move(ref));
  }
  CorpusRouge rouge = corpus_rouge(text_pairs);
  MetricsReport report;
  report.rating = rating_metrics(rating_pairs);
  report.rouge = rouge.mean;
  report.count = rows.size();
  return finish_evaluate(report, out_path, per_pair_path, rouge.per_pair);
}

inline int cmd_evaluate_files(const std::string& candidates_path,
                              const std::string& references_path, bool stem,
                              const std::string& out_path, const std::string& per_pair_path) {
  require_readable(candidates_path, "candidates file");
  require_readable(references_path, "references file");
  const auto read_lines = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    return lines;
  };
  const auto cands = read_lines(candidates_path);
  const auto refs = read_lines(references_path);
  if (cands.size() != refs.size())
    throw CorpusError("candidates have " + std::to_string(cands.size()) +
                      " lines but references have " + std::to_string(refs.size()));
  if (cands.empty()) throw CorpusError("no lines to score");
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    std::vector<std::string> c = tokenize(cands[i]);
    std::vector<std::string> r = tokenize(refs[i]);
    if (stem) {
      c = stem_tokens(c);
      r = stem_tokens(r);
    }
    pairs.emplace_back(std::move(c), std::move(r));
  }
  CorpusRouge rouge = corpus_rouge(pairs);
  MetricsReport report;
  report.rouge = rouge.mean;
  report.count = pairs.size();
  return finish_evaluate(report, out_path, per_pair_path, rouge.per_pair);
}

// ---------------------------------------------------------------------------
// inspect

inline int cmd_inspect(const std::string& path) {
  require_readable(path, "container");
  ContainerReader reader(path);
  const auto& manifest = reader.manifest();
  std::cout << "kind=" << reader.kind() << "\n";
  if (reader.kind() == "checkpoint") {
    std::cout << "model_type=" << manifest.value("model_type", "?") << "\n"
              << "num_users=" << manifest.value("num_users", std::size_t{0}) << "\n"
              << "num_items=" << manifest.value("num_items", std::size_t{0}) << "\n";
    if (manifest.contains("vocab_size"))
      std::cout << "vocab_size=" << manifest["vocab_size"].get<std::size_t>() << "\n";
    if (manifest.contains("factor_dim"))
      std::cout << "factor_dim=" << manifest["factor_dim"].get<std::size_t>() << "\n";
  } else if (reader.kind() == "corpus") {
    std::cout << "users=" << manifest.at("users").size() << "\n"
              << "items=" << manifest.at("items").size() << "\n"
              << "vocab=" << manifest.at("vocab").at("tokens").size() + 2 << "\n";
  }
  if (manifest.contains("vocab_hash"))
    std::cout << "vocab_hash=" << manifest["vocab_hash"].get<std::uint64_t>() << "\n";
  if (manifest.contains("arrays"))
    std::cout << "arrays=" << manifest["arrays"].size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring.

inline int run(std::vector<std::string> args) {
  CLI::App app{"neural rating regression with abstractive tips generation"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "ingest a JSON-lines corpus into an archive");
  std::string p_input, p_schema = "generic", p_out;
  std::size_t p_min_tf = 5;
  std::uint64_t p_seed = 1;
  prepare->add_option("--input", p_input, "JSON-lines input file")->required();
  prepare->add_option("--schema", p_schema, "amazon|yelp|generic");
  prepare->add_option("--min-tf", p_min_tf, "minimum term frequency");
  prepare->add_option("--seed", p_seed, "split shuffle seed");
  prepare->add_option("--out", p_out, "output archive path")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model on a prepared corpus");
  std::string t_corpus, t_config, t_out, t_model = "nrt";
  bool t_quiet = false;
  train_cmd->add_option("--corpus", t_corpus, "prepared corpus archive")->required();
  train_cmd->add_option("--config", t_config, "key=value run configuration");
  train_cmd->add_option("--out", t_out, "output directory")->required();
  train_cmd->add_option("--model", t_model, "nrt|mf");
  train_cmd->add_flag("--quiet", t_quiet, "suppress per-epoch progress");

  auto* generate = app.add_subcommand("generate", "decode tips and predict ratings");
  std::string g_checkpoint, g_corpus, g_split = "test", g_out;
  std::size_t g_beam = 0, g_max_len = 0;
  bool g_no_ln = false, g_clamp = false;
  generate->add_option("--checkpoint", g_checkpoint, "model checkpoint")->required();
  generate->add_option("--corpus", g_corpus, "prepared corpus archive")->required();
  generate->add_option("--split", g_split, "train|valid|test");
  generate->add_option("--beam", g_beam, "beam width (default: checkpoint value)");
  generate->add_option("--max-len", g_max_len, "maximum tips length (default: checkpoint value)");
  generate->add_flag("--no-length-norm", g_no_ln, "rank by raw log-likelihood");
  generate->add_flag("--clamp-ratings", g_clamp, "clamp predicted ratings into [0,5]");
  generate->add_option("--out", g_out, "predictions output path")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score predictions");
  std::string e_predictions, e_corpus, e_split = "test", e_cands, e_refs, e_out, e_pairs;
  bool e_stem = false;
  evaluate->add_option("--predictions", e_predictions, "predictions file from generate");
  evaluate->add_option("--corpus", e_corpus, "prepared corpus archive");
  evaluate->add_option("--split", e_split, "train|valid|test");
  evaluate->add_option("--candidates", e_cands, "candidate text file, one per line");
  evaluate->add_option("--references", e_refs, "reference text file, one per line");
  evaluate->add_flag("--stem", e_stem, "apply Porter stemming before scoring");
  evaluate->add_option("--out", e_out, "write the key=value metrics block here");
  evaluate->add_option("--per-pair", e_pairs, "write a per-pair score breakdown here");

  auto* inspect = app.add_subcommand("inspect", "describe an archive or checkpoint");
  std::string i_path;
  inspect->add_option("--path", i_path, "container file")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(p_input, p_schema, p_min_tf, p_seed, p_out);
    if (train_cmd->parsed()) return cmd_train(t_corpus, t_config, t_out, t_model, t_quiet);
    if (generate->parsed())
      return cmd_generate(g_checkpoint, g_corpus, g_split, g_beam, g_max_len, !g_no_ln,
                          g_clamp, g_out);
    if (evaluate->parsed()) {
      const bool corpus_mode = !e_predictions.empty() || !e_corpus.empty();
      const bool file_mode = !e_cands.empty() || !e_refs.empty();
      if (corpus_mode == file_mode)
        throw UsageError(
            "evaluate needs either --predictions with --corpus, or --candidates with "
            "--references");
      if (corpus_mode) {
        if (e_predictions.empty() || e_corpus.empty())
          throw UsageError("evaluate: --predictions and --corpus go together");
        return cmd_evaluate_corpus(e_predictions, e_corpus, e_split, e_stem, e_out, e_pairs);
      }
      if (e_cands.empty() || e_refs.empty())
        throw UsageError("evaluate: --candidates and --references go together");
      return cmd_evaluate_files(e_cands, e_refs, e_stem, e_out, e_pairs);
    }
    if (inspect->parsed()) return cmd_inspect(i_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc));
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace nrt::cli
