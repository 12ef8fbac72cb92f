// Command-line surface: synthetic corpus generation, vocabulary building,
// cross-entropy pretraining, SCST fine-tuning, reward-weight search, report
// generation, and metric scoring.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hremrg/corpus.hpp"
#include "hremrg/decoding.hpp"
#include "hremrg/metrics.hpp"
#include "hremrg/model.hpp"
#include "hremrg/search.hpp"
#include "hremrg/trainer.hpp"

namespace fs = std::filesystem;
using namespace hremrg;

namespace {

struct Options {
  fs::path config;
  std::uint64_t seed = 0;
  fs::path out = ".";
  std::map<std::string, std::string> cfg;

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
  }
  int get_int(const std::string& key, int fallback) const {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stoi(it->second);
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stod(it->second);
  }
};

MetricWeights parse_weights(const std::string& s) {
  MetricWeights w;
  std::istringstream in(s);
  std::string part;
  int i = 0;
  while (std::getline(in, part, ':')) {
    if (i >= kNumMetrics) throw DataError("weights '" + s + "': too many slots");
    w[i++] = std::stoi(part);
  }
  if (i != kNumMetrics)
    throw DataError("weights '" + s + "': expected " +
                    std::to_string(kNumMetrics) + " colon-separated integers");
  return w;
}

struct LoadedCorpus {
  std::vector<CorpusRecord> records;
  TrainData data;                      // encoded train/val examples
  std::vector<TrainExample> test;     // encoded test examples
  std::vector<std::string> test_ids;
  CorpusStats stats;                  // built over train references
  int d_raw = 0;
};

LoadedCorpus load_corpus(const Options& opt, const Vocab& vocab, int max_len) {
  const fs::path manifest = opt.out / "manifest.jsonl";
  LoadedCorpus c;
  c.records = load_manifest(manifest);
  if (c.records.empty()) throw DataError("manifest is empty: " + manifest.string());
  std::vector<std::vector<TokenSeq>> train_refs;
  for (const CorpusRecord& r : c.records) {
    TrainExample ex{load_record_features(manifest, r),
                    encode_report(r.report, vocab, max_len)};
    if (c.d_raw == 0) c.d_raw = ex.features.width();
    if (ex.features.width() != c.d_raw)
      throw DataError("feature width mismatch at record " + r.id);
    if (r.split == "train") {
      train_refs.push_back({strip_specials(ex.report)});
      c.data.train.push_back(std::move(ex));
    } else if (r.split == "val") {
      c.data.val.push_back(std::move(ex));
    } else {
      c.test_ids.push_back(r.id);
      c.test.push_back(std::move(ex));
    }
  }
  if (train_refs.empty()) throw DataError("no train split in " + manifest.string());
  c.stats = CorpusStats::build(train_refs);
  return c;
}

ModelConfig model_config(const Options& opt, int d_raw, int vocab_size) {
  ModelConfig cfg;
  cfg.d_raw = d_raw;
  cfg.d_model = opt.get_int("d_model", 64);
  cfg.d_b = opt.get_int("d_b", cfg.d_model);
  cfg.depth = opt.get_int("depth", 2);
  cfg.vocab_size = vocab_size;
  cfg.max_len = opt.get_int("max_len", 24);
  cfg.beam_size = opt.get_int("beam_size", 2);
  return cfg;
}

TrainConfig train_config(const Options& opt, TrainConfig base,
                         const std::string& prefix) {
  base.base_lr = opt.get_double(prefix + "_lr", base.base_lr);
  base.warmup_steps = opt.get_int("warmup_steps", base.warmup_steps);
  base.cosine_period = opt.get_int("cosine_period", base.cosine_period);
  base.cosine_min_lr = opt.get_double("cosine_min_lr", base.cosine_min_lr);
  base.epochs = opt.get_int(prefix + "_epochs", base.epochs);
  base.batch_size = opt.get_int(prefix + "_batch", base.batch_size);
  base.seed = opt.seed;
  base.lambda = parse_weights(opt.get("lambda", "1:1:1:1:1:1:1"));
  return base;
}

int cmd_make_toy(const Options& opt) {
  ToySpec spec;
  spec.examples = opt.get_int("toy_examples", 12);
  spec.vocab_words = opt.get_int("toy_vocab", 8);
  spec.regions = opt.get_int("toy_regions", 4);
  spec.feat_dim = opt.get_int("toy_feat_dim", 16);
  spec.report_words = opt.get_int("toy_report_words", 3);
  make_toy_corpus(opt.out, spec, opt.seed);
  std::cout << "wrote " << spec.examples << " records to "
            << (opt.out / "manifest.jsonl").string() << "\n";
  return 0;
}

int cmd_build_vocab(const Options& opt) {
  auto records = load_manifest(opt.out / "manifest.jsonl");
  std::vector<std::string> train;
  for (const auto& r : records)
    if (r.split == "train") train.push_back(r.report);
  Vocab v = Vocab::build(train, opt.get_int("min_count", Vocab::kMinCountDefault));
  v.save(opt.out / "vocab.txt");
  std::cout << "vocabulary of " << v.size() << " ids (incl. "
            << kNumReserved << " reserved) -> "
            << (opt.out / "vocab.txt").string() << "\n";
  return 0;
}

int run_training_phase(const Options& opt, TrainConfig tc,
                       const std::optional<fs::path>& init_checkpoint,
                       const fs::path& phase_dir) {
  Vocab vocab = Vocab::load(opt.out / "vocab.txt");
  LoadedCorpus corpus = load_corpus(opt, vocab, opt.get_int("max_len", 24));
  ModelConfig mc = model_config(opt, corpus.d_raw, vocab.size());

  ReportModel model = init_checkpoint
                          ? ReportModel(mc, ParamStore::load(*init_checkpoint))
                          : ReportModel(mc, opt.seed);
  TrainResult r = train(model, corpus.data, tc, corpus.stats, phase_dir);
  std::cout << "best score_sum " << r.best_score_sum << " -> "
            << r.best_checkpoint.string() << "\n";
  return 0;
}

int cmd_pretrain(const Options& opt) {
  TrainConfig tc = train_config(opt, TrainConfig::xent_defaults(), "xent");
  return run_training_phase(opt, tc, std::nullopt, opt.out / "pretrain");
}

int cmd_scst(const Options& opt) {
  const fs::path init = opt.out / "pretrain" / "best.ckpt";
  if (!fs::exists(init))
    throw DataError("missing pretraining checkpoint " + init.string() +
                    " (run pretrain first)");
  TrainConfig tc = train_config(opt, TrainConfig::scst_defaults(), "scst");
  return run_training_phase(opt, tc, init, opt.out / "scst");
}

int cmd_search_weights(const Options& opt) {
  const std::string table_path = opt.get("lookup_table", "");
  if (table_path.empty())
    throw DataError("search-weights requires a lookup_table config entry "
                    "(CSV rows 'l1:...:l7,score')");
  std::ifstream in(table_path);
  if (!in) throw DataError("cannot open lookup table " + table_path);
  std::map<MetricWeights, double> table;
  std::string line;
  int line_no = 0;
  int n = 2;
  std::array<bool, kNumMetrics> used{};
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("lookup table line " + std::to_string(line_no) +
                      ": expected 'weights,score'");
    MetricWeights w = parse_weights(line.substr(0, comma));
    table[w] = std::stod(line.substr(comma + 1));
    for (int i = 0; i < kNumMetrics; ++i) {
      if (w[i] > 0) used[static_cast<std::size_t>(i)] = true;
      n = std::max(n, w[i]);
    }
  }
  if (table.empty()) throw DataError("lookup table is empty: " + table_path);
  std::vector<int> slots;
  for (int i = 0; i < kNumMetrics; ++i)
    if (used[static_cast<std::size_t>(i)]) slots.push_back(i);
  n = opt.get_int("search_n", n);

  LookupScorer scorer(std::move(table));
  auto [weights, trace] = greedy_weight_search(scorer, slots, n);

  fs::create_directories(opt.out / "search");
  nlohmann::json j;
  j["weights"] = weights.to_string();
  j["best_score"] = trace.best().second;
  j["unique_evaluations"] = trace.unique_count();
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& [w, s] : trace.evals)
    evals.push_back({{"weights", w.to_string()}, {"score", s}});
  j["trace"] = evals;
  std::ofstream out(opt.out / "search" / "trace.json");
  out << j.dump(2) << "\n";
  std::cout << "best weights " << weights.to_string() << " score "
            << trace.best().second << " (" << trace.unique_count()
            << " unique evaluations)\n";
  return 0;
}

int cmd_generate(const Options& opt) {
  Vocab vocab = Vocab::load(opt.out / "vocab.txt");
  const int max_len = opt.get_int("max_len", 24);
  LoadedCorpus corpus = load_corpus(opt, vocab, max_len);
  ModelConfig mc = model_config(opt, corpus.d_raw, vocab.size());

  fs::path ckpt = opt.out / "scst" / "best.ckpt";
  if (!fs::exists(ckpt)) ckpt = opt.out / "pretrain" / "best.ckpt";
  if (!fs::exists(ckpt))
    throw DataError("no checkpoint under " + opt.out.string() +
                    " (run pretrain/scst first)");
  ReportModel model(mc, ParamStore::load(ckpt));

  const bool penalty = opt.get_int("generate_penalty", 1) != 0;
  std::string out_bytes;
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    TokenSeq tokens = beam_search(model, corpus.test[i].features, mc.beam_size,
                                  max_len, penalty);
    nlohmann::json j;
    j["id"] = corpus.test_ids[i];
    j["tokens"] = tokens;
    j["text"] = decode_tokens(tokens, vocab);
    out_bytes += j.dump() + "\n";
  }
  std::ofstream out(opt.out / "generated.jsonl", std::ios::binary);
  out << out_bytes;
  std::cout << "generated " << corpus.test.size() << " reports -> "
            << (opt.out / "generated.jsonl").string() << "\n";
  return 0;
}

int cmd_score(const Options& opt) {
  Vocab vocab = Vocab::load(opt.out / "vocab.txt");
  const int max_len = opt.get_int("max_len", 24);
  LoadedCorpus corpus = load_corpus(opt, vocab, max_len);

  std::ifstream in(opt.out / "generated.jsonl");
  if (!in)
    throw DataError("cannot open " + (opt.out / "generated.jsonl").string() +
                    " (run generate first)");
  std::map<std::string, TokenSeq> hyps;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("generated.jsonl: invalid JSON line");
    hyps[j.at("id").get<std::string>()] = j.at("tokens").get<TokenSeq>();
  }

  std::string out_bytes;
  ScoreVector mean;
  int scored = 0;
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    auto it = hyps.find(corpus.test_ids[i]);
    if (it == hyps.end())
      throw DataError("no generated report for id " + corpus.test_ids[i]);
    ScoreVector s =
        score_vector(strip_specials(it->second),
                     {strip_specials(corpus.test[i].report)}, corpus.stats);
    nlohmann::json j;
    j["id"] = corpus.test_ids[i];
    for (int k = 0; k < kNumMetrics; ++k) {
      j[kMetricNames[static_cast<std::size_t>(k)]] = s[k];
      mean[k] += s[k];
    }
    j["score_sum"] = s.score_sum();
    out_bytes += j.dump() + "\n";
    ++scored;
  }
  if (scored == 0) throw DataError("no test records to score");
  nlohmann::json agg;
  agg["id"] = "corpus-mean";
  for (int k = 0; k < kNumMetrics; ++k) {
    mean[k] /= scored;
    agg[kMetricNames[static_cast<std::size_t>(k)]] = mean[k];
  }
  agg["score_sum"] = mean.score_sum();
  out_bytes += agg.dump() + "\n";
  std::ofstream out(opt.out / "score_report.json", std::ios::binary);
  out << out_bytes;
  std::cout << "scored " << scored << " reports, mean score_sum "
            << mean.score_sum() << " -> "
            << (opt.out / "score_report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medical report generation: training, decoding, scoring, and "
               "reward-weight search"};
  app.require_subcommand(1);
  app.fallthrough();  // allow the global flags after the subcommand too

  Options opt;
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--seed", opt.seed, "RNG seed (default 0)");
  app.add_option("--out", opt.out, "working/output directory (default .)");

  std::map<std::string, int (*)(const Options&)> commands = {
      {"make-toy", cmd_make_toy},       {"build-vocab", cmd_build_vocab},
      {"pretrain", cmd_pretrain},       {"scst", cmd_scst},
      {"search-weights", cmd_search_weights},
      {"generate", cmd_generate},       {"score", cmd_score}};
  std::map<std::string, CLI::App*> subs;
  subs["make-toy"] = app.add_subcommand("make-toy", "write a synthetic corpus");
  subs["build-vocab"] =
      app.add_subcommand("build-vocab", "build the vocabulary from the train split");
  subs["pretrain"] = app.add_subcommand("pretrain", "cross-entropy training");
  subs["scst"] = app.add_subcommand("scst", "self-critical fine-tuning");
  subs["search-weights"] =
      app.add_subcommand("search-weights", "greedy reward-weight search");
  subs["generate"] = app.add_subcommand("generate", "decode the test split");
  subs["score"] = app.add_subcommand("score", "score generated reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
  }

  try {
    if (!config_path.empty()) opt.cfg = load_config(config_path);
    for (const auto& [name, fn] : commands)
      if (subs[name]->parsed()) return fn(opt);
    std::cerr << "no command selected\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
