#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hremrg/model.hpp"

namespace hremrg {

// Input-data problems (bad files, malformed corpora). The CLI maps these to
// exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lowercase, split on whitespace, then split trailing . , : ; into their own
// tokens.
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
 public:
  static constexpr int kMinCountDefault = 5;

  // Frequency-filtered vocabulary over tokenized training reports; ids are
  // assigned after the reserved range by (descending count, lexicographic).
  static Vocab build(const std::vector<std::string>& train_reports,
                     int min_count = kMinCountDefault);

  int size() const { return static_cast<int>(tokens_.size()); }
  int min_count() const { return min_count_; }
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;  // index == id; reserved names first
  std::map<std::string, int> ids_;   // non-reserved only
  int min_count_ = kMinCountDefault;
};

// BOS + ids (UNK for out-of-vocabulary) + EOS, truncated to max_len with EOS
// kept last.
TokenSeq encode_report(const std::string& text, const Vocab& vocab, int max_len);

// Space-joined tokens; reserved ids are skipped.
std::string decode_tokens(const TokenSeq& seq, const Vocab& vocab);

// Feature file: magic "HRMF", version u32 LE, N u32 LE, d u32 LE, then N*d
// 32-bit LE floats row-major. Written atomically (temp + rename).
void save_features(const std::filesystem::path& path, const Tensor& regional);
FeatureBundle load_features(const std::filesystem::path& path);

struct CorpusRecord {
  std::string id;
  std::string feature_path;  // relative to the manifest's directory
  std::string report;
  std::string split;  // train | val | test
};

// UTF-8 JSON lines, one record per line.
void save_manifest(const std::filesystem::path& path,
                   const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> load_manifest(const std::filesystem::path& path);

// Resolves a record's feature path against the manifest location and loads it.
FeatureBundle load_record_features(const std::filesystem::path& manifest,
                                   const CorpusRecord& rec);

struct ToySpec {
  int examples = 12;
  int vocab_words = 8;   // content words "w0".."w{k-1}"
  int regions = 4;       // N
  int feat_dim = 16;     // d_raw
  int report_words = 3;  // content words per report
};

// Deterministic synthetic corpus: each example draws `report_words` content
// words; its features are a fixed codebook encoding of those words, so the
// report is a learnable function of the features. Splits 7:1:2 by patient.
// Writes manifest.jsonl plus features/*.hrmf under `dir`.
void make_toy_corpus(const std::filesystem::path& dir, const ToySpec& spec,
                     std::uint64_t seed);

// Flat UTF-8 key=value configuration ('#' comments, blank lines ignored).
std::map<std::string, std::string> load_config(const std::filesystem::path& path);

}  // namespace hremrg
