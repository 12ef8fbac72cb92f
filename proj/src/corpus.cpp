#include "hremrg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace hremrg {

namespace {

const std::array<const char*, kNumReserved> kReservedNames = {
    "<pad>", "<bos>", "<eos>", "<unk>"};

bool is_sep_punct(char c) { return c == '.' || c == ',' || c == ':' || c == ';'; }

// Atomic text/binary writer: temp file in place, then rename.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string raw;
  while (in >> raw) {
    for (char& c : raw) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    // Peel trailing separator punctuation into standalone tokens.
    std::string tail;
    while (!raw.empty() && is_sep_punct(raw.back())) {
      tail.push_back(raw.back());
      raw.pop_back();
    }
    if (!raw.empty()) out.push_back(raw);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it)
      out.push_back(std::string(1, *it));
  }
  return out;
}

Vocab Vocab::build(const std::vector<std::string>& train_reports, int min_count) {
  if (train_reports.empty())
    throw DataError("build_vocab: empty training split");
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const std::string& r : train_reports)
    for (const std::string& t : tokenize(r)) ++counts[t];

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [t, c] : counts)
    if (c >= min_count) kept.emplace_back(t, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.min_count_ = min_count;
  for (const char* r : kReservedNames) v.tokens_.push_back(r);
  for (const auto& [t, c] : kept) {
    v.ids_[t] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw VocabError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::string out = "hremrg-vocab 1 " + std::to_string(min_count_) + "\n";
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i)
    out += tokens_[i] + "\n";
  write_file_atomic(path, out);
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file " + path.string());
  std::string tag;
  int version = 0, min_count = 0;
  if (!(in >> tag >> version >> min_count) || tag != "hremrg-vocab")
    throw DataError("vocab file " + path.string() + ": bad header");
  if (version != 1)
    throw DataError("vocab file " + path.string() + ": unsupported version");
  Vocab v;
  v.min_count_ = min_count;
  for (const char* r : kReservedNames) v.tokens_.push_back(r);
  std::string line;
  std::getline(in, line);  // consume header newline
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    v.ids_[line] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(line);
  }
  return v;
}

TokenSeq encode_report(const std::string& text, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw ContractError("encode_report: max_len must be >= 2");
  TokenSeq seq{kBos};
  for (const std::string& t : tokenize(text)) {
    if (static_cast<int>(seq.size()) >= max_len - 1) break;
    seq.push_back(vocab.id(t));
  }
  seq.push_back(kEos);
  return seq;
}

std::string decode_tokens(const TokenSeq& seq, const Vocab& vocab) {
  std::string out;
  for (int id : seq) {
    if (id < kNumReserved) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

void save_features(const std::filesystem::path& path, const Tensor& regional) {
  if (regional.rank() != 2 || regional.shape[0] < 1 || regional.shape[1] < 1)
    throw ContractError("save_features: need a non-empty matrix");
  std::string bytes = "HRMF";
  put_u32(bytes, 1);
  put_u32(bytes, static_cast<std::uint32_t>(regional.shape[0]));
  put_u32(bytes, static_cast<std::uint32_t>(regional.shape[1]));
  for (double d : regional.data) {
    const float f = static_cast<float>(d);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(bytes, u);
  }
  write_file_atomic(path, bytes);
}

FeatureBundle load_features(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 4 || bytes.compare(0, 4, "HRMF") != 0)
    throw DataError("feature file " + path.string() + ": bad magic");
  if (bytes.size() < 16)
    throw DataError("feature file " + path.string() + ": truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != 1)
    throw DataError("feature file " + path.string() + ": unsupported version");
  const std::uint32_t n = get_u32(bytes, 8);
  const std::uint32_t d = get_u32(bytes, 12);
  if (n < 1 || d < 1 || n > 1u << 20 || d > 1u << 20)
    throw DataError("feature file " + path.string() + ": invalid dimensions");
  const std::size_t want = 16 + 4ull * n * d;
  if (bytes.size() < want)
    throw DataError("feature file " + path.string() + ": truncated payload");
  Tensor regional = Tensor::zeros({static_cast<int>(n), static_cast<int>(d)});
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * d; ++i) {
    const std::uint32_t u = get_u32(bytes, 16 + 4 * i);
    float f;
    std::memcpy(&f, &u, 4);
    regional.data[i] = static_cast<double>(f);
  }
  return FeatureBundle::from_regional(std::move(regional));
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<CorpusRecord>& records) {
  std::string out;
  for (const CorpusRecord& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["feature_path"] = r.feature_path;
    j["report"] = r.report;
    j["split"] = r.split;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<CorpusRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<CorpusRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw DataError("manifest " + path.string() + " line " +
                      std::to_string(line_no) + ": invalid JSON");
    CorpusRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.feature_path = j.at("feature_path").get<std::string>();
      r.report = j.at("report").get<std::string>();
      r.split = j.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest " + path.string() + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (r.split != "train" && r.split != "val" && r.split != "test")
      throw DataError("manifest " + path.string() + " line " +
                      std::to_string(line_no) + ": unknown split " + r.split);
    records.push_back(std::move(r));
  }
  return records;
}

FeatureBundle load_record_features(const std::filesystem::path& manifest,
                                   const CorpusRecord& rec) {
  return load_features(manifest.parent_path() / rec.feature_path);
}

void make_toy_corpus(const std::filesystem::path& dir, const ToySpec& spec,
                     std::uint64_t seed) {
  if (spec.examples < 1 || spec.vocab_words < 1 || spec.regions < 1 ||
      spec.feat_dim < 1 || spec.report_words < 1)
    throw ContractError("make_toy_corpus: sizes must be >= 1");
  if (spec.report_words > spec.regions)
    throw ContractError("make_toy_corpus: need at least one region per word");
  std::filesystem::create_directories(dir / "features");
  std::mt19937_64 rng(seed);

  // Fixed codebook: one feature row per content word.
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::vector<double>> code(
      static_cast<std::size_t>(spec.vocab_words),
      std::vector<double>(static_cast<std::size_t>(spec.feat_dim)));
  for (auto& row : code)
    for (double& x : row) x = unit(rng);

  std::uniform_int_distribution<int> word(0, spec.vocab_words - 1);
  std::vector<CorpusRecord> records;
  for (int i = 0; i < spec.examples; ++i) {
    std::vector<int> words(static_cast<std::size_t>(spec.report_words));
    for (int& w : words) w = word(rng);

    Tensor regional = Tensor::zeros({spec.regions, spec.feat_dim});
    for (int r = 0; r < spec.regions; ++r) {
      for (int c = 0; c < spec.feat_dim; ++c) {
        if (r < spec.report_words) {
          regional.at(r, c) = code[static_cast<std::size_t>(
              words[static_cast<std::size_t>(r)])][static_cast<std::size_t>(c)];
        } else {
          // Padding regions: mean of the word codes (still a pure function
          // of the report).
          double m = 0;
          for (int w : words) m += code[static_cast<std::size_t>(w)]
                                       [static_cast<std::size_t>(c)];
          regional.at(r, c) = m / spec.report_words;
        }
      }
    }

    char name[32];
    std::snprintf(name, sizeof name, "ex%04d.hrmf", i);
    save_features(dir / "features" / name, regional);

    std::string text;
    for (int w : words) {
      if (!text.empty()) text += ' ';
      text += "w" + std::to_string(w);
    }
    text += " .";

    CorpusRecord rec;
    rec.id = "p" + std::to_string(i);
    rec.feature_path = std::string("features/") + name;
    rec.report = text;
    records.push_back(std::move(rec));
  }

  // 7:1:2 split over shuffled patient ids: floor(0.7 n) train, floor(0.1 n)
  // val, remainder test.
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = records.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  for (std::size_t k = 0; k < n; ++k) {
    std::string split = k < n_train ? "train"
                        : k < n_train + n_val ? "val"
                                              : "test";
    records[order[k]].split = split;
  }
  save_manifest(dir / "manifest.jsonl", records);
}

std::map<std::string, std::string> load_config(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::map<std::string, std::string> cfg;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    s.erase(0, s.find_first_not_of(ws));
    const auto last = s.find_last_not_of(ws);
    s.erase(last == std::string::npos ? 0 : last + 1);
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw DataError("config " + path.string() + " line " +
                      std::to_string(line_no) + ": expected key=value");
    cfg[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

}  // namespace hremrg
