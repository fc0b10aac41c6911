#include "fusionet/data.hpp"

#include "fusionet/image_io.hpp"
#include "fusionet/random.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

namespace fusionet {
namespace {

struct CodeRange {
  char32_t lo, hi;
};

constexpr CodeRange kLetterRanges[] = {
#include "unicode_letters.inc"
};

bool is_letter_or_mark(char32_t cp) {
  auto it = std::upper_bound(std::begin(kLetterRanges), std::end(kLetterRanges), cp,
                             [](char32_t v, const CodeRange& r) { return v < r.lo; });
  return it != std::begin(kLetterRanges) && cp <= std::prev(it)->hi;
}

bool is_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

/// Basic Latin and Latin-1 uppercase; other scripts are left alone.
char32_t lower_latin(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

/// Decodes UTF-8, silently dropping malformed or overlong sequences.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0, min = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
      ++i;
      continue;
    }
    bool ok = i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      ok = (b & 0xC0) == 0x80;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation" || text == "val") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(text) + "' (expected train, validation or test)");
}

std::vector<std::string> clean_caption(std::string_view raw) {
  // Re-encode first so the byte-oriented regex only ever sees valid UTF-8.
  static const std::regex kUrl(R"([A-Za-z][A-Za-z0-9+.\-]*://[^\s]+|[Ww][Ww][Ww]\.[^\s]+)");
  const std::string valid = encode_utf8(decode_utf8(raw));
  const std::u32string text = decode_utf8(std::regex_replace(valid, kUrl, " "));

  std::vector<std::string> tokens;
  std::string current;
  for (char32_t cp : text) {
    if (is_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (is_letter_or_mark(cp)) {
      append_utf8(current, lower_latin(cp));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<oov>");
}

void Vocabulary::add(const std::string& token) {
  if (ids_.emplace(token, static_cast<int>(tokens_.size())).second) tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& documents, int min_count) {
  std::unordered_map<std::string, int> counts;
  for (const auto& doc : documents) {
    for (const auto& tok : doc) ++counts[tok];
  }
  Vocabulary vocab;
  for (const auto& doc : documents) {
    for (const auto& tok : doc) {
      if (counts[tok] >= min_count) vocab.add(tok);
    }
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2) throw std::invalid_argument("vocabulary needs the pad and oov entries");
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.ids_.clear();
  for (const auto& t : tokens) {
    if (!vocab.ids_.emplace(t, static_cast<int>(vocab.tokens_.size())).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    }
    vocab.tokens_.push_back(t);
  }
  return vocab;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end() || it->second < 2) return kOov;
  return it->second;
}

std::vector<int> tokens_to_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               std::size_t length) {
  std::vector<int> ids(length, Vocabulary::kPad);
  const std::size_t n = std::min(length, tokens.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

LabelMap default_label_map() {
  return {{"hate", 1}, {"not_hate", 0}, {"offense", 1}, {"not_offense", 0}};
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (Split s : kAllSplits) {
    j[to_string(s)] = {{"0", count(s, 0)}, {"1", count(s, 1)}, {"total", total(s)}};
  }
  return j;
}

DatasetStats compute_stats(const std::vector<MemeSample>& samples) {
  DatasetStats stats;
  for (const auto& s : samples) {
    ++stats.counts[static_cast<std::size_t>(s.split)][static_cast<std::size_t>(s.label)];
  }
  return stats;
}

namespace {

std::string join_problems(const std::string& path, const std::vector<std::string>& problems) {
  std::string msg = "manifest " + path + " has " + std::to_string(problems.size()) + " bad record(s):";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

}  // namespace

ManifestError::ManifestError(const std::string& path, std::vector<std::string> problems)
    : std::runtime_error(join_problems(path, problems)), problems_(std::move(problems)) {}

Dataset load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  const std::filesystem::path base = path.parent_path();

  Dataset data;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      problems.push_back(where + ": invalid JSON (" + e.what() + ")");
      continue;
    }
    MemeSample s;
    try {
      s.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
      s.image_path = base / rec.at("image_path").get<std::string>();
      s.caption = rec.at("caption").get<std::string>();
      const auto& label = rec.at("label");
      if (label.is_string()) {
        auto it = options.labels.find(label.get<std::string>());
        if (it == options.labels.end()) {
          problems.push_back(where + " (id " + s.id + "): unknown label '" + label.get<std::string>() + "'");
          continue;
        }
        s.label = it->second;
      } else if (label.is_number_integer() && (label.get<int>() == 0 || label.get<int>() == 1)) {
        s.label = label.get<int>();
      } else {
        problems.push_back(where + " (id " + s.id + "): unknown label " + label.dump());
        continue;
      }
      s.split = parse_split(rec.at("split").get<std::string>());
    } catch (const std::exception& e) {
      problems.push_back(where + (s.id.empty() ? "" : " (id " + s.id + ")") + ": " + e.what());
      continue;
    }
    if (!seen.insert(s.id).second) {
      problems.push_back(where + ": duplicate id " + s.id);
      continue;
    }
    s.tokens = clean_caption(s.caption);
    data.samples.push_back(std::move(s));
  }

  // Decode images in parallel; each worker writes only its own slots.
  std::vector<std::string> image_problems(data.samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < data.samples.size(); i = next++) {
      MemeSample& s = data.samples[i];
      if (!std::filesystem::exists(s.image_path)) {
        image_problems[i] = "id " + s.id + ": missing image " + s.image_path.string();
        continue;
      }
      try {
        s.image = to_model_input(read_image(s.image_path), options.image_size);
      } catch (const std::exception& e) {
        image_problems[i] = "id " + s.id + ": undecodable image (" + e.what() + ")";
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, data.samples.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& p : image_problems) {
    if (!p.empty()) problems.push_back(std::move(p));
  }

  if (!problems.empty()) throw ManifestError(path.string(), std::move(problems));
  data.stats = compute_stats(data.samples);
  return data;
}

Vocabulary build_vocabulary(const std::vector<MemeSample>& samples, int min_count) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& s : samples) {
    if (s.split == Split::kTrain) docs.push_back(s.tokens);
  }
  return Vocabulary::build(docs, min_count);
}

void assign_token_ids(std::vector<MemeSample>& samples, const Vocabulary& vocab, std::size_t length) {
  for (auto& s : samples) s.token_ids = tokens_to_ids(s.tokens, vocab, length);
}

std::vector<std::size_t> split_indices(const std::vector<MemeSample>& samples, Split split) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) idx.push_back(i);
  }
  return idx;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<MemeSample>& samples, Split split,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  std::vector<std::size_t> order = split_indices(samples, split);
  if (split == Split::kTrain) {
    Rng rng(Rng::mix(seed, epoch), 0x62617463ULL);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace fusionet
