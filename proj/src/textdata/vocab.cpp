#include "qpeft/textdata/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "qpeft/error.hpp"

namespace qpeft {

namespace {
const char* const kReserved[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}
}  // namespace

Vocab::Vocab() {
  for (const char* t : kReserved) add(t);
}

TokenId Vocab::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || id >= size()) throw ContractError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= kNumReserved) {
      if (line != kReserved[lineno - 1]) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected reserved token " +
                         kReserved[lineno - 1]);
      }
      continue;
    }
    if (line.empty() || v.contains(line)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty or duplicate token");
    }
    v.add(line);
  }
  if (lineno < kNumReserved) throw ParseError(path + ": truncated vocabulary");
  return v;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
  TokenSeq ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const TokenSeq& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, int max_size) {
  if (max_size < kNumReserved) throw ContractError("build_vocab: max_size must be >= 4");
  std::map<std::string, long> counts;
  bool any = false;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) {
      ++counts[std::move(w)];
      any = true;
    }
  }
  if (!any) throw Error("build_vocab: empty corpus");
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // counts is lexicographically ordered already; stable sort keeps that for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [w, c] : ranked) {
    if (v.size() >= max_size) break;
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

}  // namespace qpeft
