#include "psan/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "psan/random.hpp"

namespace psan {

namespace {

bool is_space_byte(unsigned char c) { return c < 0x80 && std::isspace(c); }

// Word characters: ASCII alphanumerics plus any non-ASCII byte, so UTF-8
// sequences stay glued together. Everything else printable is punctuation.
bool is_word_byte(unsigned char c) {
  return c >= 0x80 || std::isalnum(c);
}

std::string lower_ascii(std::string s) {
  for (char& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

bool is_maker_punct(const std::string& t) {
  return t == "," || t == "." || t == "!" || t == "?";
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return is;
}

}  // namespace

// ---- tokenization ----

std::vector<RawToken> tokenize(const std::string& text) {
  std::vector<RawToken> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back(
          RawToken{lower_ascii(text.substr(i, j - i)), i, j, false});
      i = j;
    } else {
      out.push_back(RawToken{text.substr(i, 1), i, i + 1, true});
      ++i;
    }
  }
  return out;
}

// ---- connectives ----

void ConnectiveList::add(const std::string& phrase) {
  std::vector<std::string> words = split_words(lower_ascii(phrase));
  if (words.empty()) throw ConfigError("connectives: empty phrase");
  if (words.size() == 1 && removed_.count(words[0]))
    throw ConfigError("connectives: '" + words[0] +
                      "' is both active and removed");
  std::string key;
  for (const auto& w : words) key += (key.empty() ? "" : " ") + w;
  if (!active_keys_.insert(key).second) return;  // ignore duplicates
  active_.push_back(std::move(words));
  std::stable_sort(active_.begin(), active_.end(),
                   [](const auto& a, const auto& b) {
                     return a.size() > b.size();
                   });
}

void ConnectiveList::add_removed(const std::string& word) {
  const std::string w = lower_ascii(trim(word));
  if (w.empty() || w.find(' ') != std::string::npos)
    throw ConfigError("connectives: removed entries are single words");
  if (active_keys_.count(w))
    throw ConfigError("connectives: '" + w + "' is both active and removed");
  removed_.insert(w);
}

bool ConnectiveList::is_removed(const std::string& word) const {
  return removed_.count(word) != 0;
}

std::size_t ConnectiveList::match(const std::vector<RawToken>& tokens,
                                  std::size_t i) const {
  if (i >= tokens.size() || tokens[i].is_punct) return 0;
  for (const auto& phrase : active_) {
    if (i + phrase.size() > tokens.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < phrase.size(); ++k) {
      if (tokens[i + k].is_punct || tokens[i + k].text != phrase[k]) {
        ok = false;
        break;
      }
    }
    if (ok) return phrase.size();
  }
  return 0;
}

ConnectiveList load_connectives(std::istream& is) {
  ConnectiveList list;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line[0] == '-')
        list.add_removed(line.substr(1));
      else
        list.add(line);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " +
                        std::to_string(lineno) + ")");
    }
  }
  if (list.active_count() == 0)
    throw ConfigError("connectives: no active connectives loaded");
  return list;
}

ConnectiveList load_connectives_file(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  return load_connectives(is);
}

// ---- segmentation ----

std::vector<Discourse> segment_message(const std::string& text,
                                       const ConnectiveList& connectives) {
  const std::vector<RawToken> tokens = tokenize(text);
  if (tokens.empty())
    throw ValueError("segment_message: no tokens in the input text");

  std::vector<std::vector<RawToken>> segments;
  std::vector<RawToken> cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      segments.push_back(std::move(cur));
      cur.clear();
    }
  };

  std::size_t i = 0;
  while (i < tokens.size()) {
    const RawToken& t = tokens[i];
    if (t.is_punct && is_maker_punct(t.text)) {
      flush();  // the maker itself is dropped
      ++i;
      continue;
    }
    const std::size_t len = connectives.match(tokens, i);
    if (len > 0 && !connectives.is_removed(t.text)) {
      flush();  // the connective opens the next segment
      for (std::size_t k = 0; k < len; ++k) cur.push_back(tokens[i + k]);
      i += len;
      continue;
    }
    cur.push_back(t);
    ++i;
  }
  flush();

  // A message of nothing but makers still needs one discourse to live in.
  if (segments.empty()) segments.push_back(tokens);

  std::vector<Discourse> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) {
    Discourse d;
    d.begin = seg.front().begin;
    d.end = seg.back().end;
    d.tokens.reserve(seg.size());
    for (std::size_t k = 0; k < seg.size(); ++k)
      d.tokens.push_back(Token{seg[k].text, static_cast<int>(k), -1,
                               seg[k].begin, seg[k].end});
    out.push_back(std::move(d));
  }
  return out;
}

// ---- messages ----

std::vector<Message> load_messages_jsonl(std::istream& is) {
  std::vector<Message> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("messages line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
        !j.contains("label"))
      throw FormatError("messages line " + std::to_string(lineno) +
                        ": need id, text and label");
    Message m;
    if (!j["id"].is_string() || !j["text"].is_string())
      throw FormatError("messages line " + std::to_string(lineno) +
                        ": id and text must be strings");
    m.id = j["id"].get<std::string>();
    m.text = j["text"].get<std::string>();
    if (!j["label"].is_number_integer())
      throw FormatError("messages line " + std::to_string(lineno) +
                        ": label must be an integer");
    m.label = j["label"].get<int>();
    if (m.label != 0 && m.label != 1)
      throw FormatError("messages line " + std::to_string(lineno) +
                        ": label must be 0 or 1");
    if (!seen.insert(m.id).second)
      throw FormatError("messages line " + std::to_string(lineno) +
                        ": duplicate id '" + m.id + "'");
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Message> load_messages_jsonl_file(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  return load_messages_jsonl(is);
}

// ---- CoNLL-U ----

namespace {

struct ConlluRow {
  int id = 0;
  std::string form;
  int head = 0;
};

// Recognizes "# msg_id = <id> disc = <n>".
bool parse_key_comment(const std::string& line, std::string* msg_id,
                       int* disc) {
  std::istringstream is(line);
  std::string hash, kw, eq, id, disckw, eq2, num;
  if (!(is >> hash >> kw >> eq >> id >> disckw >> eq2 >> num)) return false;
  if (hash != "#" || kw != "msg_id" || eq != "=" || disckw != "disc" ||
      eq2 != "=")
    return false;
  char* endp = nullptr;
  const long n = std::strtol(num.c_str(), &endp, 10);
  if (endp == num.c_str() || *endp != '\0' || n < 0) return false;
  *msg_id = id;
  *disc = static_cast<int>(n);
  return true;
}

ParsedDiscourse finish_sentence(std::vector<ConlluRow>& rows,
                                const std::string& msg_id, int disc_index,
                                int first_line) {
  const int n = static_cast<int>(rows.size());
  for (int i = 0; i < n; ++i) {
    if (rows[i].id != i + 1)
      throw StructuralError("conllu sentence at line " +
                            std::to_string(first_line) +
                            ": token ids are not 1..n");
    if (rows[i].head < 0 || rows[i].head > n)
      throw StructuralError("conllu sentence at line " +
                            std::to_string(first_line) + ": head " +
                            std::to_string(rows[i].head) + " out of range");
    if (rows[i].head == rows[i].id)
      throw StructuralError("conllu sentence at line " +
                            std::to_string(first_line) + ": token " +
                            std::to_string(rows[i].id) + " heads itself");
  }
  ParsedDiscourse p;
  p.msg_id = msg_id;
  p.disc_index = disc_index;
  int root = -1;
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    p.forms.push_back(lower_ascii(rows[i].form));
    if (rows[i].head == 0) {
      if (root >= 0)
        throw StructuralError("conllu sentence at line " +
                              std::to_string(first_line) +
                              ": more than one root");
      root = i;
    } else {
      const int h = rows[i].head - 1;
      edges.insert({std::min(h, i), std::max(h, i)});
    }
  }
  if (root < 0)
    throw StructuralError("conllu sentence at line " +
                          std::to_string(first_line) + ": no root");
  p.root = root;
  p.edges.assign(edges.begin(), edges.end());

  // Reachability from the root; punctuation tokens may dangle.
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{root};
  seen[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& [a, b] : p.edges) {
      const int v = a == u ? b : (b == u ? a : -1);
      if (v >= 0 && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  p.connected = true;
  for (int i = 0; i < n; ++i) {
    const std::string& f = p.forms[static_cast<std::size_t>(i)];
    const bool punct =
        f.size() == 1 && std::ispunct(static_cast<unsigned char>(f[0]));
    if (!punct && !seen[static_cast<std::size_t>(i)]) p.connected = false;
  }
  rows.clear();
  return p;
}

}  // namespace

std::vector<ParsedDiscourse> load_conllu(std::istream& is) {
  std::vector<ParsedDiscourse> out;
  std::vector<ConlluRow> rows;
  std::string pending_msg;
  int pending_disc = -1;
  int anonymous_index = 0;
  int lineno = 0, first_line = 0;
  std::string line;

  auto finish = [&]() {
    if (rows.empty()) return;
    const int disc =
        pending_disc >= 0 ? pending_disc : anonymous_index++;
    out.push_back(finish_sentence(rows, pending_msg, disc, first_line));
    pending_msg.clear();
    pending_disc = -1;
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) {
      finish();
      continue;
    }
    if (line[0] == '#') {
      std::string id;
      int disc = 0;
      if (parse_key_comment(line, &id, &disc)) {
        pending_msg = id;
        pending_disc = disc;
      }
      continue;
    }
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos
                                            ? std::string::npos
                                            : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 10)
      throw FormatError("conllu line " + std::to_string(lineno) +
                        ": expected 10 tab-separated columns, got " +
                        std::to_string(cols.size()));
    // Multiword token ranges (1-2) and empty nodes (1.1) carry no tree edges.
    if (cols[0].find('-') != std::string::npos ||
        cols[0].find('.') != std::string::npos)
      continue;
    ConlluRow row;
    char* endp = nullptr;
    row.id = static_cast<int>(std::strtol(cols[0].c_str(), &endp, 10));
    if (endp == cols[0].c_str() || *endp != '\0' || row.id <= 0)
      throw FormatError("conllu line " + std::to_string(lineno) +
                        ": bad token id '" + cols[0] + "'");
    row.form = cols[1];
    if (row.form.empty())
      throw FormatError("conllu line " + std::to_string(lineno) +
                        ": empty form");
    row.head = static_cast<int>(std::strtol(cols[6].c_str(), &endp, 10));
    if (endp == cols[6].c_str() || *endp != '\0' || row.head < 0)
      throw FormatError("conllu line " + std::to_string(lineno) +
                        ": bad head '" + cols[6] + "'");
    if (rows.empty()) first_line = lineno;
    rows.push_back(std::move(row));
  }
  finish();
  return out;
}

std::vector<ParsedDiscourse> load_conllu_file(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  return load_conllu(is);
}

std::map<ParseKey, const ParsedDiscourse*> index_parses(
    const std::vector<ParsedDiscourse>& parses) {
  std::map<ParseKey, const ParsedDiscourse*> index;
  for (const auto& p : parses) {
    const ParseKey key{p.msg_id, p.disc_index};
    if (!index.emplace(key, &p).second)
      throw StructuralError("duplicate parse for message '" + p.msg_id +
                            "' discourse " + std::to_string(p.disc_index));
  }
  return index;
}

std::vector<ParsedDiscourse> parses_for_message(
    const Message& msg,
    const std::map<ParseKey, const ParsedDiscourse*>& index) {
  std::vector<ParsedDiscourse> out;
  out.reserve(msg.discourses.size());
  for (std::size_t d = 0; d < msg.discourses.size(); ++d) {
    const auto it = index.find({msg.id, static_cast<int>(d)});
    if (it == index.end())
      throw StructuralError("message '" + msg.id + "': no parse for discourse " +
                            std::to_string(d));
    const ParsedDiscourse& p = *it->second;
    const Discourse& disc = msg.discourses[d];
    if (p.forms.size() != disc.tokens.size())
      throw StructuralError(
          "message '" + msg.id + "' discourse " + std::to_string(d) +
          ": parse has " + std::to_string(p.forms.size()) +
          " tokens, segmentation has " + std::to_string(disc.tokens.size()));
    for (std::size_t i = 0; i < p.forms.size(); ++i)
      if (p.forms[i] != disc.tokens[i].surface)
        throw StructuralError("message '" + msg.id + "' discourse " +
                              std::to_string(d) + ": token " +
                              std::to_string(i) + " is '" +
                              disc.tokens[i].surface + "' but the parse says '" +
                              p.forms[i] + "'");
    out.push_back(p);
  }
  return out;
}

// ---- embeddings ----

int EmbeddingTable::lookup(const std::string& word) const {
  const auto it = vocab.find(word);
  return it == vocab.end() ? unk_id : it->second;
}

EmbeddingTable load_embeddings(std::istream& is) {
  std::vector<std::string> words;
  std::vector<std::vector<double>> rows;
  std::unordered_map<std::string, int> vocab;
  int dim = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof())
      throw FormatError("embeddings line " + std::to_string(lineno) +
                        ": non-numeric value");
    if (vals.empty())
      throw FormatError("embeddings line " + std::to_string(lineno) +
                        ": no values");
    if (dim == 0)
      dim = static_cast<int>(vals.size());
    else if (static_cast<int>(vals.size()) != dim)
      throw FormatError("embeddings line " + std::to_string(lineno) +
                        ": expected " + std::to_string(dim) +
                        " values, got " + std::to_string(vals.size()));
    if (vocab.count(word)) continue;  // first occurrence wins
    vocab[word] = static_cast<int>(words.size());
    words.push_back(word);
    rows.push_back(std::move(vals));
  }
  if (words.empty()) throw FormatError("embeddings: no entries");

  EmbeddingTable table;
  table.dim = dim;
  table.vocab = std::move(vocab);
  const int v = static_cast<int>(words.size());
  table.matrix = Eigen::MatrixXd::Zero(v + 2, dim);
  for (int r = 0; r < v; ++r)
    for (int c = 0; c < dim; ++c)
      table.matrix(r, c) = rows[static_cast<std::size_t>(r)]
                               [static_cast<std::size_t>(c)];
  table.unk_id = v;      // zero vector for out-of-vocabulary words
  table.pad_id = v + 1;  // zero vector for padding positions
  return table;
}

EmbeddingTable load_embeddings_file(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  return load_embeddings(is);
}

// ---- encoding ----

namespace {

// Drop tokens at positions >= keep, then rewire the root if it fell off.
void truncate_parse(const ParsedDiscourse& p, int keep,
                    std::vector<std::pair<int, int>>* edges, int* root,
                    bool* reassigned) {
  edges->clear();
  std::vector<int> degree(static_cast<std::size_t>(keep), 0);
  for (const auto& [a, b] : p.edges) {
    if (a < keep && b < keep) {
      edges->push_back({a, b});
      ++degree[static_cast<std::size_t>(a)];
      ++degree[static_cast<std::size_t>(b)];
    }
  }
  if (p.root < keep) {
    *root = p.root;
    *reassigned = false;
    return;
  }
  int best = 0;
  for (int i = 1; i < keep; ++i)
    if (degree[static_cast<std::size_t>(i)] >
        degree[static_cast<std::size_t>(best)])
      best = i;
  *root = best;
  *reassigned = true;
}

}  // namespace

EncodedMessage encode_and_pad(const Message& msg,
                              const std::vector<ParsedDiscourse>& parses,
                              const EmbeddingTable& table,
                              const PadSpec& pad) {
  if (msg.discourses.empty())
    throw ValueError("encode_and_pad: message '" + msg.id +
                     "' has not been segmented");
  if (parses.size() != msg.discourses.size())
    throw StructuralError("encode_and_pad: message '" + msg.id + "' has " +
                          std::to_string(msg.discourses.size()) +
                          " discourses but " + std::to_string(parses.size()) +
                          " parses");
  if (pad.msg_len < 1 || pad.disc_len < 1)
    throw ConfigError("encode_and_pad: pad lengths must be positive");

  EncodedMessage enc;
  enc.id = msg.id;
  enc.label = msg.label;

  const std::vector<RawToken> msg_tokens = tokenize(msg.text);
  enc.msg_len = static_cast<int>(
      std::min<std::size_t>(msg_tokens.size(),
                            static_cast<std::size_t>(pad.msg_len)));
  enc.msg_ids.assign(static_cast<std::size_t>(pad.msg_len), table.pad_id);
  for (int i = 0; i < enc.msg_len; ++i)
    enc.msg_ids[static_cast<std::size_t>(i)] =
        table.lookup(msg_tokens[static_cast<std::size_t>(i)].text);

  for (std::size_t d = 0; d < msg.discourses.size(); ++d) {
    const Discourse& disc = msg.discourses[d];
    const ParsedDiscourse& parse = parses[d];
    if (parse.forms.size() != disc.tokens.size())
      throw StructuralError("encode_and_pad: message '" + msg.id +
                            "' discourse " + std::to_string(d) +
                            ": parse and segmentation token counts differ");
    EncodedDiscourse ed;
    ed.len = static_cast<int>(std::min<std::size_t>(
        disc.tokens.size(), static_cast<std::size_t>(pad.disc_len)));
    ed.ids.assign(static_cast<std::size_t>(pad.disc_len), table.pad_id);
    for (int i = 0; i < ed.len; ++i)
      ed.ids[static_cast<std::size_t>(i)] =
          table.lookup(disc.tokens[static_cast<std::size_t>(i)].surface);
    truncate_parse(parse, ed.len, &ed.edges, &ed.root, &ed.root_reassigned);
    enc.discourses.push_back(std::move(ed));
  }
  return enc;
}

// ---- split ----

Splits split_dataset(const std::vector<int>& labels, std::uint64_t seed) {
  if (labels.size() < 10)
    throw ValueError("split_dataset: need at least 10 instances, got " +
                     std::to_string(labels.size()));
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ValueError("split_dataset: label out of range at index " +
                       std::to_string(i));
    (labels[i] == 1 ? pos : neg).push_back(static_cast<int>(i));
  }
  std::mt19937_64 rng(seed);
  seeded_shuffle(neg, rng);
  seeded_shuffle(pos, rng);

  Splits s;
  for (auto* cls : {&neg, &pos}) {
    const std::size_t n = cls->size();
    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_dev = n / 10;
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train)
        s.train.push_back((*cls)[i]);
      else if (i < n_train + n_dev)
        s.dev.push_back((*cls)[i]);
      else
        s.test.push_back((*cls)[i]);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace psan
