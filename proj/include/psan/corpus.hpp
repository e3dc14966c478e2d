#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "psan/errors.hpp"

namespace psan {

// ---- tokens and messages ----

struct RawToken {
  std::string text;  // lowercased surface
  std::size_t begin = 0, end = 0;  // byte span in the original string
  bool is_punct = false;
};

// Lowercased whitespace-and-punctuation split: runs of word characters become
// tokens, every punctuation character is its own token.
std::vector<RawToken> tokenize(const std::string& text);

struct Token {
  std::string surface;  // lowercased
  int index = 0;        // position within the discourse
  int vocab_id = -1;    // filled in against an embedding table
  std::size_t begin = 0, end = 0;
};

struct Discourse {
  std::size_t begin = 0, end = 0;  // byte span in the message text
  std::vector<Token> tokens;
};

struct Message {
  std::string id;
  std::string text;
  int label = 0;  // 1 when the message carries a causal explanation
  std::vector<Discourse> discourses;
};

// One message per line: {"id": ..., "text": ..., "label": 0|1}.
std::vector<Message> load_messages_jsonl(std::istream& is);
std::vector<Message> load_messages_jsonl_file(const std::string& path);

// ---- connectives ----

// The discourse-boundary vocabulary: multiword connective phrases that open a
// new segment, plus "removed" simple connectives that never split (the two
// sets must not overlap). Loaded from a plain text file, one phrase per line,
// a leading '-' marking a removed word, '#' starting a comment.
class ConnectiveList {
 public:
  void add(const std::string& phrase);
  void add_removed(const std::string& word);

  bool is_removed(const std::string& word) const;
  std::size_t active_count() const { return active_.size(); }
  std::size_t removed_count() const { return removed_.size(); }

  // Length in tokens of the longest active connective starting at tokens[i],
  // or 0 when none matches.
  std::size_t match(const std::vector<RawToken>& tokens, std::size_t i) const;

 private:
  std::vector<std::vector<std::string>> active_;  // longest first
  std::set<std::string> active_keys_;
  std::set<std::string> removed_;
};

ConnectiveList load_connectives(std::istream& is);
ConnectiveList load_connectives_file(const std::string& path);

// Split a message into discourses at punctuation makers (, . ! ?) and at
// active connectives. Makers are dropped; a connective stays with the
// segment it opens. Empty segments vanish; if nothing survives, the whole
// token sequence is one discourse.
std::vector<Discourse> segment_message(const std::string& text,
                                       const ConnectiveList& connectives);

// ---- dependency parses ----

struct ParsedDiscourse {
  std::string msg_id;   // from "# msg_id = <id> disc = <n>" comments
  int disc_index = 0;
  std::vector<std::string> forms;            // lowercased token forms
  std::vector<std::pair<int, int>> edges;    // undirected, first < second
  int root = 0;
  bool connected = true;  // root reaches every non-punctuation token
};

// Ten-column CoNLL-U. Multiword ranges and empty nodes are skipped; every
// sentence must have exactly one root and no token heading itself.
std::vector<ParsedDiscourse> load_conllu(std::istream& is);
std::vector<ParsedDiscourse> load_conllu_file(const std::string& path);

using ParseKey = std::pair<std::string, int>;
std::map<ParseKey, const ParsedDiscourse*> index_parses(
    const std::vector<ParsedDiscourse>& parses);

// The parses for one segmented message, in discourse order. Throws when a
// discourse has no parse or the parse's tokens disagree with segmentation.
std::vector<ParsedDiscourse> parses_for_message(
    const Message& msg,
    const std::map<ParseKey, const ParsedDiscourse*>& index);

// ---- embeddings ----

struct EmbeddingTable {
  int dim = 0;
  std::unordered_map<std::string, int> vocab;
  Eigen::MatrixXd matrix;  // vocab rows plus a zero unknown row and pad row
  int unk_id = 0, pad_id = 0;

  int lookup(const std::string& word) const;
};

// "<word> <v1> ... <vdim>" per line; the dimension is fixed by the first
// line. Two zero rows for unknown words and padding are appended.
EmbeddingTable load_embeddings(std::istream& is);
EmbeddingTable load_embeddings_file(const std::string& path);

// ---- model-ready encoding ----

struct PadSpec {
  int msg_len = 100;
  int disc_len = 30;
};

struct EncodedDiscourse {
  std::vector<int> ids;  // padded to disc_len with the pad id
  int len = 0;           // real token count after truncation
  std::vector<std::pair<int, int>> edges;  // over the surviving tokens
  int root = 0;
  bool root_reassigned = false;  // truncation removed the parse root
};

struct EncodedMessage {
  std::string id;
  int label = 0;
  std::vector<int> msg_ids;  // padded to msg_len
  int msg_len = 0;           // real token count after truncation
  std::vector<EncodedDiscourse> discourses;
};

// Turn a segmented message plus its parses into padded index sequences and
// per-discourse graphs. Sequences truncate before padding; edges into
// truncated tokens are dropped, and a truncated-away root moves to the
// highest-degree surviving token (lowest index on ties) with a flag set.
EncodedMessage encode_and_pad(const Message& msg,
                              const std::vector<ParsedDiscourse>& parses,
                              const EmbeddingTable& table,
                              const PadSpec& pad = {});

// ---- dataset split ----

struct Splits {
  std::vector<int> train, dev, test;
};

// Deterministic stratified 80/10/10 over instance labels. Requires at least
// ten instances; per class the counts are floor(.8 n) / floor(.1 n) / rest.
Splits split_dataset(const std::vector<int>& labels, std::uint64_t seed);

}  // namespace psan
