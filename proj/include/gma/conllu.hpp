#ifndef GMA_CONLLU_HPP
#define GMA_CONLLU_HPP

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gma {

struct ParseToken {
  int index = 0;  // 1-based sentence position
  std::string form;
  int head = 0;  // 0 = root
};

/// One sentence's dependency tree. Exactly one root, no self-heads, heads in
/// range and acyclic.
struct DependencyParse {
  std::vector<ParseToken> tokens;
};

class ConlluError : public std::runtime_error {
 public:
  ConlluError(int line, const std::string& what)
      : std::runtime_error("conllu line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline void validate_parse(const DependencyParse& p, int line) {
  int n = static_cast<int>(p.tokens.size());
  int roots = 0;
  for (const ParseToken& t : p.tokens) {
    if (t.head < 0 || t.head > n)
      throw ConlluError(line, "head index " + std::to_string(t.head) +
                                  " out of range");
    if (t.head == t.index) throw ConlluError(line, "token is its own head");
    if (t.head == 0) ++roots;
  }
  if (roots != 1)
    throw ConlluError(line, "expected exactly one root, found " +
                                std::to_string(roots));
  // cycle check: every token must reach the root
  for (const ParseToken& t : p.tokens) {
    int cur = t.index, steps = 0;
    while (cur != 0) {
      cur = p.tokens[cur - 1].head;
      if (++steps > n) throw ConlluError(line, "cyclic head chain");
    }
  }
}

}  // namespace detail

/// Reads CoNLL-U text, consuming only the ID, FORM and HEAD columns.
/// Multiword ranges ("3-4") and empty nodes ("3.1") are skipped. Sentences
/// are separated by blank lines; '#' lines are comments.
inline std::vector<DependencyParse> read_conllu(const std::string& text) {
  std::vector<DependencyParse> parses;
  DependencyParse cur;
  int sentence_start_line = 1;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      detail::validate_parse(cur, sentence_start_line);
      parses.push_back(std::move(cur));
      cur = {};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      sentence_start_line = lineno + 1;
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> cols;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string::npos
                                          ? std::string::npos
                                          : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos)
      continue;  // multiword range / empty node
    if (cols.size() < 7) throw ConlluError(lineno, "missing HEAD column");
    ParseToken tok;
    try {
      tok.index = std::stoi(id);
      tok.head = std::stoi(cols[6]);
    } catch (const std::exception&) {
      throw ConlluError(lineno, "non-numeric ID or HEAD");
    }
    tok.form = cols[1];
    if (tok.index != static_cast<int>(cur.tokens.size()) + 1)
      throw ConlluError(lineno, "non-sequential token index");
    cur.tokens.push_back(std::move(tok));
  }
  ++lineno;
  flush();
  return parses;
}

}  // namespace gma

#endif  // GMA_CONLLU_HPP
