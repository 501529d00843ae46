#include "pfm/sexpr.hpp"

#include "pfm/error.hpp"

#include <cctype>

namespace pfm {

SExpr SExpr::symbol(std::string text) { return SExpr{Kind::Symbol, std::move(text), {}}; }
SExpr SExpr::string(std::string text) { return SExpr{Kind::String, std::move(text), {}}; }
SExpr SExpr::list(std::vector<SExpr> items) { return SExpr{Kind::List, {}, std::move(items)}; }

namespace {

void write(const SExpr& e, std::string& out) {
  switch (e.kind) {
    case SExpr::Kind::Symbol:
      out += e.text;
      break;
    case SExpr::Kind::String:
      out += '"';
      for (char c : e.text) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      out += '"';
      break;
    case SExpr::Kind::List:
      out += '(';
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) out += ' ';
        write(e.items[i], out);
      }
      out += ')';
      break;
  }
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  SExpr read_all() {
    SExpr e = read();
    skip_space();
    if (pos_ != text_.size()) bad("trailing input");
    return e;
  }

 private:
  [[noreturn]] void bad(const std::string& what) const {
    fail(ErrorCode::MalformedWire, what + " at offset " + std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  SExpr read() {
    skip_space();
    if (pos_ >= text_.size()) bad("unexpected end");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      SExpr list = SExpr::list();
      for (;;) {
        skip_space();
        if (pos_ >= text_.size()) bad("unterminated list");
        if (text_[pos_] == ')') {
          ++pos_;
          return list;
        }
        list.items.push_back(read());
      }
    }
    if (c == ')') bad("unexpected ')'");
    if (c == '"') {
      ++pos_;
      std::string s;
      for (;;) {
        if (pos_ >= text_.size()) bad("unterminated string");
        char d = text_[pos_++];
        if (d == '"') break;
        if (d == '\\') {
          if (pos_ >= text_.size()) bad("dangling escape");
          d = text_[pos_++];
        }
        s += d;
      }
      return SExpr::string(std::move(s));
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')' && text_[pos_] != '"')
      ++pos_;
    return SExpr::symbol(std::string(text_.substr(start, pos_ - start)));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_text(const SExpr& expr) {
  std::string out;
  write(expr, out);
  return out;
}

SExpr parse_sexpr(std::string_view text) { return Reader(text).read_all(); }

}  // namespace pfm
