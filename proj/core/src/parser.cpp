#include "difflog/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace difflog {

ParseError::ParseError(SourceSpan span, const std::string& message)
    : std::runtime_error(
          fmt::format("{}:{}: {}", span.line, span.column, message)),
      span_(span),
      message_(message) {}

bool ProgramModel::has_schema(TemplateKind kind) const {
  return std::find(schemas.begin(), schemas.end(), kind) != schemas.end();
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok {
  ident,
  integer,
  string,
  lparen,
  rparen,
  lbrace,
  rbrace,
  comma,
  colon,
  assign,
  define,
  not_equal,
  implies,
  plus,
  minus,
  bang,
  end,
};

struct Token {
  Tok kind;
  std::string text;
  SourceSpan span;
};

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::ident: return "identifier";
    case Tok::integer: return "integer";
    case Tok::string: return "string";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbrace: return "'{'";
    case Tok::rbrace: return "'}'";
    case Tok::comma: return "','";
    case Tok::colon: return "':'";
    case Tok::assign: return "'='";
    case Tok::define: return "':='";
    case Tok::not_equal: return "'!='";
    case Tok::implies: return "'=>'";
    case Tok::plus: return "'+'";
    case Tok::minus: return "'-'";
    case Tok::bang: return "'!'";
    case Tok::end: return "end of input";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t = next();
      out.push_back(t);
      if (t.kind == Tok::end) return out;
    }
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < text_.size() && peek() != '\n') advance();
      } else {
        return;
      }
    }
  }

  SourceSpan here() const { return {line_, col_, pos_, pos_}; }

  Token make(Tok kind, SourceSpan start, std::string text = {}) const {
    start.end = pos_;
    return {kind, std::move(text), start};
  }

  Token next() {
    const SourceSpan start = here();
    if (pos_ >= text_.size()) return make(Tok::end, start);
    const char c = peek();
    auto single = [&](Tok kind) {
      advance();
      return make(kind, start);
    };
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') {
        word.push_back(peek());
        advance();
      }
      return make(Tok::ident, start, std::move(word));
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::string digits;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        digits.push_back(peek());
        advance();
      }
      return make(Tok::integer, start, std::move(digits));
    }
    switch (c) {
      case '"': {
        advance();
        std::string value;
        for (;;) {
          if (pos_ >= text_.size() || peek() == '\n') {
            throw ParseError(start, "unterminated string literal");
          }
          char ch = peek();
          advance();
          if (ch == '"') break;
          if (ch == '\\') {
            if (pos_ >= text_.size()) {
              throw ParseError(start, "unterminated string literal");
            }
            ch = peek();
            advance();
            if (ch == 'n') ch = '\n';
          }
          value.push_back(ch);
        }
        return make(Tok::string, start, std::move(value));
      }
      case '(': return single(Tok::lparen);
      case ')': return single(Tok::rparen);
      case '{': return single(Tok::lbrace);
      case '}': return single(Tok::rbrace);
      case ',': return single(Tok::comma);
      case '+': return single(Tok::plus);
      case '-': return single(Tok::minus);
      case ':':
        advance();
        if (peek() == '=') {
          advance();
          return make(Tok::define, start);
        }
        return make(Tok::colon, start);
      case '=':
        advance();
        if (peek() == '>') {
          advance();
          return make(Tok::implies, start);
        }
        return make(Tok::assign, start);
      case '!':
        advance();
        if (peek() == '=') {
          advance();
          return make(Tok::not_equal, start);
        }
        return make(Tok::bang, start);
      default:
        break;
    }
    SourceSpan bad = start;
    bad.end = pos_ + 1;
    throw ParseError(bad, fmt::format("unexpected character '{}'",
                                      std::isprint(static_cast<unsigned char>(c))
                                          ? std::string(1, c)
                                          : fmt::format("\\x{:02x}",
                                                        static_cast<unsigned char>(c))));
  }
};

// ---------------------------------------------------------------------------
// Recursive-descent parser

bool is_constant_name(std::string_view name) {
  return !name.empty() && std::isupper(static_cast<unsigned char>(name[0]));
}

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(Lexer(text).run()) {}

  Program run() {
    Program program;
    while (!at(Tok::end)) {
      const Token& t = expect(Tok::ident, "declaration keyword");
      if (t.text == "type") {
        program.types.push_back(type_decl(t.span));
      } else if (t.text == "const") {
        program.consts.push_back(const_decl(t.span));
      } else if (t.text == "rel") {
        rel_decl(program, t.span);
      } else {
        throw ParseError(t.span, fmt::format("expected 'type', 'const' or "
                                             "'rel', found '{}'",
                                             t.text));
      }
    }
    return program;
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;

  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  bool at(Tok kind) const { return peek().kind == kind; }
  bool at_word(std::string_view word) const {
    return at(Tok::ident) && peek().text == word;
  }
  const Token& take() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

  const Token& expect(Tok kind, std::string_view what) {
    if (!at(kind)) {
      throw ParseError(peek().span, fmt::format("expected {}, found {}", what,
                                                describe(peek().kind)));
    }
    return take();
  }

  void expect_word(std::string_view word) {
    if (!at_word(word)) {
      throw ParseError(peek().span, fmt::format("expected '{}'", word));
    }
    take();
  }

  static SourceSpan join(SourceSpan from, const SourceSpan& to) {
    from.end = std::max(from.end, to.end);
    return from;
  }
  SourceSpan last_span() const { return tokens_[pos_ == 0 ? 0 : pos_ - 1].span; }

  TypeDecl type_decl(SourceSpan start) {
    TypeDecl decl;
    decl.name = expect(Tok::ident, "relation name").text;
    expect(Tok::lparen, "'('");
    if (!at(Tok::rparen)) {
      do {
        TypeParam p;
        p.name = expect(Tok::ident, "parameter name").text;
        expect(Tok::colon, "':'");
        p.type = expect(Tok::ident, "type name").text;
        decl.params.push_back(std::move(p));
      } while (at(Tok::comma) && (take(), true));
    }
    expect(Tok::rparen, "')'");
    decl.span = join(start, last_span());
    return decl;
  }

  std::int64_t integer_literal() {
    bool negative = false;
    if (at(Tok::minus)) {
      take();
      negative = true;
    }
    const Token& t = expect(Tok::integer, "integer");
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
    if (ec != std::errc{}) throw ParseError(t.span, "integer literal out of range");
    return negative ? -value : value;
  }

  ConstDecl const_decl(SourceSpan start) {
    ConstDecl decl;
    do {
      ConstEntry e;
      const Token& name = expect(Tok::ident, "constant name");
      if (!is_constant_name(name.text)) {
        throw ParseError(name.span, "constant names must start with an uppercase letter");
      }
      e.name = name.text;
      expect(Tok::assign, "'='");
      e.value = integer_literal();
      decl.entries.push_back(std::move(e));
    } while (at(Tok::comma) && (take(), true));
    decl.span = join(start, last_span());
    return decl;
  }

  Term primary_term() {
    if (at(Tok::ident)) {
      const Token& t = take();
      return is_constant_name(t.text) ? Term::constant(t.text)
                                      : Term::variable(t.text);
    }
    if (at(Tok::string)) return Term::string(take().text);
    if (at(Tok::integer) || at(Tok::minus)) return Term::number(integer_literal());
    throw ParseError(peek().span,
                     fmt::format("expected term, found {}", describe(peek().kind)));
  }

  Term term() {
    Term t = primary_term();
    while (at(Tok::plus)) {
      take();
      t = Term::sum(std::move(t), primary_term());
    }
    return t;
  }

  Atom atom() {
    Atom a;
    const Token& name = expect(Tok::ident, "predicate name");
    a.predicate = name.text;
    expect(Tok::lparen, "'('");
    if (!at(Tok::rparen)) {
      do {
        a.args.push_back(term());
      } while (at(Tok::comma) && (take(), true));
    }
    expect(Tok::rparen, "')'");
    a.span = join(name.span, last_span());
    return a;
  }

  void rel_decl(Program& program, SourceSpan start) {
    // rel name = {...}
    if (at(Tok::ident) && peek(1).kind == Tok::assign) {
      TableDecl table;
      table.predicate = take().text;
      take();
      expect(Tok::lbrace, "'{'");
      if (!at(Tok::rbrace)) {
        do {
          expect(Tok::lparen, "'('");
          std::vector<Term> tuple;
          if (!at(Tok::rparen)) {
            do {
              tuple.push_back(term());
            } while (at(Tok::comma) && (take(), true));
          }
          expect(Tok::rparen, "')'");
          table.tuples.push_back(std::move(tuple));
        } while (at(Tok::comma) && (take(), true));
      }
      expect(Tok::rbrace, "'}'");
      table.span = join(start, last_span());
      program.tables.push_back(std::move(table));
      return;
    }
    // rel violation(!r) = r := forall(...)
    if (at(Tok::ident) && peek(1).kind == Tok::lparen && peek(2).kind == Tok::bang) {
      program.constraints.push_back(constraint_decl(start));
      return;
    }
    RuleDecl rule;
    rule.head = atom();
    expect(Tok::assign, "'='");
    do {
      if (at(Tok::ident) && peek(1).kind == Tok::lparen) {
        rule.body.emplace_back(atom());
      } else {
        Term lhs = term();
        expect(Tok::not_equal, "'!='");
        Term rhs = term();
        rule.body.emplace_back(NotEqual{std::move(lhs), std::move(rhs)});
      }
    } while (at(Tok::comma) && (take(), true));
    rule.span = join(start, last_span());
    if (rule.head.predicate == "answer") {
      if (program.answer) throw ParseError(rule.span, "duplicate answer rule");
      program.answer = std::move(rule);
    } else {
      program.rules.push_back(std::move(rule));
    }
  }

  ConstraintDecl constraint_decl(SourceSpan start) {
    ConstraintDecl c;
    c.marker = take().text;
    expect(Tok::lparen, "'('");
    expect(Tok::bang, "'!'");
    c.result = expect(Tok::ident, "result variable").text;
    expect(Tok::rparen, "')'");
    expect(Tok::assign, "'='");
    const Token& bound = expect(Tok::ident, "result variable");
    if (bound.text != c.result) {
      throw ParseError(bound.span, fmt::format("expected '{}' to match the "
                                               "negated head variable",
                                               c.result));
    }
    expect(Tok::define, "':='");
    expect_word("forall");
    expect(Tok::lparen, "'('");
    do {
      c.quantified.push_back(expect(Tok::ident, "quantified variable").text);
    } while (at(Tok::comma) && (take(), true));
    expect(Tok::colon, "':'");
    do {
      c.premises.push_back(atom());
    } while ((at_word("and") || at(Tok::comma)) && (take(), true));
    expect(Tok::implies, "'=>'");
    const bool parenthesized = at(Tok::lparen);
    if (parenthesized) take();
    do {
      c.conclusions.push_back(atom());
    } while (at_word("or") && (take(), true));
    if (parenthesized) expect(Tok::rparen, "')'");
    expect(Tok::rparen, "')'");
    c.span = join(start, last_span());
    return c;
  }
};

// Declared predicates, arity checks, and constraint classification.
void validate(Program& program) {
  std::unordered_map<std::string, std::size_t> arity;
  for (const auto& t : program.types) {
    if (!arity.emplace(t.name, t.params.size()).second) {
      throw ParseError(t.span, fmt::format("duplicate declaration of '{}'", t.name));
    }
  }
  std::string fact_predicate;
  for (const auto& r : program.rules) {
    if (fact_predicate.empty()) fact_predicate = r.head.predicate;
  }
  auto check = [&](const Atom& a) {
    std::string name = a.predicate;
    if (name == "derive" && !arity.count(name) && !fact_predicate.empty()) {
      name = fact_predicate;
    }
    auto it = arity.find(name);
    if (it == arity.end()) {
      throw ParseError(a.span, fmt::format("undeclared predicate '{}'", a.predicate));
    }
    if (it->second != a.args.size()) {
      throw ParseError(a.span, fmt::format("'{}' expects {} argument(s), got {}",
                                           a.predicate, it->second, a.args.size()));
    }
  };
  for (const auto& table : program.tables) {
    auto it = arity.find(table.predicate);
    if (it == arity.end()) {
      throw ParseError(table.span,
                       fmt::format("undeclared predicate '{}'", table.predicate));
    }
    for (const auto& tuple : table.tuples) {
      if (tuple.size() != it->second) {
        throw ParseError(table.span,
                         fmt::format("'{}' expects {} argument(s), got {}",
                                     table.predicate, it->second, tuple.size()));
      }
    }
  }
  for (const auto& r : program.rules) {
    check(r.head);
    for (const auto& lit : r.body) {
      if (const auto* a = std::get_if<Atom>(&lit)) check(*a);
    }
  }
  if (program.answer) {
    for (const auto& lit : program.answer->body) {
      if (const auto* a = std::get_if<Atom>(&lit)) check(*a);
    }
  }
  for (auto& c : program.constraints) {
    bool over_templates = false;
    for (const auto& a : c.premises) {
      check(a);
      if (parse_template_kind(a.predicate)) over_templates = true;
    }
    for (const auto& a : c.conclusions) check(a);
    c.kind = over_templates ? ConstraintKind::rule_ic : ConstraintKind::result_ic;
  }
}

// ---------------------------------------------------------------------------
// Printer

void print_term(std::string& out, const Term& t) {
  switch (t.kind) {
    case TermKind::variable:
    case TermKind::constant:
      out += t.text;
      break;
    case TermKind::integer:
      out += std::to_string(t.integer);
      break;
    case TermKind::string:
      out += '"';
      for (char c : t.text) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
          out += "\\n";
          continue;
        }
        out += c;
      }
      out += '"';
      break;
    case TermKind::sum:
      print_term(out, t.operands.at(0));
      out += " + ";
      print_term(out, t.operands.at(1));
      break;
  }
}

void print_terms(std::string& out, const std::vector<Term>& terms) {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out += ", ";
    print_term(out, terms[i]);
  }
}

void print_atom(std::string& out, const Atom& a) {
  out += a.predicate;
  out += '(';
  print_terms(out, a.args);
  out += ')';
}

void print_rule(std::string& out, const RuleDecl& r) {
  out += "rel ";
  print_atom(out, r.head);
  out += " = ";
  for (std::size_t i = 0; i < r.body.size(); ++i) {
    if (i) out += ", ";
    if (const auto* a = std::get_if<Atom>(&r.body[i])) {
      print_atom(out, *a);
    } else {
      const auto& ne = std::get<NotEqual>(r.body[i]);
      print_term(out, ne.lhs);
      out += " != ";
      print_term(out, ne.rhs);
    }
  }
  out += '\n';
}

}  // namespace

Program parse_program(std::string_view text) {
  Program program = Parser(text).run();
  validate(program);
  return program;
}

std::string print_program(const Program& program) {
  std::string out;
  for (const auto& t : program.types) {
    out += "type " + t.name + "(";
    for (std::size_t i = 0; i < t.params.size(); ++i) {
      if (i) out += ", ";
      out += t.params[i].name + ": " + t.params[i].type;
    }
    out += ")\n";
  }
  for (const auto& c : program.consts) {
    out += "const ";
    for (std::size_t i = 0; i < c.entries.size(); ++i) {
      if (i) out += ", ";
      out += c.entries[i].name + " = " + std::to_string(c.entries[i].value);
    }
    out += '\n';
  }
  for (const auto& table : program.tables) {
    out += "rel " + table.predicate + " = {";
    for (std::size_t i = 0; i < table.tuples.size(); ++i) {
      if (i) out += ", ";
      out += '(';
      print_terms(out, table.tuples[i]);
      out += ')';
    }
    out += "}\n";
  }
  for (const auto& r : program.rules) print_rule(out, r);
  if (program.answer) print_rule(out, *program.answer);
  for (const auto& c : program.constraints) {
    out += "rel " + c.marker + "(!" + c.result + ") = " + c.result + " := forall(";
    for (std::size_t i = 0; i < c.quantified.size(); ++i) {
      if (i) out += ", ";
      out += c.quantified[i];
    }
    out += ": ";
    for (std::size_t i = 0; i < c.premises.size(); ++i) {
      if (i) out += " and ";
      print_atom(out, c.premises[i]);
    }
    out += " => ";
    for (std::size_t i = 0; i < c.conclusions.size(); ++i) {
      if (i) out += " or ";
      print_atom(out, c.conclusions[i]);
    }
    out += ")\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semantic lowering

namespace {

std::optional<Gender> gender_by_name(std::string_view name) {
  if (name == "MALE") return Gender::male;
  if (name == "FEMALE") return Gender::female;
  if (name == "NEUTRAL") return Gender::neutral;
  return std::nullopt;
}

class Compiler {
 public:
  explicit Compiler(const Program& program) : program_(program) {}

  ProgramModel run() {
    build_vocabulary();
    find_predicates();
    load_meta_tables();
    for (const auto& r : program_.rules) lower_rule(r);
    for (const auto& table : program_.tables) lower_template_facts(table);
    for (const auto& c : program_.constraints) lower_constraint(c);
    return std::move(model_);
  }

 private:
  const Program& program_;
  ProgramModel model_;
  std::unordered_map<std::string, std::int64_t> consts_;
  std::unordered_map<std::int64_t, RelationId> relation_by_value_;
  bool declared_relations_ = false;

  void build_vocabulary() {
    std::vector<std::pair<std::int64_t, std::string>> relations;
    for (const auto& decl : program_.consts) {
      for (const auto& e : decl.entries) {
        if (!consts_.emplace(e.name, e.value).second) {
          throw ParseError(decl.span, fmt::format("duplicate constant '{}'", e.name));
        }
        if (!gender_by_name(e.name)) relations.emplace_back(e.value, e.name);
      }
    }
    if (relations.empty()) {
      model_.vocabulary = Vocabulary::kinship();
      return;
    }
    declared_relations_ = true;
    std::sort(relations.begin(), relations.end());
    std::vector<std::string> names;
    std::vector<std::optional<RelationMeta>> meta;
    const auto& kinship = Vocabulary::kinship();
    for (std::size_t i = 0; i < relations.size(); ++i) {
      if (relations[i].first != static_cast<std::int64_t>(i)) {
        throw ParseError(program_.consts.front().span,
                         "relation constants must be numbered 0..n-1 without gaps");
      }
      names.push_back(canonical_relation_name(relations[i].second));
      const auto known = kinship.find(names.back());
      meta.push_back(known && kinship.has_meta(*known)
                         ? std::optional<RelationMeta>(kinship.meta(*known))
                         : std::nullopt);
      relation_by_value_[relations[i].first] =
          RelationId{static_cast<std::uint32_t>(i)};
    }
    model_.vocabulary = Vocabulary(std::move(names), std::move(meta));
  }

  void find_predicates() {
    for (const auto& r : program_.rules) {
      model_.fact_predicate = r.head.predicate;
      break;
    }
    if (program_.answer) {
      for (const auto& lit : program_.answer->body) {
        const auto* a = std::get_if<Atom>(&lit);
        if (!a) continue;
        if (a->args.size() == 2) model_.query_predicate = a->predicate;
        if (a->args.size() == 3 && program_.rules.empty()) {
          model_.fact_predicate = a->predicate;
        }
      }
    }
  }

  bool is_fact_atom(const Atom& a) const {
    return a.predicate == model_.fact_predicate ||
           (a.predicate == "derive" && a.args.size() == 3);
  }

  RelationId relation(const Term& t, const SourceSpan& span) const {
    const auto& vocab = model_.vocabulary;
    switch (t.kind) {
      case TermKind::constant: {
        if (declared_relations_) {
          auto it = consts_.find(t.text);
          if (it != consts_.end()) {
            auto rel = relation_by_value_.find(it->second);
            if (rel != relation_by_value_.end()) return rel->second;
          }
          throw ParseError(span, fmt::format("unknown relation constant '{}'", t.text));
        }
        if (auto r = vocab.find(t.text); r && vocab.contains(*r)) return *r;
        throw ParseError(span, fmt::format("unknown relation constant '{}'", t.text));
      }
      case TermKind::string:
        if (auto r = vocab.find(t.text); r && vocab.contains(*r)) return *r;
        throw ParseError(span, fmt::format("unknown relation '{}'", t.text));
      case TermKind::integer:
        if (t.integer >= 0 && static_cast<std::size_t>(t.integer) < vocab.size()) {
          return RelationId{static_cast<std::uint32_t>(t.integer)};
        }
        throw ParseError(span, fmt::format("relation index {} out of range", t.integer));
      default:
        throw ParseError(span, "expected a relation constant");
    }
  }

  std::int64_t integer_value(const Term& t, const SourceSpan& span) const {
    if (t.kind == TermKind::integer) return t.integer;
    if (t.kind == TermKind::constant) {
      auto it = consts_.find(t.text);
      if (it != consts_.end()) return it->second;
    }
    throw ParseError(span, "expected an integer");
  }

  Gender gender_value(const Term& t, const SourceSpan& span) const {
    if (t.kind == TermKind::constant) {
      if (auto g = gender_by_name(t.text)) return *g;
    }
    switch (integer_value(t, span)) {
      case 0: return Gender::male;
      case 1: return Gender::female;
      case 2: return Gender::neutral;
      default: throw ParseError(span, "unknown gender value");
    }
  }

  void load_meta_tables() {
    for (const auto& table : program_.tables) {
      if (table.predicate != "gender" && table.predicate != "gen") continue;
      for (const auto& tuple : table.tuples) {
        const RelationId r = relation(tuple.at(0), table.span);
        RelationMeta m = model_.vocabulary.has_meta(r) ? model_.vocabulary.meta(r)
                                                       : RelationMeta{};
        if (table.predicate == "gender") {
          m.gender = gender_value(tuple.at(1), table.span);
        } else {
          m.generation = static_cast<int>(integer_value(tuple.at(1), table.span));
        }
        model_.vocabulary.set_meta(r, m);
      }
    }
  }

  // Entity variables are numbered by first appearance in the body.
  struct VarNumbering {
    std::vector<std::string> names;
    std::uint8_t index(const std::string& name, const SourceSpan& span, bool add) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it != names.end()) return static_cast<std::uint8_t>(it - names.begin());
      if (!add) {
        throw ParseError(span, fmt::format("variable '{}' does not appear in the body", name));
      }
      if (names.size() >= 16) throw ParseError(span, "too many variables in rule");
      names.push_back(name);
      return static_cast<std::uint8_t>(names.size() - 1);
    }
  };

  std::uint8_t entity_var(VarNumbering& vars, const Term& t, const SourceSpan& span,
                          bool add) {
    if (t.kind != TermKind::variable) {
      throw ParseError(span, "entity arguments must be variables");
    }
    return vars.index(t.text, span, add);
  }

  void lower_rule(const RuleDecl& decl) {
    if (!is_fact_atom(decl.head) || decl.head.args.size() != 3) {
      throw ParseError(decl.head.span,
                       fmt::format("rules must derive '{}' atoms", model_.fact_predicate));
    }
    const Atom* schema = nullptr;
    std::vector<const Atom*> facts;
    std::vector<const NotEqual*> guards;
    for (const auto& lit : decl.body) {
      if (const auto* a = std::get_if<Atom>(&lit)) {
        if (parse_template_kind(a->predicate)) {
          if (schema) throw ParseError(a->span, "at most one template atom per rule");
          schema = a;
        } else if (is_fact_atom(*a)) {
          facts.push_back(a);
        } else {
          throw ParseError(a->span, fmt::format("unsupported body predicate '{}'",
                                                a->predicate));
        }
      } else {
        guards.push_back(&std::get<NotEqual>(lit));
      }
    }
    if (facts.empty()) throw ParseError(decl.span, "rule body has no relation atoms");

    // For schema rules the relation arguments are template variables that map
    // to placeholder relations 0..arity-1.
    std::vector<std::string> template_vars;
    std::optional<TemplateKind> kind;
    if (schema) {
      kind = parse_template_kind(schema->predicate);
      for (const auto& t : schema->args) {
        if (t.kind != TermKind::variable) {
          throw ParseError(schema->span, "template arguments must be variables");
        }
        template_vars.push_back(t.text);
      }
    }
    auto rel_of = [&](const Atom& a) -> RelationId {
      const Term& t = a.args.at(0);
      if (schema) {
        auto it = std::find(template_vars.begin(), template_vars.end(), t.text);
        if (t.kind != TermKind::variable || it == template_vars.end()) {
          throw ParseError(a.span, "relation argument must be a template variable");
        }
        return RelationId{static_cast<std::uint32_t>(it - template_vars.begin())};
      }
      return relation(t, a.span);
    };

    VarNumbering vars;
    Rule rule;
    for (const Atom* a : facts) {
      rule.body.push_back({rel_of(*a), entity_var(vars, a->args[1], a->span, true),
                           entity_var(vars, a->args[2], a->span, true)});
    }
    rule.head = {rel_of(decl.head), entity_var(vars, decl.head.args[1], decl.head.span, false),
                 entity_var(vars, decl.head.args[2], decl.head.span, false)};
    for (const NotEqual* g : guards) {
      rule.guards.push_back({entity_var(vars, g->lhs, decl.span, false),
                             entity_var(vars, g->rhs, decl.span, false)});
    }

    if (!schema) {
      model_.fixed_rules.push_back({std::move(rule), std::nullopt});
      return;
    }
    std::vector<RelationId> placeholders;
    for (std::size_t i = 0; i < template_vars.size(); ++i) {
      placeholders.push_back(RelationId{static_cast<std::uint32_t>(i)});
    }
    try {
      const RuleTemplate symbolic(*kind, placeholders);
      Rule expected = instantiate_template(symbolic, placeholders.size());
      expected.weight_slot.reset();
      if (!(expected == rule)) {
        throw ParseError(decl.span, fmt::format("rule does not have the shape of the "
                                                "'{}' template",
                                                to_string(*kind)));
      }
    } catch (const MalformedTemplate& e) {
      throw ParseError(schema->span, e.what());
    }
    if (!model_.has_schema(*kind)) model_.schemas.push_back(*kind);
  }

  void lower_template_facts(const TableDecl& table) {
    const auto kind = parse_template_kind(table.predicate);
    if (!kind) return;
    for (const auto& tuple : table.tuples) {
      std::vector<RelationId> args;
      for (const auto& t : tuple) args.push_back(relation(t, table.span));
      try {
        const RuleTemplate t(*kind, args);
        if (model_.has_schema(*kind)) {
          model_.fixed_rules.push_back(
              {instantiate_template(t, model_.vocabulary.size()), t});
        }
      } catch (const MalformedTemplate& e) {
        throw ParseError(table.span, e.what());
      }
    }
  }

  void lower_constraint(const ConstraintDecl& c) {
    if (c.kind == ConstraintKind::result_ic) {
      lower_result_constraint(c);
    } else {
      lower_rule_constraint(c);
    }
  }

  void lower_result_constraint(const ConstraintDecl& c) {
    if (c.quantified.size() != 2 || c.premises.size() != 1) {
      throw ParseError(c.span, "result constraints quantify two entities over one premise");
    }
    VarNumbering vars;
    vars.names = c.quantified;
    auto pattern = [&](const Atom& a) {
      if (!is_fact_atom(a)) {
        throw ParseError(a.span, fmt::format("expected a '{}' atom", model_.fact_predicate));
      }
      return AtomPattern{relation(a.args.at(0), a.span),
                         entity_var(vars, a.args.at(1), a.span, false),
                         entity_var(vars, a.args.at(2), a.span, false)};
    };
    ResultConstraint rc;
    rc.premise = pattern(c.premises.front());
    for (const auto& a : c.conclusions) rc.conclusions.push_back(pattern(a));
    model_.constraints.push_back({rc});
  }

  void lower_rule_constraint(const ConstraintDecl& c) {
    const Atom* over = nullptr;
    std::vector<const Atom*> meta;
    for (const auto& a : c.premises) {
      if (parse_template_kind(a.predicate)) {
        over = &a;
      } else {
        meta.push_back(&a);
      }
    }
    if (c.conclusions.size() != 1) {
      throw ParseError(c.span, "rule constraints have a single conclusion");
    }
    const Atom& concl = c.conclusions.front();
    auto position = [&](const Term& t, const SourceSpan& span) -> std::uint8_t {
      for (std::size_t i = 0; i < over->args.size(); ++i) {
        if (over->args[i] == t) return static_cast<std::uint8_t>(i);
      }
      throw ParseError(span, "meta argument must be a template variable");
    };
    RuleConstraint rc;
    rc.over = *parse_template_kind(over->predicate);
    if (concl.predicate == "gender" && meta.size() == 1 &&
        meta[0]->predicate == "gender" && meta[0]->args.at(1) == concl.args.at(1)) {
      rc.check = RuleCheck::gender_match;
      rc.positions = {position(meta[0]->args.at(0), meta[0]->span),
                      position(concl.args.at(0), concl.span), 0};
    } else if (concl.predicate == "gen" && meta.size() == 2 &&
               meta[0]->predicate == "gen" && meta[1]->predicate == "gen" &&
               concl.args.at(1).kind == TermKind::sum &&
               concl.args.at(1).operands.at(0) == meta[0]->args.at(1) &&
               concl.args.at(1).operands.at(1) == meta[1]->args.at(1)) {
      rc.check = RuleCheck::generation_sum;
      rc.positions = {position(meta[0]->args.at(0), meta[0]->span),
                      position(meta[1]->args.at(0), meta[1]->span),
                      position(concl.args.at(0), concl.span)};
    } else {
      throw ParseError(c.span, "unsupported rule constraint; expected a gender "
                               "match or generation sum over template arguments");
    }
    model_.constraints.push_back({rc});
  }
};

}  // namespace

ProgramModel compile_program(const Program& program) {
  return Compiler(program).run();
}

// ---------------------------------------------------------------------------
// Dataset, priors and KB files

namespace {

SourceSpan line_span(std::size_t line, std::size_t begin, std::size_t length) {
  return {line, 1, begin, begin + length};
}

// Calls fn(line_number, byte_offset, line_text) for every line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line = 1;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view content = text.substr(begin, end - begin);
    if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
    fn(line, begin, content);
    if (end == text.size()) break;
    begin = end + 1;
    ++line;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_comment(std::string_view s) {
  const auto hash = s.find('#');
  const auto slashes = s.find("//");
  return s.substr(0, std::min(hash, slashes));
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Parses "name(x, y)" returning {name, x, y}.
std::optional<std::array<std::string, 3>> parse_binary_atom(std::string_view s) {
  s = trim(s);
  const auto open = s.find('(');
  const auto close = s.rfind(')');
  if (open == std::string_view::npos || close != s.size() - 1 || close < open) {
    return std::nullopt;
  }
  const std::string_view inner = s.substr(open + 1, close - open - 1);
  const auto comma = inner.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  std::array<std::string, 3> out{std::string(trim(s.substr(0, open))),
                                 std::string(trim(inner.substr(0, comma))),
                                 std::string(trim(inner.substr(comma + 1)))};
  for (const auto& part : out) {
    if (part.empty() || part.find_first_of(",() \t") != std::string::npos) {
      return std::nullopt;
    }
  }
  return out;
}

}  // namespace

std::vector<Sample> parse_dataset(std::string_view text, const Vocabulary& vocab) {
  std::vector<Sample> out;
  for_each_line(text, [&](std::size_t line, std::size_t begin, std::string_view content) {
    if (trim(content).empty()) return;
    const SourceSpan span = line_span(line, begin, content.size());
    auto fail = [&](const std::string& message) -> void {
      throw ParseError(span, fmt::format("dataset line {}: {}", line, message));
    };
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid JSON: ") + e.what());
    }
    auto rel = [&](const nlohmann::json& j) -> RelationId {
      if (!j.is_string()) fail("relation must be a string");
      const auto r = vocab.find(j.get<std::string>());
      if (!r || (!vocab.contains(*r) && *r != vocab.not_applicable())) {
        fail(fmt::format("unknown relation '{}'", j.get<std::string>()));
      }
      return *r;
    };
    auto entity = [&](const nlohmann::json& j) -> std::string {
      if (!j.is_string() || j.get<std::string>().empty()) {
        fail("entity must be a nonempty string");
      }
      return j.get<std::string>();
    };
    Sample sample;
    if (!record.is_object()) fail("record must be a JSON object");
    if (!record.contains("facts") || !record["facts"].is_array()) fail("missing 'facts' array");
    for (const auto& f : record["facts"]) {
      if (!f.is_array() || f.size() < 3 || f.size() > 4) {
        fail("fact must be [relation, subject, object(, probability)]");
      }
      SampleFact fact{rel(f[0]), entity(f[1]), entity(f[2]), 1.0};
      if (f.size() == 4) {
        if (!f[3].is_number()) fail("fact probability must be a number");
        fact.prob = f[3].get<double>();
        if (!(fact.prob >= 0.0 && fact.prob <= 1.0)) fail("fact probability outside [0, 1]");
      }
      sample.facts.push_back(std::move(fact));
    }
    if (!record.contains("query") || !record["query"].is_array() ||
        record["query"].size() != 2) {
      fail("'query' must be [subject, object]");
    }
    sample.query_sub = entity(record["query"][0]);
    sample.query_obj = entity(record["query"][1]);
    if (!record.contains("answer")) fail("missing 'answer'");
    sample.answer = rel(record["answer"]);
    if (!vocab.contains(sample.answer)) fail("answer must be a relation in the vocabulary");
    sample.k = static_cast<int>(sample.facts.size());
    if (record.contains("k")) {
      if (!record["k"].is_number_integer()) fail("'k' must be an integer");
      sample.k = record["k"].get<int>();
    }
    out.push_back(std::move(sample));
  });
  return out;
}

std::string format_sample(const Sample& sample, const Vocabulary& vocab) {
  nlohmann::json facts = nlohmann::json::array();
  for (const auto& f : sample.facts) {
    nlohmann::json fact = {vocab.name(f.relation), f.sub, f.obj};
    if (f.prob != 1.0) fact.push_back(f.prob);
    facts.push_back(std::move(fact));
  }
  nlohmann::json record;
  record["facts"] = std::move(facts);
  record["query"] = {sample.query_sub, sample.query_obj};
  record["answer"] = vocab.name(sample.answer);
  record["k"] = sample.k;
  return record.dump();
}

RulePriors parse_rule_priors(std::string_view text, const Vocabulary& vocab) {
  RulePriors out;
  for_each_line(text, [&](std::size_t line, std::size_t begin, std::string_view raw) {
    const std::string_view content = trim(strip_comment(raw));
    if (content.empty()) return;
    const SourceSpan span = line_span(line, begin, raw.size());
    auto fail = [&](const std::string& message) -> void {
      throw ParseError(span, fmt::format("priors line {}: {}", line, message));
    };
    auto rel = [&](std::string_view name) -> RelationId {
      const auto r = vocab.find(name);
      if (!r || !vocab.contains(*r)) fail(fmt::format("unknown relation '{}'", name));
      return *r;
    };
    std::optional<RuleTemplate> key;
    double weight = 1.0;

    const auto arrow = content.find("←") != std::string_view::npos
                           ? content.find("←")
                           : content.find("<-");
    if (arrow != std::string_view::npos) {
      // Exported rule line: "<weight>  head(a,c) ← r1(a,b) ∧ r2(b,c)".
      const std::size_t arrow_len = content.substr(arrow, 3) == "←" ? 3 : 2;
      const auto lhs = split_ws(content.substr(0, arrow));
      if (lhs.size() != 2) fail("expected '<weight> <head atom> ←'");
      const auto w = parse_double(lhs[0]);
      if (!w) fail(fmt::format("invalid weight '{}'", lhs[0]));
      weight = *w;
      std::string body(content.substr(arrow + arrow_len));
      for (std::string_view sep : {"∧", "&"}) {
        for (auto p = body.find(sep); p != std::string::npos; p = body.find(sep)) {
          body.replace(p, sep.size(), ";");
        }
      }
      const auto semi = body.find(';');
      if (semi == std::string::npos) fail("expected two body atoms joined by '∧'");
      const auto head = parse_binary_atom(lhs[1]);
      const auto b1 = parse_binary_atom(std::string_view(body).substr(0, semi));
      const auto b2 = parse_binary_atom(std::string_view(body).substr(semi + 1));
      if (!head || !b1 || !b2) fail("malformed rule atoms");
      const auto& [h, hx, hz] = *head;
      const auto& [r1, x1, y1] = *b1;
      const auto& [r2, y2, z2] = *b2;
      if (hx != x1 || y1 != y2 || z2 != hz || hx == y1 || hx == hz || y1 == hz) {
        fail("rule is not a composition r3(a,c) ← r1(a,b) ∧ r2(b,c)");
      }
      key = RuleTemplate::composite(rel(r1), rel(r2), rel(h));
    } else {
      const auto words = split_ws(content);
      if (words.front() == "compose") {
        if (words.size() != 4) fail("expected 'compose <r1> <r2> <r3>'");
        key = RuleTemplate::composite(rel(words[1]), rel(words[2]), rel(words[3]));
      } else {
        const auto kind = parse_template_kind(words.front());
        if (!kind) fail(fmt::format("unknown template kind '{}'", words.front()));
        const std::size_t arity = template_arity(*kind);
        if (words.size() != arity + 2) {
          fail(fmt::format("expected '{}' followed by {} relation(s) and a weight",
                           words.front(), arity));
        }
        std::vector<RelationId> args;
        for (std::size_t i = 1; i <= arity; ++i) args.push_back(rel(words[i]));
        key = RuleTemplate(*kind, args);
        const auto w = parse_double(words.back());
        if (!w) fail(fmt::format("invalid weight '{}'", words.back()));
        weight = *w;
      }
    }
    if (weight < 0.0) fail("weights must be nonnegative");
    if (!out.emplace(*key, weight).second) {
      fail(fmt::format("duplicate entry for {}", format_template(*key, vocab)));
    }
  });
  return out;
}

std::vector<SampleFact> parse_kb(std::string_view text, const Vocabulary& vocab) {
  std::vector<SampleFact> out;
  for_each_line(text, [&](std::size_t line, std::size_t begin, std::string_view raw) {
    std::string_view content = trim(strip_comment(raw));
    if (content.empty()) return;
    const SourceSpan span = line_span(line, begin, raw.size());
    auto fail = [&](const std::string& message) -> void {
      throw ParseError(span, fmt::format("kb line {}: {}", line, message));
    };
    double prob = 1.0;
    if (const auto sep = content.find("::"); sep != std::string_view::npos) {
      const auto p = parse_double(content.substr(0, sep));
      if (!p || *p < 0.0 || *p > 1.0) fail("probability must be a number in [0, 1]");
      prob = *p;
      content = content.substr(sep + 2);
    }
    const auto atom = parse_binary_atom(content);
    if (!atom) fail("expected 'relation(subject, object)'");
    const auto r = vocab.find((*atom)[0]);
    if (!r || (!vocab.contains(*r) && *r != vocab.not_applicable())) {
      fail(fmt::format("unknown relation '{}'", (*atom)[0]));
    }
    out.push_back({*r, (*atom)[1], (*atom)[2], prob});
  });
  return out;
}

}  // namespace difflog
