#include "gformula/formula.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "gformula/errors.hpp"

namespace gformula {

namespace {

struct Lexer {
  const std::string& text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  bool accept(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c, const char* what) {
    if (!accept(c))
      throw ParseError(std::string("expected '") + c + "' (" + what + ") at position " +
                       std::to_string(pos) + " in formula");
  }
  std::string ident() {
    skip_ws();
    std::size_t b = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_' ||
            text[pos] == '.' || text[pos] == '='))
      ++pos;
    if (b == pos)
      throw ParseError("expected identifier at position " + std::to_string(pos) + " in formula");
    return text.substr(b, pos - b);
  }
  double number() {
    skip_ws();
    char* end = nullptr;
    double v = std::strtod(text.c_str() + pos, &end);
    if (end == text.c_str() + pos)
      throw ParseError("expected number at position " + std::to_string(pos) + " in formula");
    pos = static_cast<std::size_t>(end - text.c_str());
    return v;
  }
};

std::string format_knot(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

Term parse_term(Lexer& lx) {
  const std::string name = lx.ident();
  if (lx.peek() != '(') return VariableRef{name};
  lx.expect('(', "function call");
  if (name == "pow") {
    const std::string var = lx.ident();
    lx.expect(',', "pow(var, exponent)");
    const double e = lx.number();
    lx.expect(')', "pow(var, exponent)");
    if (e != std::floor(e) || e < 2)
      throw ParseError("pow exponent must be an integer >= 2, got '" + format_knot(e) + "'");
    return Power{var, static_cast<int>(e)};
  }
  if (name == "factor") {
    const std::string var = lx.ident();
    lx.expect(')', "factor(var)");
    return FactorExpand{var};
  }
  if (name == "rcs") {
    const std::string var = lx.ident();
    std::vector<double> knots;
    while (lx.accept(',')) knots.push_back(lx.number());
    lx.expect(')', "rcs(var, knot, ...)");
    if (knots.size() < 3) throw ParseError("rcs requires at least 3 knots");
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (!(knots[i - 1] < knots[i])) throw ParseError("rcs knots must be strictly increasing");
    return SplineBasis{var, std::move(knots)};
  }
  throw ParseError("unknown function '" + name + "' at position " + std::to_string(lx.pos) +
                   "; supported transforms: pow, factor, rcs");
}

}  // namespace

const std::string& term_variable(const Term& t) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, t);
}

ModelFormula parse_formula(const std::string& text) {
  Lexer lx{text};
  ModelFormula f;
  f.response = lx.ident();
  lx.expect('~', "response ~ terms");
  if (lx.eof()) throw ParseError("empty right-hand side in formula");
  // "response ~ 1" is the intercept-only model.
  if (lx.peek() == '1') {
    ++lx.pos;
    if (!lx.eof()) throw ParseError("unexpected input after '1' in intercept-only formula");
    return f;
  }
  f.terms.push_back(parse_term(lx));
  while (lx.accept('+')) f.terms.push_back(parse_term(lx));
  if (!lx.eof())
    throw ParseError("unexpected input at position " + std::to_string(lx.pos) + " in formula");
  // Normalization: collapse duplicate terms, keeping first-seen order.
  std::vector<Term> unique;
  for (auto& t : f.terms)
    if (std::find(unique.begin(), unique.end(), t) == unique.end()) unique.push_back(std::move(t));
  f.terms = std::move(unique);
  return f;
}

std::string print_formula(const ModelFormula& f) {
  std::ostringstream os;
  os << f.response << " ~ ";
  if (f.terms.empty()) {
    os << "1";
    return os.str();
  }
  bool first = true;
  for (const auto& t : f.terms) {
    if (!first) os << " + ";
    first = false;
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, VariableRef>) {
            os << x.name;
          } else if constexpr (std::is_same_v<T, Power>) {
            os << "pow(" << x.name << ", " << x.exponent << ")";
          } else if constexpr (std::is_same_v<T, FactorExpand>) {
            os << "factor(" << x.name << ")";
          } else {
            os << "rcs(" << x.name;
            for (double k : x.knots) os << ", " << format_knot(k);
            os << ")";
          }
        },
        t);
  }
  return os.str();
}

std::vector<double> rcs_basis(double x, const std::vector<double>& knots) {
  const std::size_t m = knots.size();
  if (m < 3) throw ArgumentError("rcs_basis requires at least 3 knots");
  for (std::size_t i = 1; i < m; ++i)
    if (!(knots[i - 1] < knots[i]))
      throw ArgumentError("rcs_basis knots must be strictly increasing");
  const double km = knots[m - 1];
  const double km1 = knots[m - 2];
  const double norm = (km - knots[0]) * (km - knots[0]);
  auto cube_plus = [](double v) { return v > 0 ? v * v * v : 0.0; };
  std::vector<double> out(m - 2);
  for (std::size_t j = 0; j < m - 2; ++j) {
    const double kj = knots[j];
    out[j] = (cube_plus(x - kj) - cube_plus(x - km1) * (km - kj) / (km - km1) +
              cube_plus(x - km) * (km1 - kj) / (km - km1)) /
             norm;
  }
  return out;
}

std::vector<std::string> DesignSchema::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

DesignSchema compile_design(const ModelFormula& f, const Table& table,
                            const LevelRegistry& levels, const std::vector<std::size_t>& rows) {
  DesignSchema schema;
  schema.response = f.response;
  schema.columns.push_back({DesignSchema::Column::Kind::Intercept, "", 0, {}, 0, {}, 0, "(Intercept)"});
  for (const auto& t : f.terms) {
    const std::string& var = term_variable(t);
    const std::size_t col = table.column(var);  // throws NameError listing columns
    const bool categorical = levels.has(var);
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, VariableRef>) {
            if (categorical)
              throw TypeError("categorical variable '" + var +
                              "' used as numeric; wrap it in factor()");
            schema.columns.push_back(
                {DesignSchema::Column::Kind::Var, var, 0, {}, 0, {}, 0, var});
          } else if constexpr (std::is_same_v<T, Power>) {
            if (categorical)
              throw TypeError("categorical variable '" + var + "' used as numeric in pow()");
            schema.columns.push_back({DesignSchema::Column::Kind::Pow, var, x.exponent, {}, 0, {},
                                      0, "pow(" + var + ", " + std::to_string(x.exponent) + ")"});
          } else if constexpr (std::is_same_v<T, FactorExpand>) {
            Levels lv;
            if (categorical) {
              lv = levels.get(var);
            } else {
              // Distinct observed values over the fitting rows, ordered
              // lexicographically over their rendered form.
              std::set<double> seen;
              for (auto r : rows) seen.insert(table.get(r, col));
              std::vector<std::pair<std::string, double>> lab;
              for (double v : seen) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%g", v);
                lab.emplace_back(buf, v);
              }
              std::sort(lab.begin(), lab.end());
              lv.match = Levels::Match::Valued;
              for (auto& [s, v] : lab) {
                lv.labels.push_back(s);
                lv.values.push_back(v);
              }
            }
            if (lv.size() < 2)
              throw TypeError("factor(" + var + ") needs at least 2 levels, found " +
                              std::to_string(lv.size()));
            // One indicator per non-reference level (first level is reference).
            for (std::size_t l = 1; l < lv.size(); ++l)
              schema.columns.push_back({DesignSchema::Column::Kind::Factor, var, 0, lv, l, {}, 0,
                                        var + "=" + lv.labels[l]});
          } else {
            if (categorical)
              throw TypeError("categorical variable '" + var + "' used as numeric in rcs()");
            for (std::size_t b = 0; b + 2 < x.knots.size(); ++b)
              schema.columns.push_back({DesignSchema::Column::Kind::Spline, var, 0, {}, 0, x.knots,
                                        b, var + ".rcs" + std::to_string(b + 1)});
          }
        },
        t);
  }
  return schema;
}

RowBuilder::RowBuilder(const DesignSchema& schema, const Table& table) {
  width_ = schema.width();
  ops_.reserve(schema.columns.size());
  for (const auto& c : schema.columns) {
    Op op;
    op.kind = c.kind;
    if (c.kind != DesignSchema::Column::Kind::Intercept) op.col = table.column(c.variable);
    op.exponent = c.exponent;
    op.levels = c.levels;
    op.level = c.level;
    op.knots = c.knots;
    op.basis = c.basis;
    ops_.push_back(std::move(op));
  }
}

void RowBuilder::fill(const Table& table, std::size_t row, double* out) const {
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    switch (op.kind) {
      case DesignSchema::Column::Kind::Intercept:
        out[i] = 1.0;
        break;
      case DesignSchema::Column::Kind::Var:
        out[i] = table.get(row, op.col);
        break;
      case DesignSchema::Column::Kind::Pow: {
        double v = table.get(row, op.col);
        double r = v;
        for (int e = 1; e < op.exponent; ++e) r *= v;
        out[i] = r;
        break;
      }
      case DesignSchema::Column::Kind::Factor: {
        auto l = op.levels.level_of(table.get(row, op.col));
        out[i] = (l && *l == op.level) ? 1.0 : 0.0;
        break;
      }
      case DesignSchema::Column::Kind::Spline: {
        out[i] = rcs_basis(table.get(row, op.col), op.knots)[op.basis];
        break;
      }
    }
  }
}

DesignMatrix build_design(const DesignSchema& schema, const Table& table,
                          const std::vector<std::size_t>& rows) {
  RowBuilder rb(schema, table);
  DesignMatrix dm;
  dm.column_names = schema.column_names();
  dm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rb.width()));
  dm.response.resize(static_cast<Eigen::Index>(rows.size()));
  const std::size_t ycol = table.column(schema.response);
  std::vector<double> buf(rb.width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rb.fill(table, rows[i], buf.data());
    for (std::size_t j = 0; j < buf.size(); ++j)
      dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
    dm.response(static_cast<Eigen::Index>(i)) = table.get(rows[i], ycol);
  }
  return dm;
}

}  // namespace gformula
