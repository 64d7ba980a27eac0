#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "gformula/table.hpp"

namespace gformula {

// Model-statement terms.  Grammar: response "~" term ("+" term)* with
// term := ident | pow(ident, p) | factor(ident) | rcs(ident, knot, knot, ...).
// An intercept-only model is written as "response ~ 1".
struct VariableRef {
  std::string name;
  bool operator==(const VariableRef&) const = default;
};
struct Power {
  std::string name;
  int exponent;  // >= 2, exponent 1 is VariableRef
  bool operator==(const Power&) const = default;
};
struct FactorExpand {
  std::string name;
  bool operator==(const FactorExpand&) const = default;
};
struct SplineBasis {
  std::string name;
  std::vector<double> knots;  // >= 3, strictly increasing
  bool operator==(const SplineBasis&) const = default;
};
using Term = std::variant<VariableRef, Power, FactorExpand, SplineBasis>;

struct ModelFormula {
  std::string response;
  std::vector<Term> terms;  // normalized: duplicates collapsed, first-seen order
  bool operator==(const ModelFormula&) const = default;
};

ModelFormula parse_formula(const std::string& text);
std::string print_formula(const ModelFormula& f);

// Variable name a term reads from.
const std::string& term_variable(const Term& t);

// Restricted cubic spline basis (truncated-power construction, linear beyond
// the boundary knots, normalized by (k_m - k_1)^2); length |knots| - 2.
std::vector<double> rcs_basis(double x, const std::vector<double>& knots);

// A formula compiled against categorical level information but not yet bound
// to a concrete table layout.  Fitted models carry this so simulation tables
// expand rows exactly as the fitting data did.
struct DesignSchema {
  struct Column {
    enum class Kind { Intercept, Var, Pow, Factor, Spline };
    Kind kind;
    std::string variable;
    int exponent = 0;           // Pow
    Levels levels;              // Factor: full level set
    std::size_t level = 0;      // Factor: level index this column indicates
    std::vector<double> knots;  // Spline
    std::size_t basis = 0;      // Spline: basis index
    std::string name;
  };
  std::string response;
  std::vector<Column> columns;  // first column is the intercept

  std::size_t width() const { return columns.size(); }
  std::vector<std::string> column_names() const;
};

// Compiles a formula.  Categorical variables must appear inside factor();
// numeric variables used in factor() get levels from the distinct values over
// `rows` (lexicographic over the rendered value).
DesignSchema compile_design(const ModelFormula& f, const Table& table,
                            const LevelRegistry& levels, const std::vector<std::size_t>& rows);

// Fills one design row from a table row.
class RowBuilder {
 public:
  RowBuilder(const DesignSchema& schema, const Table& table);
  std::size_t width() const { return width_; }
  void fill(const Table& table, std::size_t row, double* out) const;

 private:
  struct Op {
    DesignSchema::Column::Kind kind;
    std::size_t col = 0;
    int exponent = 0;
    Levels levels;
    std::size_t level = 0;
    std::vector<double> knots;
    std::size_t basis = 0;
  };
  std::vector<Op> ops_;
  std::size_t width_;
};

// Dense design matrix over a row subset, plus the response vector.
struct DesignMatrix {
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;
  Eigen::VectorXd response;
};

DesignMatrix build_design(const DesignSchema& schema, const Table& table,
                          const std::vector<std::size_t>& rows);

}  // namespace gformula
