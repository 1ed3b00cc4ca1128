#include <cmath>
#include <iomanip>
#include <sstream>

#include "dhsplan/formulation.hpp"

namespace dhsplan {

namespace {

// LP-format names may not contain brackets or commas.
std::string lp_name(std::string s) {
  for (char &ch : s) {
    if (ch == '[' || ch == ']' || ch == ',' || ch == ' ')
      ch = '_';
  }
  while (!s.empty() && s.back() == '_')
    s.pop_back();
  return s;
}

void write_linear(std::ostream &os, const std::vector<std::pair<int, double>> &coeffs,
                  const VarMap &vars) {
  bool first = true;
  for (const auto &[j, a] : coeffs) {
    if (!first || a < 0)
      os << (a < 0 ? " - " : " + ");
    os << std::abs(a) << ' ' << lp_name(vars.name(j));
    first = false;
  }
  if (first)
    os << "0 " << lp_name(vars.name(0));
}

} // namespace

std::string to_lp_format(const ProblemInstance &inst) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "\\ variant " << to_string(inst.variant) << "\n";
  os << "Minimize\n obj:";
  std::vector<std::pair<int, double>> lin;
  for (Eigen::Index j = 0; j < inst.objective.q.size(); ++j) {
    if (inst.objective.q[j] != 0.0)
      lin.emplace_back(static_cast<int>(j), inst.objective.q[j]);
  }
  os << ' ';
  write_linear(os, lin, inst.vars);
  if (inst.objective.Q.nonZeros() > 0) {
    os << " + [";
    for (int k = 0; k < inst.objective.Q.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(inst.objective.Q, k); it; ++it) {
        if (it.row() > it.col())
          continue;
        // [ ] / 2 holds x'Qx; off-diagonals appear once, doubled.
        const double v = it.row() == it.col() ? it.value() : 2.0 * it.value();
        os << (v < 0 ? " - " : " + ") << std::abs(v) << ' ' << lp_name(inst.vars.name(it.row()));
        if (it.row() == it.col())
          os << " ^2";
        else
          os << " * " << lp_name(inst.vars.name(it.col()));
      }
    }
    os << " ] / 2";
  }
  if (inst.objective.c0 != 0.0)
    os << " + " << inst.objective.c0 << " constant";
  os << "\nSubject To\n";
  int counter = 0;
  auto row_name = [&](const RowLabel &l) {
    return "r" + std::to_string(counter++) + "_" + lp_name(to_string(l));
  };
  for (const auto &r : inst.eq_rows) {
    os << ' ' << row_name(r.label) << ": ";
    write_linear(os, r.coeffs, inst.vars);
    os << " = " << r.rhs << "\n";
  }
  for (const auto &r : inst.ineq_rows) {
    os << ' ' << row_name(r.label) << ": ";
    write_linear(os, r.coeffs, inst.vars);
    os << " <= " << r.rhs << "\n";
  }
  for (const auto &t : inst.bilinear_terms) {
    os << ' ' << row_name(t.label) << ": " << lp_name(inst.vars.name(t.product)) << " + [ -"
       << t.coeff << ' ' << lp_name(inst.vars.name(t.factor_m)) << " * "
       << lp_name(inst.vars.name(t.factor_tau)) << " ] = 0\n";
  }
  os << "Bounds\n";
  if (inst.objective.c0 != 0.0)
    os << " constant = 1\n";
  for (std::size_t j = 0; j < inst.num_vars(); ++j) {
    const std::string n = lp_name(inst.vars.name(static_cast<int>(j)));
    const double lo = inst.lo[j];
    const double hi = inst.hi[j];
    if (std::isinf(lo) && std::isinf(hi))
      os << ' ' << n << " free\n";
    else if (lo == hi)
      os << ' ' << n << " = " << lo << "\n";
    else if (std::isinf(lo))
      os << " -inf <= " << n << " <= " << hi << "\n";
    else if (std::isinf(hi))
      os << ' ' << n << " >= " << lo << "\n";
    else
      os << ' ' << lo << " <= " << n << " <= " << hi << "\n";
  }
  os << "End\n";
  return os.str();
}

} // namespace dhsplan
