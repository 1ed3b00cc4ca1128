#include <algorithm>
#include <cmath>

#include "dhsplan/errors.hpp"
#include "dhsplan/formulation.hpp"

namespace dhsplan {

std::vector<TermBox> initial_boxes(const ProblemInstance &instance) {
  std::vector<TermBox> boxes;
  boxes.reserve(instance.bilinear_terms.size());
  for (const auto &t : instance.bilinear_terms) {
    const auto m = static_cast<std::size_t>(t.factor_m);
    const auto tau = static_cast<std::size_t>(t.factor_tau);
    boxes.push_back({instance.lo[m], instance.hi[m], instance.lo[tau], instance.hi[tau]});
  }
  return boxes;
}

namespace {

void check_box(const TermBox &b, const BilinearTerm &t) {
  if (!(b.m_lo <= b.m_hi) || !(b.tau_lo <= b.tau_hi))
    throw EmptyBox("empty McCormick box for term " + to_string(t.label));
  if (!std::isfinite(b.m_lo) || !std::isfinite(b.m_hi) || !std::isfinite(b.tau_lo) ||
      !std::isfinite(b.tau_hi))
    throw EmptyBox("unbounded McCormick box for term " + to_string(t.label));
}

LinearRow envelope_row(const BilinearTerm &t, const char *tag, double sign, double m_coef,
                       double tau_coef, double constant) {
  // sign * (H - c*(tau_coef*m + m_coef*tau - constant)) <= 0
  LinearRow row;
  row.label = {tag, t.label.entity, t.label.hour};
  row.coeffs = {{t.product, sign},
                {t.factor_m, -sign * t.coeff * tau_coef},
                {t.factor_tau, -sign * t.coeff * m_coef}};
  row.rhs = -sign * t.coeff * constant;
  return row;
}

} // namespace

ProblemInstance apply_mccormick(const ProblemInstance &instance, std::span<const TermBox> boxes) {
  if (instance.variant != Variant::Reformulated && instance.variant != Variant::Base)
    throw UnsupportedVariant("McCormick relaxation needs a bilinear instance, got " +
                             std::string(to_string(instance.variant)));
  if (boxes.size() != instance.bilinear_terms.size())
    throw DimensionMismatch("expected " + std::to_string(instance.bilinear_terms.size()) +
                            " McCormick boxes, got " + std::to_string(boxes.size()));

  ProblemInstance out = instance;
  out.variant = Variant::McCormick;
  out.bilinear_terms.clear();

  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const BilinearTerm &t = instance.bilinear_terms[k];
    const TermBox &b = boxes[k];
    check_box(b, t);

    auto clip = [&](int col, double lo, double hi) {
      auto &l = out.lo[static_cast<std::size_t>(col)];
      auto &h = out.hi[static_cast<std::size_t>(col)];
      l = std::max(l, lo);
      h = std::min(h, hi);
      if (l > h)
        throw EmptyBox("McCormick box for term " + to_string(t.label) +
                       " misses the variable bounds of " + instance.vars.name(col));
    };
    clip(t.factor_m, b.m_lo, b.m_hi);
    clip(t.factor_tau, b.tau_lo, b.tau_hi);

    const bool m_point = b.m_lo == b.m_hi;
    const bool tau_point = b.tau_lo == b.tau_hi;
    if (m_point || tau_point) {
      // Point box in one factor: the product is linear and the envelope exact.
      LinearRow row;
      row.label = {"16b", t.label.entity, t.label.hour};
      row.coeffs.emplace_back(t.product, 1.0);
      if (m_point && tau_point)
        row.rhs = t.coeff * b.m_lo * b.tau_lo;
      else if (m_point)
        row.coeffs.emplace_back(t.factor_tau, -t.coeff * b.m_lo);
      else
        row.coeffs.emplace_back(t.factor_m, -t.coeff * b.tau_lo);
      out.eq_rows.push_back(std::move(row));
      continue;
    }

    // H >= c(m_lo*tau + tau_lo*m - m_lo*tau_lo)
    out.ineq_rows.push_back(envelope_row(t, "16b", -1.0, b.m_lo, b.tau_lo, b.m_lo * b.tau_lo));
    // H >= c(m_hi*tau + tau_hi*m - m_hi*tau_hi)
    out.ineq_rows.push_back(envelope_row(t, "16c", -1.0, b.m_hi, b.tau_hi, b.m_hi * b.tau_hi));
    // H <= c(m_hi*tau + tau_lo*m - m_hi*tau_lo)
    out.ineq_rows.push_back(envelope_row(t, "16d", 1.0, b.m_hi, b.tau_lo, b.m_hi * b.tau_lo));
    // H <= c(m_lo*tau + tau_hi*m - m_lo*tau_hi)
    out.ineq_rows.push_back(envelope_row(t, "16e", 1.0, b.m_lo, b.tau_hi, b.m_lo * b.tau_hi));
  }
  return out;
}

ProblemInstance apply_mccormick(const ProblemInstance &instance, std::span<const double> lo,
                                std::span<const double> hi) {
  if (lo.size() != instance.num_vars() || hi.size() != instance.num_vars())
    throw DimensionMismatch("bound vectors do not match the instance dimension");
  std::vector<TermBox> boxes;
  boxes.reserve(instance.bilinear_terms.size());
  for (const auto &t : instance.bilinear_terms) {
    const auto m = static_cast<std::size_t>(t.factor_m);
    const auto tau = static_cast<std::size_t>(t.factor_tau);
    boxes.push_back({std::max(lo[m], instance.lo[m]), std::min(hi[m], instance.hi[m]),
                     std::max(lo[tau], instance.lo[tau]), std::min(hi[tau], instance.hi[tau])});
  }
  ProblemInstance out = apply_mccormick(instance, boxes);
  for (std::size_t j = 0; j < out.num_vars(); ++j) {
    out.lo[j] = std::max(out.lo[j], lo[j]);
    out.hi[j] = std::min(out.hi[j], hi[j]);
    if (out.lo[j] > out.hi[j])
      throw EmptyBox("empty bound interval for " + out.vars.name(static_cast<int>(j)));
  }
  return out;
}

} // namespace dhsplan
