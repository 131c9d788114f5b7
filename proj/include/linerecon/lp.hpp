#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "linerecon/common.hpp"

namespace linerecon {

// min c.u subject to sum coef*u <= rhs per row and 0 <= u <= 1 per variable.
// This is the whole interchange surface with the solver; an external LP
// backend could satisfy it behind minimize() just as well.
struct LinearProgram {
  struct Row {
    std::vector<std::pair<int, double>> terms;
    double rhs = 0;
  };

  std::vector<double> objective;
  std::vector<std::string> names;
  std::vector<Row> rows;

  int num_vars() const { return static_cast<int>(objective.size()); }

  int add_var(std::string name, double cost) {
    names.push_back(std::move(name));
    objective.push_back(cost);
    return num_vars() - 1;
  }

  void add_row(std::vector<std::pair<int, double>> terms, double rhs) {
    rows.push_back({std::move(terms), rhs});
  }
};

struct LpSolution {
  std::vector<double> values;
  double objective = 0;
  int iterations = 0;
};

// Standard text LP interchange format, for debugging with external tools.
inline std::string export_lp_format(const LinearProgram& lp) {
  std::ostringstream out;
  out.precision(17);
  out << "Minimize\n obj:";
  bool first = true;
  for (int j = 0; j < lp.num_vars(); ++j) {
    if (lp.objective[j] == 0) continue;
    out << (first ? " " : " + ") << lp.objective[j] << " " << lp.names[j];
    first = false;
  }
  if (first) out << " 0 " << (lp.num_vars() ? lp.names[0] : "x");
  out << "\nSubject To\n";
  for (std::size_t r = 0; r < lp.rows.size(); ++r) {
    out << " r" << r << ":";
    for (std::size_t k = 0; k < lp.rows[r].terms.size(); ++k) {
      auto [j, a] = lp.rows[r].terms[k];
      if (k == 0)
        out << " " << a << " " << lp.names[j];
      else
        out << (a >= 0 ? " + " : " - ") << std::abs(a) << " " << lp.names[j];
    }
    out << " <= " << lp.rows[r].rhs << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < lp.num_vars(); ++j) out << " 0 <= " << lp.names[j] << " <= 1\n";
  out << "End\n";
  return out.str();
}

// Mehrotra predictor-corrector interior-point method for box-constrained
// inequality LPs. Deterministic: fixed iteration structure, no randomness.
// Columns that appear in no row are presolved to their cheapest bound, which
// also pins zero-cost unreferenced variables to 0.
inline LpSolution solve_lp(const LinearProgram& lp, double tol = 1e-9, int max_iters = 200) {
  const int n_all = lp.num_vars();
  LpSolution sol;
  sol.values.assign(n_all, 0.0);

  std::vector<char> referenced(n_all, 0);
  for (const auto& row : lp.rows)
    for (auto [j, a] : row.terms)
      if (a != 0) referenced[j] = 1;

  std::vector<int> keep;  // reduced problem columns
  std::vector<int> col_of(n_all, -1);
  for (int j = 0; j < n_all; ++j) {
    if (referenced[j]) {
      col_of[j] = static_cast<int>(keep.size());
      keep.push_back(j);
    } else {
      sol.values[j] = lp.objective[j] < 0 ? 1.0 : 0.0;
    }
  }
  const int n = static_cast<int>(keep.size());
  const int m = static_cast<int>(lp.rows.size());
  auto finish = [&]() {
    double obj = 0;
    for (int j = 0; j < n_all; ++j) obj += lp.objective[j] * sol.values[j];
    sol.objective = obj;
    return sol;
  };
  if (n == 0 || m == 0) return finish();

  using SpMat = Eigen::SparseMatrix<double>;
  using Vec = Eigen::VectorXd;

  SpMat A(m, n);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int r = 0; r < m; ++r)
      for (auto [j, a] : lp.rows[r].terms)
        if (a != 0) trip.emplace_back(r, col_of[j], a);
    A.setFromTriplets(trip.begin(), trip.end());
  }
  Vec b(m), c(n);
  for (int r = 0; r < m; ++r) b[r] = lp.rows[r].rhs;
  for (int k = 0; k < n; ++k) c[k] = lp.objective[keep[k]];
  const Vec ub = Vec::Ones(n);

  // Primal: x in (0,u), row slack w > 0, bound slack s = u - x > 0.
  // Dual: y, z, v > 0 with c + A'y - z + v = 0.
  Vec x = 0.5 * ub;
  Vec s = ub - x;
  Vec w = (b - A * x).cwiseMax(1.0);
  Vec y = Vec::Ones(m), z = Vec::Ones(n), v = Vec::Ones(n);

  Eigen::SimplicialLDLT<SpMat> chol;
  bool analyzed = false;

  const double bnorm = 1.0 + b.cwiseAbs().maxCoeff();
  const double cnorm = 1.0 + c.cwiseAbs().maxCoeff();

  auto mu_of = [&]() { return (x.dot(z) + w.dot(y) + s.dot(v)) / (2 * n + m); };

  auto max_step = [](const Vec& p, const Vec& dp) {
    double a = 1.0;
    for (int i = 0; i < p.size(); ++i)
      if (dp[i] < 0) a = std::min(a, -p[i] / dp[i]);
    return a;
  };

  int it = 0;
  for (; it < max_iters; ++it) {
    Vec rp = b - A * x - w;          // row feasibility
    Vec ru = ub - x - s;             // bound feasibility
    Vec rd = -(c + A.transpose() * y - z + v);  // dual feasibility
    double mu = mu_of();
    double pinf = std::max(rp.cwiseAbs().maxCoeff(), ru.cwiseAbs().maxCoeff()) / bnorm;
    double dinf = rd.cwiseAbs().maxCoeff() / cnorm;
    double gap = mu / (1.0 + std::abs(c.dot(x)));
    if (pinf < tol && dinf < tol && gap < tol) break;

    Vec dx_inv_z = z.cwiseQuotient(x);
    Vec ds_inv_v = v.cwiseQuotient(s);
    Vec dy_w = y.cwiseQuotient(w);

    SpMat M = A.transpose() * dy_w.asDiagonal() * A;
    Vec diag_add = dx_inv_z + ds_inv_v + Vec::Constant(n, 1e-12);
    SpMat D(diag_add.asDiagonal());
    M = M + D;
    if (!analyzed) {
      chol.analyzePattern(M);
      analyzed = true;
    }
    chol.factorize(M);
    if (chol.info() != Eigen::Success)
      throw SolverFailure("solve_lp: normal-equations factorization failed at iteration " +
                          std::to_string(it));

    // rhs(rxz, rwy, rsv) -> dx for a Newton step with given complementarity
    // targets.
    auto newton = [&](const Vec& rxz, const Vec& rwy, const Vec& rsv, Vec& dx, Vec& dw, Vec& dy,
                      Vec& dz, Vec& ds, Vec& dv) {
      Vec rhs = rd + rxz.cwiseQuotient(x) - rsv.cwiseQuotient(s) + ds_inv_v.cwiseProduct(ru) +
                A.transpose() * (dy_w.cwiseProduct(rp) - rwy.cwiseQuotient(w));
      dx = chol.solve(rhs);
      dw = rp - A * dx;
      dy = (rwy - y.cwiseProduct(dw)).cwiseQuotient(w);
      dz = (rxz - z.cwiseProduct(dx)).cwiseQuotient(x);
      ds = ru - dx;
      dv = (rsv - v.cwiseProduct(ds)).cwiseQuotient(s);
    };

    Vec dx, dw, dy, dz, ds, dv;
    // Affine (predictor) direction.
    newton(-x.cwiseProduct(z), -w.cwiseProduct(y), -s.cwiseProduct(v), dx, dw, dy, dz, ds, dv);
    double ap = std::min({max_step(x, dx), max_step(w, dw), max_step(s, ds)});
    double ad = std::min({max_step(y, dy), max_step(z, dz), max_step(v, dv)});
    double mu_aff = ((x + ap * dx).dot(z + ad * dz) + (w + ap * dw).dot(y + ad * dy) +
                     (s + ap * ds).dot(v + ad * dv)) /
                    (2 * n + m);
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::min(1.0, std::max(0.0, sigma));

    // Corrector.
    Vec rxz = sigma * mu * Vec::Ones(n) - x.cwiseProduct(z) - dx.cwiseProduct(dz);
    Vec rwy = sigma * mu * Vec::Ones(m) - w.cwiseProduct(y) - dw.cwiseProduct(dy);
    Vec rsv = sigma * mu * Vec::Ones(n) - s.cwiseProduct(v) - ds.cwiseProduct(dv);
    newton(rxz, rwy, rsv, dx, dw, dy, dz, ds, dv);

    ap = 0.9995 * std::min({max_step(x, dx), max_step(w, dw), max_step(s, ds)});
    ad = 0.9995 * std::min({max_step(y, dy), max_step(z, dz), max_step(v, dv)});
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    x += ap * dx;
    w += ap * dw;
    s += ap * ds;
    y += ad * dy;
    z += ad * dz;
    v += ad * dv;
  }

  if (it >= max_iters) {
    Vec rp = b - A * x - w;
    double pinf = rp.cwiseAbs().maxCoeff() / bnorm;
    double gap = mu_of() / (1.0 + std::abs(c.dot(x)));
    if (pinf > 1e-6 || gap > 1e-6)
      throw SolverFailure("solve_lp: no convergence after " + std::to_string(max_iters) +
                          " iterations (pinf=" + std::to_string(pinf) +
                          ", gap=" + std::to_string(gap) + ")");
  }
  sol.iterations = it;
  for (int k = 0; k < n; ++k) {
    double val = std::clamp(x[k], 0.0, 1.0);
    if (val < 1e-8) val = 0.0;
    if (val > 1.0 - 1e-8) val = 1.0;
    sol.values[keep[k]] = val;
  }
  return finish();
}

}  // namespace linerecon
