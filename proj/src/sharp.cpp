#include "rd/sharp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rd/quadrature.hpp"

namespace rd {

bool OmegaMatrix::positive_definite() const {
  return omega_h(0, 0) > 0.0 &&
         omega_h(0, 0) * omega_h(1, 1) - omega_h(0, 1) * omega_h(1, 0) > 0.0;
}

void OmegaMatrix::require_positive_definite() const {
  if (!positive_definite())
    throw InferenceError("degenerate_covariance",
                         "joint covariance is not positive definite");
}

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int j = 2; j <= k; ++j) f *= j;
  return f;
}

Eigen::VectorXd scaled_basis(double u, int degree) {
  Eigen::VectorXd r(degree + 1);
  double v = 1.0;
  for (int j = 0; j <= degree; ++j) {
    r(j) = v;
    v *= u;
  }
  return r;
}

}  // namespace

JointEstimates estimate_sharp(const Sample& sample, const FitSpec& spec) {
  return estimate_sharp(sample, spec, OutcomeVar::y);
}

JointEstimates estimate_sharp(const Sample& sample, const FitSpec& spec,
                              OutcomeVar outcome) {
  sample.check();
  spec.check();
  validate_sample(sample, spec).require_ok();

  JointEstimates est;
  auto fit = [&](Side side, int degree, double bw) {
    try {
      return fit_one_sided(sample, outcome, side, degree, bw, spec.kernel);
    } catch (const EstimationError& e) {
      throw EstimationError(e.code(), std::string(e.what()) + " [side=" +
                                          (side == Side::right ? "right" : "left") +
                                          ", degree=" + std::to_string(degree) + "]");
    }
  };
  est.p_left = fit(Side::left, spec.p, spec.h);
  est.p_right = fit(Side::right, spec.p, spec.h);
  est.q_left = fit(Side::left, spec.q, spec.b);
  est.q_right = fit(Side::right, spec.q, spec.b);
  for (const auto* f : {&est.p_left, &est.p_right, &est.q_left, &est.q_right})
    est.warnings.insert(est.warnings.end(), f->warnings.begin(), f->warnings.end());

  est.tau_hat = est.p_right.level() - est.p_left.level();
  est.tau_prime_hat = est.p_right.slope() - est.p_left.slope();
  est.mu_p1_left = est.q_left.derivative(spec.p + 1);
  est.mu_p1_right = est.q_right.derivative(spec.p + 1);

  const BiasConstants bl = bias_constants(est.p_left);
  const BiasConstants br = bias_constants(est.p_right);
  const double fact = factorial(spec.p + 1);
  const double level_bias = std::pow(spec.h, spec.p + 1) *
                            (br.level * est.mu_p1_right - bl.level * est.mu_p1_left) / fact;
  const double slope_bias = std::pow(spec.h, spec.p) *
                            (br.slope * est.mu_p1_right - bl.slope * est.mu_p1_left) / fact;
  est.tau_tilde = est.tau_hat - level_bias;
  est.tau_prime_tilde = est.tau_prime_hat - slope_bias;
  return est;
}

namespace {

// Neighbor-mean residual products for one variable pair. J nearest same-side
// neighbors by |X_j - X_i|, excluding i; ties broken by index so results are
// deterministic.
void nn_fill(const Sample& sample, const std::vector<std::size_t>& order,
             const std::vector<double>& a, const std::vector<double>& b, int J,
             double window, std::vector<double>& out) {
  const long m = static_cast<long>(order.size());
  for (long pos = 0; pos < m; ++pos) {
    const std::size_t i = order[pos];
    if (std::abs(sample.centered(i)) > window) continue;
    struct Cand {
      double dist;
      std::size_t idx;
    };
    std::vector<Cand> cands;
    long lo = pos - 1, hi = pos + 1;
    while (static_cast<long>(cands.size()) < J && (lo >= 0 || hi < m)) {
      const double dl = lo >= 0 ? std::abs(sample.centered(order[lo]) - sample.centered(i))
                                : std::numeric_limits<double>::infinity();
      const double dh = hi < m ? std::abs(sample.centered(order[hi]) - sample.centered(i))
                               : std::numeric_limits<double>::infinity();
      if (dl <= dh)
        cands.push_back({dl, order[lo--]});
      else
        cands.push_back({dh, order[hi++]});
    }
    // widen past ties at the J-th distance, then re-rank by (distance, index)
    const double dJ = cands.back().dist;
    while (lo >= 0 && std::abs(sample.centered(order[lo]) - sample.centered(i)) == dJ)
      cands.push_back({dJ, order[lo--]});
    while (hi < m && std::abs(sample.centered(order[hi]) - sample.centered(i)) == dJ)
      cands.push_back({dJ, order[hi++]});
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      return x.dist != y.dist ? x.dist < y.dist : x.idx < y.idx;
    });
    double mean_a = 0.0, mean_b = 0.0;
    for (int k = 0; k < J; ++k) {
      mean_a += a[cands[k].idx];
      mean_b += b[cands[k].idx];
    }
    mean_a /= J;
    mean_b /= J;
    out[i] = static_cast<double>(J) / (J + 1) * (a[i] - mean_a) * (b[i] - mean_b);
  }
}

std::vector<std::size_t> sorted_side(const Sample& sample, bool treated) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (sample.treated_side(i) == treated) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    const double xi = sample.centered(i), xj = sample.centered(j);
    return xi != xj ? xi < xj : i < j;
  });
  return idx;
}

}  // namespace

VarianceDiagonals nn_variance(const Sample& sample, const FitSpec& spec) {
  sample.check();
  spec.check();
  const std::size_t n = sample.size();
  const int J = spec.nn_neighbors;

  const auto left = sorted_side(sample, false);
  const auto right = sorted_side(sample, true);
  if (static_cast<long>(left.size()) <= J || static_cast<long>(right.size()) <= J)
    throw EstimationError("insufficient_neighbors",
                          "a side has too few observations for J=" + std::to_string(J) +
                              " nearest-neighbor variance estimation");

  const double window = std::max(spec.h, spec.b);
  VarianceDiagonals vd;
  vd.y.assign(n, 0.0);
  nn_fill(sample, left, sample.outcome, sample.outcome, J, window, vd.y);
  nn_fill(sample, right, sample.outcome, sample.outcome, J, window, vd.y);
  if (sample.treatment) {
    vd.t.assign(n, 0.0);
    vd.yt.assign(n, 0.0);
    for (const auto& side : {left, right}) {
      nn_fill(sample, side, *sample.treatment, *sample.treatment, J, window, vd.t);
      nn_fill(sample, side, sample.outcome, *sample.treatment, J, window, vd.yt);
    }
  }
  return vd;
}

SandwichForms sandwich_side(const OneSidedFit& p_fit, const OneSidedFit& q_fit,
                            const std::vector<double>& sigma, int p) {
  const std::size_t n = p_fit.weights.size();
  if (q_fit.weights.size() != n || sigma.size() != n)
    throw SpecError("bad_spec", "sandwich inputs disagree on sample size");

  Eigen::FullPivLU<Eigen::MatrixXd> lup(p_fit.gamma);
  Eigen::FullPivLU<Eigen::MatrixXd> luq(q_fit.gamma);
  if (!lup.isInvertible() || !luq.isInvertible())
    throw EstimationError("singular_design", "singular Gamma in covariance assembly");

  const int mp = p_fit.degree + 1;
  const int mq = q_fit.degree + 1;
  const Eigen::VectorXd g0 = lup.solve(Eigen::VectorXd::Unit(mp, 0));
  const Eigen::VectorXd g1 = lup.solve(Eigen::VectorXd::Unit(mp, 1));
  const Eigen::VectorXd gq = luq.solve(Eigen::VectorXd::Unit(mq, p + 1));
  const BiasConstants bc = bias_constants(p_fit);
  const double rho = std::pow(p_fit.bandwidth / q_fit.bandwidth, p + 1);

  // Quadratic forms through the middle matrices R'W Sigma W R / n etc.,
  // accumulated observation by observation in index order.
  double t_pp_00 = 0, t_pp_01 = 0, t_pp_11 = 0;
  double t_qq = 0, t_pq_0 = 0, t_pq_1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wh = p_fit.weights[i];
    const double wb = q_fit.weights[i];
    if ((wh == 0.0 && wb == 0.0) || sigma[i] == 0.0) continue;
    const double s = sigma[i];
    double a0 = 0.0, a1 = 0.0, cq = 0.0;
    if (wh != 0.0) {
      const Eigen::VectorXd r = scaled_basis(p_fit.u_scaled[i], p_fit.degree);
      a0 = wh * g0.dot(r);
      a1 = wh * g1.dot(r);
    }
    if (wb != 0.0) {
      const Eigen::VectorXd rq = scaled_basis(q_fit.u_scaled[i], q_fit.degree);
      cq = wb * gq.dot(rq);
    }
    t_pp_00 += a0 * a0 * s;
    t_pp_01 += a0 * a1 * s;
    t_pp_11 += a1 * a1 * s;
    t_qq += cq * cq * s;
    t_pq_0 += a0 * cq * s;
    t_pq_1 += a1 * cq * s;
  }
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  t_pp_00 *= inv_n2;
  t_pp_01 *= inv_n2;
  t_pp_11 *= inv_n2;
  t_qq *= inv_n2;
  t_pq_0 *= inv_n2;
  t_pq_1 *= inv_n2;

  SandwichForms f;
  f.v = t_pp_00 + rho * rho * t_qq * bc.level * bc.level - 2.0 * rho * t_pq_0 * bc.level;
  f.vp = t_pp_11 + rho * rho * t_qq * bc.slope * bc.slope - 2.0 * rho * t_pq_1 * bc.slope;
  f.c = t_pp_01 - rho * t_pq_0 * bc.slope - rho * t_pq_1 * bc.level +
        rho * rho * t_qq * bc.level * bc.slope;
  return f;
}

OmegaMatrix assemble_omega(const JointEstimates& estimates,
                           const VarianceDiagonals& variances, const FitSpec& spec) {
  // Left and right windows are disjoint, so side contributions add.
  const SandwichForms right =
      sandwich_side(estimates.p_right, estimates.q_right, variances.y, spec.p);
  const SandwichForms left =
      sandwich_side(estimates.p_left, estimates.q_left, variances.y, spec.p);

  OmegaMatrix om;
  om.v = right.v + left.v;
  om.vp = right.vp + left.vp;
  om.c = right.c + left.c;
  om.omega << om.v, om.c, om.c, om.vp;
  const Eigen::Matrix2d scale = Eigen::DiagonalMatrix<double, 2>(1.0, 1.0 / spec.h);
  om.omega_h = scale * om.omega * scale;
  return om;
}

namespace {

// One-sided boundary kernel constants from the continuum moment matrices
// nu_j = int_0^1 u^j K(u) du and lambda_j = int_0^1 u^j K(u)^2 du.
struct KernelConstants {
  double bias;      // e_nu' Gamma^{-1} vartheta, for the order used
  double variance;  // e_nu' Gamma^{-1} Lambda Gamma^{-1} e_nu
};

KernelConstants boundary_constants(KernelId kernel, int order, int nu) {
  const int m = order + 1;
  Eigen::MatrixXd gamma(m, m), lambda(m, m);
  Eigen::VectorXd vartheta(m);
  auto moment = [&](int j, bool squared) {
    return adaptive_simpson(
        [&](double u) {
          const double k = kernel_weight(kernel, u);
          return std::pow(u, j) * (squared ? k * k : k);
        },
        0.0, 1.0, 1e-12);
  };
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) {
      gamma(j, k) = moment(j + k, false);
      lambda(j, k) = moment(j + k, true);
    }
    vartheta(j) = moment(j + order + 1, false);
  }
  const Eigen::VectorXd e = Eigen::VectorXd::Unit(m, nu);
  const Eigen::VectorXd ge = gamma.fullPivLu().solve(e);
  return {ge.dot(vartheta), ge.dot(lambda * ge)};
}

struct SidePilot {
  double deriv_p1 = 0.0;  // (p+1)-th derivative at the cutoff
  double deriv_p2 = 0.0;  // (p+2)-th derivative at the cutoff
  double sigma2 = 0.0;    // residual variance
  bool ok = false;
};

SidePilot global_pilot(const std::vector<double>& xc, const std::vector<double>& y,
                       int order) {
  SidePilot pilot;
  const std::size_t m = xc.size();
  if (static_cast<long>(m) < order + 2) return pilot;
  Eigen::MatrixXd design(m, order + 1);
  Eigen::VectorXd target(m);
  for (std::size_t i = 0; i < m; ++i) {
    double v = 1.0;
    for (int j = 0; j <= order; ++j) {
      design(i, j) = v;
      v *= xc[i];
    }
    target(i) = y[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < order + 1) return pilot;
  const Eigen::VectorXd beta = qr.solve(target);
  double fact = 1.0;
  for (int j = 2; j <= order - 1; ++j) fact *= j;
  pilot.deriv_p1 = fact * beta(order - 1);
  pilot.deriv_p2 = fact * order * beta(order);
  const Eigen::VectorXd resid = target - design * beta;
  pilot.sigma2 =
      resid.squaredNorm() / std::max<double>(1.0, static_cast<double>(m) - order - 1);
  pilot.ok = true;
  return pilot;
}

}  // namespace

RotBandwidths rule_of_thumb_bandwidths(const Sample& sample, int p, KernelId kernel) {
  sample.check();
  if (p < 1) throw SpecError("bad_spec", "p must be >= 1");
  const std::size_t n = sample.size();

  std::vector<double> xl, yl, xr, yr;
  double x_max = 0.0, x_sum = 0.0, x_sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xc = sample.centered(i);
    x_max = std::max(x_max, std::abs(xc));
    x_sum += xc;
    x_sumsq += xc * xc;
    if (sample.treated_side(i)) {
      xr.push_back(xc);
      yr.push_back(sample.outcome[i]);
    } else {
      xl.push_back(xc);
      yl.push_back(sample.outcome[i]);
    }
  }
  if (xl.size() < 20 || xr.size() < 20)
    throw EstimationError("insufficient_data",
                          "rule-of-thumb bandwidths need >= 20 observations per side");
  const double mean = x_sum / n;
  const double sd = std::sqrt(std::max(x_sumsq / n - mean * mean, 1e-300));
  if (x_max <= 0.0)
    throw EstimationError("singular_design", "running variable is constant");

  RotBandwidths rot;
  const double nh_exp = 1.0 / (2.0 * p + 3.0);
  const double nb_exp = 1.0 / (2.0 * p + 5.0);
  const double fallback_h = sd * std::pow(static_cast<double>(n), -nh_exp);
  const double fallback_b = sd * std::pow(static_cast<double>(n), -nb_exp);

  const SidePilot pl = global_pilot(xl, yl, p + 2);
  const SidePilot pr = global_pilot(xr, yr, p + 2);
  if (!pl.ok || !pr.ok) {
    rot.warnings.push_back("rot_fallback: degenerate global pilot fit");
    rot.h = fallback_h;
    rot.b = fallback_b;
  } else {
    // density at the cutoff from a simple count in a shrinking window
    const double w0 = std::max(sd * std::pow(static_cast<double>(n), -0.2), 1e-12);
    long cnt = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(sample.centered(i)) <= w0) ++cnt;
    const double f0 = cnt > 0 ? cnt / (2.0 * w0 * n) : 1.0 / (2.0 * x_max);

    double fact = 1.0;
    for (int j = 2; j <= p + 1; ++j) fact *= j;
    const double sig2 = pl.sigma2 + pr.sigma2;

    const KernelConstants kc_h = boundary_constants(kernel, p, 0);
    const double bias_h = kc_h.bias * (pr.deriv_p1 - pl.deriv_p1) / fact;
    const double var_h = sig2 * kc_h.variance / f0;
    if (std::abs(bias_h) < 1e-12) {
      rot.warnings.push_back("rot_fallback_h: vanishing curvature difference");
      rot.h = fallback_h;
    } else {
      rot.h = std::pow(var_h / (2.0 * (p + 1) * bias_h * bias_h * n), nh_exp);
    }

    // pilot bandwidth targets the (p+1)-th derivative with an order-(p+1) fit
    const KernelConstants kc_b = boundary_constants(kernel, p + 1, p + 1);
    const double bias_b = kc_b.bias * fact * (pr.deriv_p2 - pl.deriv_p2) / (fact * (p + 2));
    const double var_b = fact * fact * sig2 * kc_b.variance / f0;
    if (std::abs(bias_b) < 1e-12) {
      rot.warnings.push_back("rot_fallback_b: vanishing third-order difference");
      rot.b = fallback_b;
    } else {
      rot.b = std::pow((2.0 * p + 3.0) * var_b / (2.0 * bias_b * bias_b * n), nb_exp);
    }
  }
  rot.h = std::min(std::max(rot.h, 1e-12), x_max);
  rot.b = std::min(std::max(rot.b, 1e-12), x_max);
  return rot;
}

}  // namespace rd
