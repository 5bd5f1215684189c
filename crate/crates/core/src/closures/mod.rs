//! Scalar closures of the cross-diffusion model and their stable evaluation.
//!
//! With `w = 1 - M` the closures are
//!
//! ```text
//! p(M) = exp(-w^(-kappa))
//! q(M) = p(M)/M * I(M),      I(M) = integral_0^M  s^a (1-s)^(-b) p(s)^(-2) ds
//! ```
//!
//! `I` contains the factor `exp(2 w^(-kappa))`, which overflows doubles for
//! `w` below roughly `3e-3` (at `kappa = 1`), so raw values of `q` or `I`
//! cannot be carried near saturation. All evaluation here works with the
//! scaled integral `Itilde = p^2 I`, for which
//!
//! ```text
//! pq = Itilde / M                      (bounded, slowly varying)
//! log(q/p) = 2 w^(-kappa) + ln(pq)     (singular part in closed form)
//! Phi = M q / p,  Phi'/Phi = M^(a-1) (1-M)^(-b) / Itilde
//! ```
//!
//! Derived quantities exposed to the rest of the crate: the Kirchhoff
//! potential `Q(M) = integral_0^M s^a (1-s)^(-b) ds` (whose derivative is the
//! single-species diffusivity), the entropy integral
//! `L(M) = integral_0^M log(q/p) ds`, and the logarithmic derivatives used by
//! the entropy Hessian and the implicit solver.
//!
//! Evaluation dispatch: a truncated power series below `M = 1e-5`, an
//! optional precomputed [`ClosureTable`] (cubic Hermite data on a uniform
//! grid in `logit M`), and adaptive Gauss–Kronrod quadrature otherwise.

mod quad;
mod table;

pub use table::ClosureTable;

use crate::error::{Error, Result};
use crate::params::{ModelParams, DELTA_CAP};

/// Below this total biomass the closures use series expansions; quadrature
/// of the nearly-degenerate integrand buys nothing there.
pub(crate) const SERIES_CUTOFF: f64 = 1e-5;

/// Default relative tolerance for direct quadrature evaluation.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Closure evaluator for one parameter set.
///
/// Construct with [`Closures::tabulated`] for hot loops (solver, lattice,
/// diagnostics) or [`Closures::direct`] when every call should go through
/// quadrature (oracles, spot checks).
#[derive(Debug)]
pub struct Closures {
    params: ModelParams,
    rtol: f64,
    table: Option<ClosureTable>,
}

impl Closures {
    /// Quadrature-only evaluator at the default tolerance.
    pub fn direct(params: ModelParams) -> Self {
        Self { params, rtol: DEFAULT_RTOL, table: None }
    }

    /// Quadrature-only evaluator with an explicit relative tolerance.
    pub fn with_tol(params: ModelParams, rtol: f64) -> Self {
        Self { params, rtol, table: None }
    }

    /// Evaluator backed by a precomputed table covering
    /// `M` in `[1e-5, 1 - DELTA_CAP]`; outside that range the series and the
    /// saturation cap take over.
    pub fn tabulated(params: ModelParams) -> Result<Self> {
        let table = ClosureTable::build(&params, 1e-12)?;
        Ok(Self { params, rtol: DEFAULT_RTOL, table: Some(table) })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn table(&self) -> Option<&ClosureTable> {
        self.table.as_ref()
    }

    /// Validates `M` and returns `(M, 1 - M)` with the saturation cap applied.
    fn guard(&self, m: f64) -> Result<(f64, f64)> {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Domain(format!("total biomass must be finite and >= 0, got {m}")));
        }
        if m >= 1.0 {
            return Err(Error::Domain(format!("saturation reached: M = {m} >= 1")));
        }
        let m_eff = m.min(1.0 - DELTA_CAP);
        Ok((m_eff, 1.0 - m_eff))
    }

    /// `p(M) = exp(-(1-M)^(-kappa))`. Underflows to zero for `M` very close
    /// to saturation; use [`Closures::ln_p`] where that matters.
    pub fn p(&self, m: f64) -> Result<f64> {
        Ok(self.ln_p(m)?.exp())
    }

    /// `ln p(M) = -(1-M)^(-kappa)`.
    pub fn ln_p(&self, m: f64) -> Result<f64> {
        let (_, omm) = self.guard(m)?;
        Ok(-omm.powf(-self.params.kappa))
    }

    /// `p'(M) = -kappa (1-M)^(-1-kappa) p(M)` (strictly negative).
    pub fn dp(&self, m: f64) -> Result<f64> {
        let (_, omm) = self.guard(m)?;
        let k = self.params.kappa;
        Ok(-k * omm.powf(-1.0 - k) * (-omm.powf(-k)).exp())
    }

    /// `p(M)^2`, the face coefficient of the flux form.
    pub fn p_squared(&self, m: f64) -> Result<f64> {
        Ok((2.0 * self.ln_p(m)?).exp())
    }

    /// `ln(p(M) q(M)) `; the product `pq` stays representable up to the cap.
    fn t_ln_pq(&self, m: f64, omm: f64) -> Result<f64> {
        if m < SERIES_CUTOFF {
            return Ok(series_ln_pq(&self.params, m, omm));
        }
        if let Some(table) = &self.table {
            return Ok(table.eval_t(m, omm).0);
        }
        ln_pq_direct(&self.params, m, omm, self.rtol)
    }

    /// `p(M) q(M)`, zero at `M = 0`.
    pub fn pq(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        Ok(self.t_ln_pq(m, omm)?.exp())
    }

    /// `log(q(M)/p(M))`, strictly increasing in `M`. Requires `M > 0`.
    pub fn log_qp(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Err(Error::Domain("log(q/p) diverges at M = 0".into()));
        }
        Ok(2.0 * omm.powf(-self.params.kappa) + self.t_ln_pq(m, omm)?)
    }

    /// `q(M)/p(M)`, the mobility ratio in the flux potential `u_i q/p`;
    /// zero at `M = 0`, may overflow to infinity very close to saturation.
    pub fn qp_ratio(&self, m: f64) -> Result<f64> {
        let (m_eff, _) = self.guard(m)?;
        if m_eff == 0.0 {
            return Ok(0.0);
        }
        Ok(self.log_qp(m)?.exp())
    }

    /// `q(M)` by quadrature/table; zero at `M = 0`, infinity when the value
    /// exceeds the double range (only extremely close to saturation).
    pub fn q(&self, m: f64) -> Result<f64> {
        let (m_eff, _) = self.guard(m)?;
        if m_eff == 0.0 {
            return Ok(0.0);
        }
        Ok((self.log_qp(m)? + self.ln_p(m)?).exp())
    }

    /// `Phi(M) = M q(M)/p(M)`, the strictly increasing saturation map used to
    /// invert entropy variables; `Phi(0) = 0` and `Phi` diverges at `M = 1`.
    pub fn phi(&self, m: f64) -> Result<f64> {
        let (m_eff, _) = self.guard(m)?;
        if m_eff == 0.0 {
            return Ok(0.0);
        }
        Ok(self.log_phi(m)?.exp())
    }

    /// `ln Phi(M)`, finite and strictly increasing on `(0, 1)`.
    pub fn log_phi(&self, m: f64) -> Result<f64> {
        let (m_eff, _) = self.guard(m)?;
        if m_eff == 0.0 {
            return Err(Error::Domain("ln Phi diverges at M = 0".into()));
        }
        Ok(m_eff.ln() + self.log_qp(m)?)
    }

    /// `Phi'(M)/Phi(M) = M^(a-1) (1-M)^(-b) / Itilde(M)`; also the
    /// off-diagonal part of the entropy Hessian.
    pub fn dlog_phi(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Err(Error::Domain("dlog Phi diverges at M = 0".into()));
        }
        let pr = &self.params;
        let t = self.t_ln_pq(m, omm)?;
        Ok(((pr.a - 1.0) * m.ln() - pr.b * omm.ln() - t).exp())
    }

    /// `d/dM log(q/p) = Phi'/Phi - 1/M`, strictly positive (at least `a/M`).
    pub fn dlog_qp(&self, m: f64) -> Result<f64> {
        let (m_eff, _) = self.guard(m)?;
        Ok(self.dlog_phi(m)? - 1.0 / m_eff)
    }

    /// Kirchhoff potential `Q(M) = integral_0^M s^a (1-s)^(-b) ds`, the
    /// antiderivative of the single-species diffusivity; `Q(0) = 0`.
    pub fn kirchhoff(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        if m < SERIES_CUTOFF {
            return Ok(series_ln_big_q(&self.params, m).exp());
        }
        if let Some(table) = &self.table {
            return Ok(table.eval_lnq(m, omm).0.exp());
        }
        Ok(ln_big_q_direct(&self.params, m, omm, self.rtol)?.exp())
    }

    /// Single-species diffusivity `D(M) = M^a (1-M)^(-b)`; `D(0) = 0`.
    pub fn diffusivity(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        let pr = &self.params;
        Ok((pr.a * m.ln() - pr.b * omm.ln()).exp())
    }

    /// Entropy integral `L(M) = integral_0^M log(q(s)/p(s)) ds`; `L(0) = 0`.
    ///
    /// Computed as `2 Lambda_kappa(M) + integral_0^M ln(pq) ds` where
    /// `Lambda_kappa` is the closed-form antiderivative of `(1-s)^(-kappa)`,
    /// so the part that diverges as `M -> 1` carries no quadrature error.
    pub fn log_qp_integral(&self, m: f64) -> Result<f64> {
        let (m, omm) = self.guard(m)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        if m < SERIES_CUTOFF {
            return Ok(series_ell(&self.params, m));
        }
        let sing = 2.0 * lambda_kappa(omm, self.params.kappa);
        if let Some(table) = &self.table {
            return Ok(sing + table.eval_rl(m, omm));
        }
        Ok(sing + rl_direct(&self.params, m, self.rtol)?)
    }

    /// Estimates the limiting constants of the closures at both endpoints by
    /// evaluating the defining ratios along geometric sequences. Reported,
    /// not asserted: the analysis only guarantees existence.
    pub fn asymptotic_constants(&self) -> Result<AsymptoticEstimates> {
        let pr = &self.params;
        let mut near_one = Vec::new();
        let mut log_rate = Vec::new();
        for k in 0..=17 {
            let omm = 0.25 * 2f64.powi(-k);
            let m = 1.0 - omm;
            let t = self.t_ln_pq(m, omm)?;
            near_one.push((m, (t - (1.0 + pr.kappa - pr.b) * omm.ln()).exp()));
            log_rate.push((m, (2.0 * omm.powf(-pr.kappa) + t) * omm.powf(pr.kappa)));
        }
        let mut near_zero = Vec::new();
        for k in 0..=17 {
            let m = 0.25 * 2f64.powi(-k);
            let lnq = self.log_qp(m)? + self.ln_p(m)?;
            near_zero.push((m, (lnq - pr.a * m.ln()).exp()));
        }
        Ok(AsymptoticEstimates {
            pq_rate_at_saturation: LimitEstimate::from_samples(near_one),
            log_ratio_rate_at_saturation: LimitEstimate::from_samples(log_rate),
            q_rate_at_vanishing: LimitEstimate::from_samples(near_zero),
        })
    }
}

/// One-shot quadrature evaluation of `q(M)` at an explicit tolerance,
/// bypassing any table.
pub fn q_adaptive(m: f64, params: &ModelParams, rtol: f64) -> Result<f64> {
    Closures::with_tol(params.clone(), rtol).q(m)
}

/// Extrapolated endpoint limit of a ratio sampled along a geometric sequence.
#[derive(Debug, Clone)]
pub struct LimitEstimate {
    /// Last (closest-to-the-endpoint) sampled ratio.
    pub value: f64,
    /// Whether the last few consecutive ratios agree within 5%.
    pub stabilized: bool,
    /// The full `(M, ratio)` sequence for reporting.
    pub samples: Vec<(f64, f64)>,
}

impl LimitEstimate {
    fn from_samples(samples: Vec<(f64, f64)>) -> Self {
        let value = samples.last().map(|&(_, r)| r).unwrap_or(f64::NAN);
        let k = samples.len();
        let stabilized = k >= 4
            && samples[k - 3..].iter().all(|&(_, r)| {
                r.is_finite() && value.is_finite() && (r - value).abs() <= 0.05 * value.abs()
            });
        Self { value, stabilized, samples }
    }
}

/// Endpoint behaviour of the closures: `pq / (1-M)^(1+kappa-b)` and
/// `log(q/p) * (1-M)^kappa` at saturation, `q / M^a` at vanishing biomass.
#[derive(Debug, Clone)]
pub struct AsymptoticEstimates {
    pub pq_rate_at_saturation: LimitEstimate,
    pub log_ratio_rate_at_saturation: LimitEstimate,
    pub q_rate_at_vanishing: LimitEstimate,
}

/// `Lambda_kappa(M) = integral_0^M (1-s)^(-kappa) ds` in closed form,
/// written with `w = 1 - M`.
pub(crate) fn lambda_kappa(omm: f64, kappa: f64) -> f64 {
    if kappa == 1.0 {
        -omm.ln()
    } else {
        -f64::exp_m1((1.0 - kappa) * omm.ln()) / (1.0 - kappa)
    }
}

fn logsumexp2(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

// --- series expansions for vanishing biomass -------------------------------
//
// Writing psi(s) = -b ln(1-s) + 2 (1-s)^(-kappa) = 2 + b1 s + c2 s^2 + ...,
// the scaled integrand is s^a e^(psi(s)) and
//   I(M) = e^2 M^(a+1) [ 1/(a+1) + b1 M/(a+2) + b2 M^2/(a+3) + O(M^3) ]
// with b1 = b + 2 kappa and b2 = c2 + b1^2/2, c2 = b/2 + kappa (kappa+1).

fn series_coeffs(params: &ModelParams) -> (f64, f64) {
    let b1 = params.b + 2.0 * params.kappa;
    let c2 = 0.5 * params.b + params.kappa * (params.kappa + 1.0);
    (b1, c2 + 0.5 * b1 * b1)
}

/// `ln(p q)` for small `M`.
pub(crate) fn series_ln_pq(params: &ModelParams, m: f64, omm: f64) -> f64 {
    let (b1, b2) = series_coeffs(params);
    let a = params.a;
    let x = 1.0 / (a + 1.0) + b1 * m / (a + 2.0) + b2 * m * m / (a + 3.0);
    2.0 - 2.0 * omm.powf(-params.kappa) + a * m.ln() + x.ln()
}

/// `ln Q(M)` for small `M`.
pub(crate) fn series_ln_big_q(params: &ModelParams, m: f64) -> f64 {
    let a = params.a;
    let b = params.b;
    let y = 1.0 / (a + 1.0) + b * m / (a + 2.0) + b * (b + 1.0) * m * m / (2.0 * (a + 3.0));
    (a + 1.0) * m.ln() + y.ln()
}

/// `L(M)` for small `M` (the singular parts of the integrand cancel here).
pub(crate) fn series_ell(params: &ModelParams, m: f64) -> f64 {
    let (b1, _) = series_coeffs(params);
    let a = params.a;
    2.0 * m + a * m * m.ln() - a * m - m * (a + 1.0).ln()
        + 0.5 * b1 * (a + 1.0) / (a + 2.0) * m * m
}

// --- scaled segment integrals ----------------------------------------------

fn quad_to_result(
    out: std::result::Result<quad::QuadOutcome, quad::QuadOutcome>,
    rtol: f64,
    context: &str,
) -> Result<f64> {
    match out {
        Ok(o) => Ok(o.value),
        Err(o) => {
            // Accept a slightly missed target when the achieved accuracy is
            // still far inside every downstream tolerance.
            if o.value.is_finite() && o.abs_err <= 1e-9 * o.value.abs() {
                Ok(o.value)
            } else {
                Err(Error::Accuracy {
                    context: context.into(),
                    requested: rtol,
                    achieved: if o.value != 0.0 { o.abs_err / o.value.abs() } else { o.abs_err },
                })
            }
        }
    }
}

/// `ln` of the scaled integral over `s` in `[s_lo, s_hi]`, `s_hi <= 0.5`:
/// integrand `s^a (1-s)^(-b) exp(2((1-s)^(-k) - w_ref^(-k)))` with
/// `w_ref = 1 - s_hi`. The exponent difference is order one here.
pub(crate) fn ln_low_segment(params: &ModelParams, s_lo: f64, s_hi: f64, rtol: f64) -> Result<f64> {
    let (a, b, k) = (params.a, params.b, params.kappa);
    let ref_pow = (1.0 - s_hi).powf(-k);
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let omm = 1.0 - s;
        let expo = a * s.ln() - b * omm.ln() + 2.0 * (omm.powf(-k) - ref_pow);
        if expo < -745.0 {
            0.0
        } else {
            expo.exp()
        }
    };
    let out = quad::adaptive(&f, s_lo, s_hi, rtol, 0.0, 600, &[]);
    Ok(quad_to_result(out, rtol, "scaled closure integral (low range)")?.ln())
}

/// `ln` of the scaled integral over `w = (1-s)` in `[w_ref, w_ref (1+dmax)]`
/// (upper range, `s >= 0.5`), parametrised by `d = w/w_ref - 1` so the
/// exponent difference `2 (w^(-k) - w_ref^(-k))` keeps full relative accuracy
/// deep inside the saturation boundary layer:
///
/// ```text
/// ln integral = (1 - b) ln(w_ref)
///             + ln integral_0^dmax (1-w)^a (1+d)^(-b)
///                    exp( 2 w_ref^(-k) expm1(-k ln1p(d)) ) dd
/// ```
pub(crate) fn ln_scaled_tail(
    params: &ModelParams,
    omega_ref: f64,
    delta_max: f64,
    rtol: f64,
    max_intervals: usize,
) -> Result<f64> {
    let (a, b, k) = (params.a, params.b, params.kappa);
    let scale = 2.0 * omega_ref.powf(-k);
    let f = |d: f64| {
        let ln1pd = d.ln_1p();
        let omega = omega_ref * (1.0 + d);
        let expo = a * (-omega).ln_1p() - b * ln1pd + scale * f64::exp_m1(-k * ln1pd);
        if expo < -745.0 {
            0.0
        } else {
            expo.exp()
        }
    };
    // Seed the partition at the boundary-layer scale: the exponent reaches
    // order one at d ~ w_ref^kappa / (2 kappa).
    let d1 = (omega_ref.powf(k) / (2.0 * k)).min(delta_max * 0.5);
    let mut seeds = Vec::new();
    if d1 > 0.0 {
        let mut d = d1 * 0.0625;
        while d < delta_max {
            seeds.push(d);
            d *= 4.0;
            if seeds.len() > 60 {
                break;
            }
        }
    }
    let out = quad::adaptive(&f, 0.0, delta_max, rtol, 0.0, max_intervals, &seeds);
    let val = quad_to_result(out, rtol, "scaled closure integral (saturation tail)")?;
    Ok((1.0 - b) * omega_ref.ln() + val.ln())
}

/// Rescaling exponent `2 (w_hi^(-k) - w_lo^(-k))` for `w_hi > w_lo`, i.e. the
/// (negative) log-factor that converts an integral scaled at `w_hi` to one
/// scaled at `w_lo`. Uses `expm1` of the log-ratio so the result is accurate
/// whenever it is small enough to matter.
pub(crate) fn rescale_exponent(omega_hi: f64, omega_lo: f64, kappa: f64) -> f64 {
    2.0 * omega_lo.powf(-kappa) * f64::exp_m1(-kappa * (omega_hi / omega_lo).ln())
}

/// Direct evaluation of `ln(pq)(m)` by scaled quadrature.
pub(crate) fn ln_pq_direct(params: &ModelParams, m: f64, omm: f64, rtol: f64) -> Result<f64> {
    if m <= 0.5 {
        let ln_itilde = ln_low_segment(params, 0.0, m, rtol)?;
        return Ok(ln_itilde - m.ln());
    }
    // Tail over s in [0.5, m] in boundary-layer coordinates, plus the low
    // piece rescaled to the tail's reference (it underflows harmlessly when
    // its true relative contribution does).
    let delta_max = 0.5 / omm - 1.0;
    let ln_right = ln_scaled_tail(params, omm, delta_max, rtol, 2000)?;
    let ln_left = ln_low_segment(params, 0.0, 0.5, rtol)? + rescale_exponent(0.5, omm, params.kappa);
    Ok(logsumexp2(ln_right, ln_left) - m.ln())
}

/// Direct evaluation of `ln Q(m)` by quadrature (no exponential scaling
/// needed: the integrand is polynomially singular only).
pub(crate) fn ln_big_q_direct(params: &ModelParams, m: f64, omm: f64, rtol: f64) -> Result<f64> {
    let (a, b) = (params.a, params.b);
    if m <= 0.5 {
        let f = |s: f64| if s <= 0.0 { 0.0 } else { (a * s.ln() - b * (1.0 - s).ln()).exp() };
        let out = quad::adaptive(&f, 0.0, m, rtol, 0.0, 600, &[]);
        return Ok(quad_to_result(out, rtol, "Kirchhoff potential quadrature")?.ln());
    }
    let f_low = |s: f64| if s <= 0.0 { 0.0 } else { (a * s.ln() - b * (1.0 - s).ln()).exp() };
    let low = quad_to_result(
        quad::adaptive(&f_low, 0.0, 0.5, rtol, 0.0, 600, &[]),
        rtol,
        "Kirchhoff potential quadrature",
    )?;
    // Upper part in w = 1 - s over [omm, 0.5], geometric seeds toward omm.
    let f_hi = |w: f64| ((-w).ln_1p() * a - b * w.ln()).exp();
    let mut seeds = Vec::new();
    let mut w = omm * 4.0;
    while w < 0.5 {
        seeds.push(w);
        w *= 4.0;
    }
    let hi = quad_to_result(
        quad::adaptive(&f_hi, omm, 0.5, rtol, 0.0, 2000, &seeds),
        rtol,
        "Kirchhoff potential quadrature (saturation side)",
    )?;
    Ok((low + hi).ln())
}

/// Direct evaluation of `R_L(m) = integral_0^m ln(pq) ds` by nested
/// quadrature; test/oracle path only.
pub(crate) fn rl_direct(params: &ModelParams, m: f64, rtol: f64) -> Result<f64> {
    let head = series_ell(params, SERIES_CUTOFF)
        - 2.0 * lambda_kappa(1.0 - SERIES_CUTOFF, params.kappa);
    if m <= SERIES_CUTOFF {
        return Ok(series_ell(params, m) - 2.0 * lambda_kappa(1.0 - m, params.kappa));
    }
    let inner_rtol = (rtol * 1e-2).max(1e-13);
    let f = |s: f64| {
        let omm = 1.0 - s;
        if s < SERIES_CUTOFF {
            return series_ln_pq(params, s, omm);
        }
        ln_pq_direct(params, s, omm, inner_rtol).unwrap_or(f64::NAN)
    };
    // Geometric seeds toward saturation where ln(pq) varies fastest.
    let mut seeds = Vec::new();
    let mut w = 1.0 - m;
    for _ in 0..60 {
        w *= 2.0;
        if w >= 0.5 {
            break;
        }
        seeds.push(1.0 - w);
    }
    let out = quad::adaptive(&f, SERIES_CUTOFF, m, rtol.max(1e-9), 1e-14, 3000, &seeds);
    Ok(head + quad_to_result(out, rtol, "entropy integral quadrature")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test1_params() -> ModelParams {
        ModelParams::uniform(2.0, 2.0, 1.0, 1.0, 3).unwrap()
    }

    fn test2_params() -> ModelParams {
        ModelParams::uniform(1.0, 2.0, 0.9, 1.0, 3).unwrap()
    }

    #[test]
    fn p_matches_closed_form_and_decreases() {
        let cls = Closures::direct(test1_params());
        // p(0.9) with kappa = 1 is e^(-10).
        assert!((cls.p(0.9).unwrap() - (-10.0f64).exp()).abs() < 1e-18);
        assert!((cls.p(0.0).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
        let mut prev = cls.p(0.0).unwrap();
        for k in 1..40 {
            let m = k as f64 / 40.0;
            let cur = cls.p(m).unwrap();
            assert!(cur < prev, "p must strictly decrease, failed at M = {m}");
            prev = cur;
        }
    }

    #[test]
    fn p_rejects_saturated_or_invalid_input() {
        let cls = Closures::direct(test1_params());
        assert!(cls.p(1.0).is_err());
        assert!(cls.p(1.5).is_err());
        assert!(cls.p(-0.1).is_err());
        assert!(cls.p(f64::NAN).is_err());
        // Values beyond the cap but below 1 are evaluated at the cap.
        let capped = cls.ln_p(1.0 - 1e-14).unwrap();
        assert_eq!(capped, cls.ln_p(1.0 - DELTA_CAP).unwrap());
    }

    #[test]
    fn q_vanishes_at_degenerate_limit() {
        let cls = Closures::direct(test1_params());
        assert_eq!(cls.q(0.0).unwrap(), 0.0);
        let q = cls.q(1e-8).unwrap();
        assert!(q > 0.0 && q < 1e-10, "q(1e-8) = {q}");
    }

    #[test]
    fn q_small_mass_limit_matches_e_over_three() {
        // q / M^a -> e / (a+1) as M -> 0 (independent of kappa); for a = 2
        // that is e/3 ~ 0.9061. At M = 1e-3 the ratio is within 1%.
        let cls = Closures::direct(test1_params());
        let ratio = cls.q(1e-3).unwrap() / 1e-3f64.powi(2);
        let limit = 1.0f64.exp() / 3.0;
        assert!((ratio / limit - 1.0).abs() < 1e-2, "ratio {ratio} vs {limit}");
    }

    #[test]
    fn kirchhoff_matches_closed_form_for_quadratic_exponents() {
        // For a = b = 2: Q(M) = 1/(1-M) + 2 ln(1-M) + M - 1.
        let cls = Closures::direct(test1_params());
        for &m in &[0.1f64, 0.3, 0.5, 0.9, 0.99] {
            let exact = 1.0 / (1.0 - m) + 2.0 * (1.0 - m).ln() + m - 1.0;
            let got = cls.kirchhoff(m).unwrap();
            assert!(
                (got - exact).abs() <= 1e-10 * exact.abs().max(1e-3),
                "Q({m}) = {got} vs {exact}"
            );
        }
        assert!((cls.kirchhoff(0.5).unwrap() - 0.113_705_638_880_109_4).abs() < 1e-12);
    }

    #[test]
    fn kirchhoff_derivative_is_the_diffusivity() {
        let cls = Closures::direct(test2_params());
        for &m in &[0.05, 0.3, 0.6, 0.9] {
            let dm = 1e-6 * (1.0 - m);
            let fd = (cls.kirchhoff(m + dm).unwrap() - cls.kirchhoff(m - dm).unwrap()) / (2.0 * dm);
            let d = cls.diffusivity(m).unwrap();
            assert!((fd / d - 1.0).abs() < 1e-6, "Q'({m}) = {fd} vs D = {d}");
        }
    }

    #[test]
    fn phi_is_zero_at_origin_and_strictly_increasing() {
        let cls = Closures::tabulated(test1_params()).unwrap();
        assert_eq!(cls.phi(0.0).unwrap(), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=400 {
            let m = k as f64 / 401.0;
            let lp = cls.log_phi(m).unwrap();
            assert!(lp > prev, "ln Phi must strictly increase, failed at M = {m}");
            prev = lp;
        }
        // Saturation blow-up: Phi(1 - 1e-4) dwarfs Phi(0.9).
        let tail = cls.log_phi(1.0 - 1e-4).unwrap();
        let mid = cls.log_phi(0.9).unwrap();
        assert!(tail > mid + 10f64.ln());
        // In plain value space the comparison still holds (possibly via inf).
        assert!(cls.phi(1.0 - 1e-4).unwrap() > 10.0 * cls.phi(0.9).unwrap());
    }

    #[test]
    fn log_qp_slope_dominates_degeneracy_rate() {
        // d/dM log(q/p) >= a/M across the range, for both parameter sets.
        for params in [test1_params(), test2_params()] {
            let a = params.a;
            let cls = Closures::tabulated(params).unwrap();
            for k in 1..200 {
                let m = k as f64 / 200.0;
                let slope = cls.dlog_qp(m).unwrap();
                assert!(
                    slope >= a / m * (1.0 - 1e-9),
                    "2f'/f = {slope} < a/M = {} at M = {m}",
                    a / m
                );
            }
        }
    }

    #[test]
    fn table_matches_direct_quadrature() {
        for params in [test1_params(), test2_params()] {
            let tab = Closures::tabulated(params.clone()).unwrap();
            let dir = Closures::with_tol(params, 1e-12);
            let probes = [
                3e-5, 1e-4, 1e-3, 0.01, 0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 0.97, 0.999,
                1.0 - 1e-4, 1.0 - 1e-6,
            ];
            for &m in &probes {
                let lq_t = tab.log_qp(m).unwrap();
                let lq_d = dir.log_qp(m).unwrap();
                // Absolute error on ln q is relative error on q.
                assert!(
                    (lq_t - lq_d).abs() < 1e-8,
                    "log(q/p) table {lq_t} vs direct {lq_d} at M = {m}"
                );
                let q_t = tab.kirchhoff(m).unwrap();
                let q_d = dir.kirchhoff(m).unwrap();
                assert!(
                    (q_t / q_d - 1.0).abs() < 1e-8,
                    "Q table {q_t} vs direct {q_d} at M = {m}"
                );
            }
            for &m in &[1e-3, 0.05, 0.3, 0.6, 0.9, 0.99] {
                let l_t = tab.log_qp_integral(m).unwrap();
                let l_d = dir.log_qp_integral(m).unwrap();
                assert!(
                    (l_t - l_d).abs() < 1e-8 * l_d.abs().max(1.0),
                    "L table {l_t} vs direct {l_d} at M = {m}"
                );
            }
        }
    }

    #[test]
    fn asymptotic_constants_stabilize() {
        let cls = Closures::tabulated(test1_params()).unwrap();
        let est = cls.asymptotic_constants().unwrap();
        // q / M^a -> e/3 for a = 2 (within 1%, per the vanishing-mass series).
        let c3 = est.q_rate_at_vanishing.value;
        assert!((c3 / (1.0f64.exp() / 3.0) - 1.0).abs() < 1e-2, "c3 = {c3}");
        assert!(est.q_rate_at_vanishing.stabilized);
        // log(q/p) (1-M)^kappa -> 2 by the closed-form singular part.
        let c2 = est.log_ratio_rate_at_saturation.value;
        assert!((c2 - 2.0).abs() < 0.05, "c2 = {c2}");
        // pq rate: finite, positive, stabilized (l'Hopital value 1/(2 kappa)).
        let c1 = est.pq_rate_at_saturation.value;
        assert!(c1.is_finite() && c1 > 0.0);
        assert!(est.pq_rate_at_saturation.stabilized);
        assert!((c1 / 0.5 - 1.0).abs() < 0.1, "c1 = {c1}");
    }

    #[test]
    fn entropy_integral_agrees_with_nested_quadrature_small_mass() {
        // Series vs direct nested quadrature just above the cutoff.
        let params = test1_params();
        let dir = Closures::with_tol(params.clone(), 1e-12);
        let m = 2.0 * SERIES_CUTOFF;
        let val = dir.log_qp_integral(m).unwrap();
        let series = series_ell(&params, m);
        assert!(
            (val - series).abs() < 1e-9 * series.abs(),
            "L({m}) quadrature {val} vs series {series}"
        );
    }
}
