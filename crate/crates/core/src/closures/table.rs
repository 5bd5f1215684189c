//! Precomputed closure table on a uniform grid in `logit M`.
//!
//! The grid coordinate `z = ln(M/(1-M))` resolves both degenerate ends with
//! a single uniform spacing: `z` runs from `logit(1e-5)` to
//! `logit(1 - 1e-12)` in steps of about `0.01` (~4000 nodes). Per node the
//! table stores the smooth, bounded quantities
//!
//! * `t = ln(p q)` and its exact `z`-derivative,
//! * `ln Q` (Kirchhoff potential) and its exact `z`-derivative,
//! * `R_L = integral_0^M ln(pq) ds` (entropy integral minus its closed-form
//!   singular part),
//!
//! and evaluation is cubic Hermite interpolation per segment, so values and
//! first derivatives are consistent to interpolation accuracy (~1e-9 at this
//! spacing). Quantities that diverge at the ends — `2 (1-M)^(-kappa)` inside
//! `log(q/p)`, `2 Lambda_kappa` inside `L` — are added back in closed form by
//! the caller, never interpolated.
//!
//! Node data comes from the same scaled segment quadratures as direct
//! evaluation, accumulated left to right in log space: `ln Itilde` obeys a
//! log-sum-exp recurrence whose rescaling exponent is computed via `expm1`
//! in the ratio `w_j / w_{j+1}`, keeping full precision down to
//! `1 - M = 1e-12` where naive accumulation of `ln I ~ 2e12` would quantize
//! at `2^-52 * 2e12 ~ 5e-4`.

use super::quad;
use crate::error::{Error, Result};
use crate::params::{ModelParams, DELTA_CAP};

/// Target spacing of the uniform logit grid.
const TARGET_SPACING: f64 = 0.01;

/// 5-point Gauss–Legendre rule on [-1, 1] for the per-segment entropy
/// integral (the integrand is the Hermite cubic times a smooth Jacobian).
const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Cubic-Hermite closure data on a uniform logit grid; see the module docs.
#[derive(Debug)]
pub struct ClosureTable {
    zeta_lo: f64,
    spacing: f64,
    m: Vec<f64>,
    omm: Vec<f64>,
    t: Vec<f64>,
    dt: Vec<f64>,
    lnq: Vec<f64>,
    dlnq: Vec<f64>,
    rl: Vec<f64>,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cubic Hermite value and `z`-derivative on a unit segment, given endpoint
/// values `y0, y1`, endpoint `z`-derivatives `d0, d1`, and segment width `h`.
fn hermite(theta: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> (f64, f64) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = y0 * h00 + y1 * h01 + h * (d0 * h10 + d1 * h11);
    let dtheta = 6.0 * (t2 - theta) * (y0 - y1)
        + h * (d0 * (3.0 * t2 - 4.0 * theta + 1.0) + d1 * (3.0 * t2 - 2.0 * theta));
    (value, dtheta / h)
}

impl ClosureTable {
    /// Builds the table for one parameter set; `rtol` is the per-segment
    /// quadrature tolerance (the default used by `Closures::tabulated` is
    /// `1e-12`).
    pub(crate) fn build(params: &ModelParams, rtol: f64) -> Result<Self> {
        let m_lo = super::SERIES_CUTOFF;
        let m_hi = 1.0 - DELTA_CAP;
        let zeta_lo = (m_lo / (1.0 - m_lo)).ln();
        let zeta_hi = m_hi.ln() - DELTA_CAP.ln();
        let n = ((zeta_hi - zeta_lo) / TARGET_SPACING).ceil() as usize + 1;
        let spacing = (zeta_hi - zeta_lo) / (n - 1) as f64;

        let mut m = Vec::with_capacity(n);
        let mut omm = Vec::with_capacity(n);
        for j in 0..n {
            let z = zeta_lo + spacing * j as f64;
            m.push(logistic(z));
            omm.push(logistic(-z));
        }
        // Pin the endpoints to the exact cutoff/cap values.
        m[0] = m_lo;
        omm[0] = 1.0 - m_lo;
        m[n - 1] = m_hi;
        omm[n - 1] = DELTA_CAP;

        // ln Itilde, accumulated in log space with per-segment rescaling.
        let mut ln_itilde = vec![0.0; n];
        ln_itilde[0] = super::series_ln_pq(params, m[0], omm[0]) + m[0].ln();
        for j in 0..n - 1 {
            let seg = if m[j + 1] <= 0.5 {
                super::ln_low_segment(params, m[j], m[j + 1], rtol)?
            } else {
                let delta_max = omm[j] / omm[j + 1] - 1.0;
                super::ln_scaled_tail(params, omm[j + 1], delta_max, rtol, 200)?
            };
            let shift = super::rescale_exponent(omm[j], omm[j + 1], params.kappa);
            ln_itilde[j + 1] = logsumexp2(ln_itilde[j] + shift, seg);
        }

        let mut t = Vec::with_capacity(n);
        let mut dt = Vec::with_capacity(n);
        let (a, b, k) = (params.a, params.b, params.kappa);
        for j in 0..n {
            let tj = ln_itilde[j] - m[j].ln();
            // dt/dM = -2 kappa w^(-1-kappa) - 1/M + M^(a-1) w^(-b) / Itilde,
            // converted to the logit coordinate by dM/dz = M (1-M).
            let ratio = ((a - 1.0) * m[j].ln() - b * omm[j].ln() - ln_itilde[j] + m[j].ln()).exp();
            let dt_dm = -2.0 * k * omm[j].powf(-1.0 - k) - 1.0 / m[j] + ratio;
            t.push(tj);
            dt.push(dt_dm * m[j] * omm[j]);
        }

        // ln Q accumulation (no exponential scaling needed).
        let mut lnq = vec![0.0; n];
        let mut dlnq = vec![0.0; n];
        lnq[0] = super::series_ln_big_q(params, m[0]);
        for j in 0..n - 1 {
            let seg = kirchhoff_segment(params, m[j], omm[j], m[j + 1], omm[j + 1], rtol)?;
            lnq[j + 1] = logsumexp2(lnq[j], seg);
        }
        for j in 0..n {
            // dQ/dM = M^a (1-M)^(-b); d(ln Q)/dz = dQ/dM * M (1-M) / Q.
            dlnq[j] = ((a + 1.0) * m[j].ln() + (1.0 - b) * omm[j].ln() - lnq[j]).exp();
        }

        let mut table = Self { zeta_lo, spacing, m, omm, t, dt, lnq, dlnq, rl: Vec::new() };

        // R_L accumulation: per-segment Gauss–Legendre of the Hermite
        // interpolant of t = ln(pq) times the logit Jacobian.
        let mut rl = vec![0.0; n];
        rl[0] = super::series_ell(params, table.m[0])
            - 2.0 * super::lambda_kappa(table.omm[0], params.kappa);
        for j in 0..n - 1 {
            rl[j + 1] = rl[j] + table.rl_piece(j, 1.0);
        }
        table.rl = rl;
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Segment index and local coordinate for a guarded `m` (with `1-m`
    /// passed alongside so the saturation side keeps full resolution).
    fn locate(&self, m: f64, omm: f64) -> (usize, f64) {
        let zeta = m.ln() - omm.ln();
        let pos = (zeta - self.zeta_lo) / self.spacing;
        let j = (pos.floor() as isize).clamp(0, self.m.len() as isize - 2) as usize;
        let theta = (pos - j as f64).clamp(0.0, 1.0);
        (j, theta)
    }

    /// `t = ln(pq)` and `dt/dM`.
    pub(crate) fn eval_t(&self, m: f64, omm: f64) -> (f64, f64) {
        let (j, theta) = self.locate(m, omm);
        let (v, dz) =
            hermite(theta, self.spacing, self.t[j], self.t[j + 1], self.dt[j], self.dt[j + 1]);
        (v, dz / (m * omm))
    }

    /// `ln Q` and `d(ln Q)/dM`.
    pub(crate) fn eval_lnq(&self, m: f64, omm: f64) -> (f64, f64) {
        let (j, theta) = self.locate(m, omm);
        let (v, dz) = hermite(
            theta,
            self.spacing,
            self.lnq[j],
            self.lnq[j + 1],
            self.dlnq[j],
            self.dlnq[j + 1],
        );
        (v, dz / (m * omm))
    }

    /// `R_L(M) = integral_0^M ln(pq) ds`.
    pub(crate) fn eval_rl(&self, m: f64, omm: f64) -> f64 {
        let (j, theta) = self.locate(m, omm);
        self.rl[j] + self.rl_piece(j, theta)
    }

    /// `integral` of the Hermite `t` over the first `theta` of segment `j`,
    /// in `M`-measure (Jacobian `M (1-M)` per unit `z`).
    fn rl_piece(&self, j: usize, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let half = 0.5 * theta;
        let mut acc = 0.0;
        for (&x, &w) in GL5_X.iter().zip(GL5_W.iter()) {
            let th = half * (x + 1.0);
            let (tv, _) = hermite(
                th,
                self.spacing,
                self.t[j],
                self.t[j + 1],
                self.dt[j],
                self.dt[j + 1],
            );
            let z = self.zeta_lo + self.spacing * (j as f64 + th);
            let mv = logistic(z);
            let ov = logistic(-z);
            acc += w * tv * mv * ov;
        }
        acc * half * self.spacing
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

/// `ln` of one Kirchhoff segment `integral_{s0}^{s1} s^a (1-s)^(-b) ds`,
/// switching to `w = 1-s` coordinates on the saturation side so the
/// integration variable keeps relative precision.
fn kirchhoff_segment(
    params: &ModelParams,
    s0: f64,
    omm0: f64,
    s1: f64,
    omm1: f64,
    rtol: f64,
) -> Result<f64> {
    let (a, b) = (params.a, params.b);
    let out = if s1 <= 0.5 {
        let f = |s: f64| if s <= 0.0 { 0.0 } else { (a * s.ln() - b * (1.0 - s).ln()).exp() };
        quad::adaptive(&f, s0, s1, rtol, 0.0, 200, &[])
    } else {
        // d = w/w1 - 1 over [0, w0/w1 - 1]; pull out w1^(1-b).
        let scale = (1.0 - b) * omm1.ln();
        let f = move |d: f64| {
            let w = omm1 * (1.0 + d);
            (a * (-w).ln_1p() - b * d.ln_1p()).exp()
        };
        let delta_max = omm0 / omm1 - 1.0;
        return match quad::adaptive(&f, 0.0, delta_max, rtol, 0.0, 200, &[]) {
            Ok(o) => Ok(scale + o.value.ln()),
            Err(o) if o.value.is_finite() && o.abs_err <= 1e-9 * o.value => {
                Ok(scale + o.value.ln())
            }
            Err(_) => Err(Error::Accuracy {
                context: "Kirchhoff table segment".into(),
                requested: rtol,
                achieved: f64::NAN,
            }),
        };
    };
    match out {
        Ok(o) => Ok(o.value.ln()),
        Err(o) if o.value.is_finite() && o.abs_err <= 1e-9 * o.value => Ok(o.value.ln()),
        Err(_) => Err(Error::Accuracy {
            context: "Kirchhoff table segment".into(),
            requested: rtol,
            achieved: f64::NAN,
        }),
    }
}
