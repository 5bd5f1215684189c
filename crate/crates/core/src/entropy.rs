//! Entropy algebra of the cross-diffusion system.
//!
//! The convex entropy density is
//!
//! ```text
//! h(u) = sum_i (u_i ln u_i - u_i + 1) + L(M),   L(M) = integral_0^M log(q/p)
//! ```
//!
//! with gradient `d h/d u_i = ln u_i + log(q/p)(M)` and Hessian
//! `H_ij = delta_ij / u_i + d/dM log(q/p)(M)`, a diagonal-plus-rank-one
//! matrix that is symmetric positive definite on positive compositions.
//!
//! Relative entropy against a positive reference `u_D` splits into a
//! species-mixing part and a saturation part,
//!
//! ```text
//! h*(u | u_D) = sum_i u_Di g(u_i/u_Di - 1)
//!             + [ L(M) - L(M_D) - log(q/p)(M_D) (M - M_D) ]
//! ```
//!
//! with `g(d) = (1+d) ln(1+d) - d >= 0`; both parts are nonnegative and the
//! guarded form stays accurate (no cancellation) arbitrarily close to the
//! reference. Entropy variables `w_i = d h/d u_i - d h/d u_i |_(u_D)` are
//! inverted in closed form up to one scalar root-find on the strictly
//! increasing map `ln Phi`.

use nalgebra::DMatrix;

use crate::closures::Closures;
use crate::error::{Error, Result};
use crate::params::DELTA_CAP;

/// A nonnegative species composition with total biomass below saturation.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    u: Vec<f64>,
    m: f64,
}

impl Composition {
    /// Validates entrywise nonnegativity and `M = sum u_i < 1`.
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Domain("composition needs at least one species".into()));
        }
        for (i, &v) in u.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "species {i}: volume fraction must be finite and >= 0, got {v}"
                )));
            }
        }
        let m: f64 = u.iter().sum();
        if m >= 1.0 {
            return Err(Error::Domain(format!("total biomass M = {m} >= 1 (saturated)")));
        }
        Ok(Self { u, m })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// True when every fraction is strictly positive.
    pub fn strictly_positive(&self) -> bool {
        self.u.iter().all(|&v| v > 0.0)
    }
}

/// A strictly positive reference composition with its entropy data
/// precomputed, so per-node relative-entropy evaluation costs one closure
/// lookup.
#[derive(Debug, Clone)]
pub struct Reference {
    u: Vec<f64>,
    m: f64,
    ln_u: Vec<f64>,
    log_qp: f64,
    ell: f64,
    log_phi: f64,
}

impl Reference {
    pub fn new(cls: &Closures, u_d: &[f64]) -> Result<Self> {
        let comp = Composition::new(u_d.to_vec())?;
        if !comp.strictly_positive() {
            return Err(Error::Domain(
                "reference composition must be strictly positive".into(),
            ));
        }
        let m = comp.m();
        Ok(Self {
            ln_u: comp.u().iter().map(|&v| v.ln()).collect(),
            log_qp: cls.log_qp(m)?,
            ell: cls.log_qp_integral(m)?,
            log_phi: cls.log_phi(m)?,
            u: comp.u,
            m,
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn log_qp(&self) -> f64 {
        self.log_qp
    }
}

/// `x ln x - x + 1`, extended by its limit value 1 at `x = 0`.
pub fn xlogx_term(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// `(1+d) ln(1+d) - d`, the Bregman kernel of `x ln x`; nonnegative, zero
/// only at `d = 0`. Guarded against the `0 * ln 0` corner at `d = -1`.
fn bregman_kernel(d: f64) -> f64 {
    if d <= -1.0 {
        return 1.0;
    }
    let v = (1.0 + d) * d.ln_1p() - d;
    v.max(0.0)
}

/// Entropy density `h(u)`; admits zero fractions.
pub fn entropy_density(cls: &Closures, u: &[f64]) -> Result<f64> {
    let comp = Composition::new(u.to_vec())?;
    let mut h = 0.0;
    for &v in comp.u() {
        h += xlogx_term(v);
    }
    Ok(h + cls.log_qp_integral(comp.m())?)
}

/// Gradient `d h/d u_i = ln u_i + log(q/p)(M)`; requires strictly positive
/// fractions.
pub fn entropy_gradient(cls: &Closures, u: &[f64]) -> Result<Vec<f64>> {
    let comp = Composition::new(u.to_vec())?;
    if !comp.strictly_positive() {
        return Err(Error::Domain("entropy gradient needs u_i > 0".into()));
    }
    let lg = cls.log_qp(comp.m())?;
    Ok(comp.u().iter().map(|&v| v.ln() + lg).collect())
}

/// Relative entropy `h*(u | u_D) = h(u) - h(u_D) - <grad h(u_D), u - u_D>`,
/// evaluated through the cancellation-free split.
pub fn relative_entropy(cls: &Closures, u: &[f64], rf: &Reference) -> Result<f64> {
    let (h1, h2) = relative_entropy_split(cls, u, rf)?;
    Ok(h1 + h2)
}

/// The two nonnegative parts of the relative entropy: species mixing against
/// the reference, and the saturation (total-biomass) Bregman distance.
pub fn relative_entropy_split(cls: &Closures, u: &[f64], rf: &Reference) -> Result<(f64, f64)> {
    if u.len() != rf.n() {
        return Err(Error::Domain(format!(
            "composition has {} species, reference {}",
            u.len(),
            rf.n()
        )));
    }
    let comp = Composition::new(u.to_vec())?;
    let mut h1 = 0.0;
    for (&v, &vd) in comp.u().iter().zip(rf.u.iter()) {
        h1 += vd * bregman_kernel(v / vd - 1.0);
    }
    let m = comp.m();
    let h2 = cls.log_qp_integral(m)? - rf.ell - rf.log_qp * (m - rf.m);
    Ok((h1, h2.max(0.0)))
}

/// Entropy variables relative to the reference:
/// `w_i = ln(u_i/u_Di) + log(q/p)(M) - log(q/p)(M_D)`.
pub fn entropy_vars(cls: &Closures, u: &[f64], rf: &Reference) -> Result<Vec<f64>> {
    if u.len() != rf.n() {
        return Err(Error::Domain(format!(
            "composition has {} species, reference {}",
            u.len(),
            rf.n()
        )));
    }
    let comp = Composition::new(u.to_vec())?;
    if !comp.strictly_positive() {
        return Err(Error::Domain("entropy variables need u_i > 0".into()));
    }
    let lg = cls.log_qp(comp.m())?;
    Ok(comp
        .u()
        .iter()
        .zip(rf.ln_u.iter())
        .map(|(&v, &lnd)| v.ln() - lnd + lg - rf.log_qp)
        .collect())
}

/// Entropy Hessian `H_ij = delta_ij/u_i + (d/dM) log(q/p)(M)`.
pub fn entropy_hessian(cls: &Closures, u: &[f64]) -> Result<DMatrix<f64>> {
    let comp = Composition::new(u.to_vec())?;
    if !comp.strictly_positive() {
        return Err(Error::Domain("entropy Hessian needs u_i > 0".into()));
    }
    let sigma = cls.dlog_qp(comp.m())?;
    let n = comp.n();
    let mut h = DMatrix::from_element(n, n, sigma);
    for i in 0..n {
        h[(i, i)] += 1.0 / comp.u()[i];
    }
    Ok(h)
}

/// Inverts entropy variables: returns the unique positive composition `u`
/// with `entropy_vars(u) = w`. The total follows from one scalar root of the
/// strictly increasing map `ln Phi`; the fractions are then a softmax split
/// of it, so `sum u_i = M` holds to rounding by construction.
pub fn invert_entropy_vars(cls: &Closures, w: &[f64], rf: &Reference) -> Result<Vec<f64>> {
    if w.len() != rf.n() {
        return Err(Error::Domain(format!(
            "entropy variables have {} entries, reference {}",
            w.len(),
            rf.n()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("entropy variables must be finite".into()));
    }
    // ln Phi(M) = ln Phi(M_D) + logsumexp_i( w_i + ln(u_Di / M_D) ).
    let mut peak = f64::NEG_INFINITY;
    for (wi, &lnd) in w.iter().zip(rf.ln_u.iter()) {
        peak = peak.max(wi + lnd);
    }
    let mut acc = 0.0;
    for (wi, &lnd) in w.iter().zip(rf.ln_u.iter()) {
        acc += (wi + lnd - peak).exp();
    }
    let lse = peak + acc.ln();
    let target = rf.log_phi + lse - rf.m.ln();

    let m = solve_log_phi(cls, target, rf.m)?;
    // u_i = M * softmax(w_i + ln u_Di).
    Ok(w.iter().zip(rf.ln_u.iter()).map(|(wi, &lnd)| m * ((wi + lnd - lse).exp())).collect())
}

/// Solves `ln Phi(M) = target` for `M` in `(0, 1 - DELTA_CAP]` by damped
/// Newton in `x = ln M` with a maintained bracket (the derivative
/// `d ln Phi / d ln M >= a >= 1`, so plain Newton converges fast once near).
fn solve_log_phi(cls: &Closures, target: f64, m_guess: f64) -> Result<f64> {
    let cap = 1.0 - DELTA_CAP;
    let g_hi = cls.log_phi(cap)? - target;
    if g_hi < 0.0 {
        return Err(Error::Domain(
            "entropy variables correspond to a saturated state (M beyond the cap)".into(),
        ));
    }
    let mut xlo = -700.0; // ln M; ln Phi -> -inf as M -> 0, so g(xlo) < 0
    let mut xhi = cap.ln();
    let mut x = m_guess.clamp(1e-300, cap).ln();
    for _ in 0..200 {
        let m = x.exp().min(cap);
        let g = cls.log_phi(m)? - target;
        if g.abs() <= 1e-12 {
            return Ok(m);
        }
        if g > 0.0 {
            xhi = x;
        } else {
            xlo = x;
        }
        // d(ln Phi)/d(ln M) = M * Phi'/Phi.
        let slope = m * cls.dlog_phi(m)?;
        let mut xn = x - g / slope;
        if !(xn > xlo && xn < xhi) {
            xn = 0.5 * (xlo + xhi);
        }
        if (xn - x).abs() < 1e-15 {
            return Ok(xn.exp().min(cap));
        }
        x = xn;
    }
    Err(Error::NonConvergence {
        context: "entropy-variable inversion (ln Phi root)".into(),
        residual: (cls.log_phi(x.exp().min(cap))? - target).abs(),
    })
}

/// Weighted saturation seminorm
/// `integral_{M_D}^{M} s^((a-1)/2) (1-s)^(-(1+b+kappa)/2) ds` (signed),
/// whose square controls the saturation part of the relative entropy.
pub fn saturation_seminorm(cls: &Closures, m: f64, rf: &Reference) -> Result<f64> {
    let pr = cls.params();
    let (lo, hi, sign) = if m >= rf.m { (rf.m, m, 1.0) } else { (m, rf.m, -1.0) };
    if !(0.0..1.0).contains(&lo) || hi >= 1.0 {
        return Err(Error::Domain("seminorm endpoints must lie in [0, 1)".into()));
    }
    let (a, b, k) = (pr.a, pr.b, pr.kappa);
    // Midpoint-ish fixed Gauss rule is enough: the integrand is smooth on
    // the interior interval; 40 panels of 5-point Gauss keep 1e-10 here.
    let gl_x = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    let gl_w = [
        0.236_926_885_056_189_08,
        0.478_628_670_499_366_47,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
    ];
    let panels = 40;
    let hstep = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * hstep;
        for (&x, &wt) in gl_x.iter().zip(gl_w.iter()) {
            let s = c + 0.5 * hstep * x;
            let val = if s <= 0.0 {
                0.0
            } else {
                (0.5 * (a - 1.0) * s.ln() - 0.5 * (1.0 + b + k) * (1.0 - s).ln()).exp()
            };
            acc += wt * val;
        }
    }
    Ok(sign * acc * 0.5 * hstep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cls() -> Closures {
        Closures::direct(ModelParams::uniform(2.0, 2.0, 1.0, 1.0, 3).unwrap())
    }

    fn rand_composition(rng: &mut ChaCha8Rng, n: usize, m_max: f64) -> Vec<f64> {
        let m = rng.gen_range(0.02..m_max);
        let mut e: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
        let s: f64 = e.iter().sum();
        for v in &mut e {
            *v *= m / s;
        }
        e
    }

    #[test]
    fn xlogx_term_limits() {
        assert_eq!(xlogx_term(0.0), 1.0);
        assert_eq!(xlogx_term(1.0), 0.0);
        assert!(xlogx_term(0.3) > 0.0);
        assert!(xlogx_term(2.0) > 0.0);
    }

    #[test]
    fn split_matches_direct_bregman_evaluation() {
        let cls = cls();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        let u = [0.3, 0.05, 0.25];
        let (h1, h2) = relative_entropy_split(&cls, &u, &rf).unwrap();
        assert!(h1 > 0.0 && h2 > 0.0);
        // Direct evaluation h(u) - h(u_D) - <grad h(u_D), u - u_D>.
        let h_u = entropy_density(&cls, &u).unwrap();
        let h_d = entropy_density(&cls, rf.u()).unwrap();
        let grad_d = entropy_gradient(&cls, rf.u()).unwrap();
        let mut direct = h_u - h_d;
        for i in 0..3 {
            direct -= grad_d[i] * (u[i] - rf.u()[i]);
        }
        let split = h1 + h2;
        assert!(
            (split - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            "split {split} vs direct {direct}"
        );
    }

    #[test]
    fn relative_entropy_vanishes_only_at_the_reference() {
        let cls = cls();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        let at_ref = relative_entropy(&cls, rf.u(), &rf).unwrap();
        assert!(at_ref.abs() < 1e-15, "h*(u_D|u_D) = {at_ref}");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let u = rand_composition(&mut rng, 3, 0.9);
            let h = relative_entropy(&cls, &u, &rf).unwrap();
            let dist: f64 = u.iter().zip(rf.u()).map(|(a, b)| (a - b).abs()).sum();
            if dist > 1e-3 {
                assert!(h > 0.0, "h* = {h} at distance {dist}");
            }
            assert!(h >= 0.0);
        }
    }

    #[test]
    fn relative_entropy_is_accurate_near_the_reference() {
        // Quadratic model: h*(u_D + eps v) ~ eps^2/2 v^T H(u_D) v.
        let cls = cls();
        let ud = [0.15, 0.2, 0.1];
        let rf = Reference::new(&cls, &ud).unwrap();
        let h = entropy_hessian(&cls, &ud).unwrap();
        let v = [1.0, -0.5, -0.5];
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += v[i] * h[(i, j)] * v[j];
            }
        }
        for &eps in &[1e-4, 1e-5, 1e-6] {
            let u: Vec<f64> = ud.iter().zip(v.iter()).map(|(a, b)| a + eps * b).collect();
            let hr = relative_entropy(&cls, &u, &rf).unwrap();
            let expect = 0.5 * eps * eps * quad;
            assert!(
                (hr / expect - 1.0).abs() < 1e-2 * (1.0 + eps * 1e4),
                "eps = {eps}: h* = {hr} vs quadratic {expect}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cls = cls();
        let u = [0.12, 0.31, 0.08];
        let grad = entropy_gradient(&cls, &u).unwrap();
        for i in 0..3 {
            let d = 1e-6;
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[i] += d;
            dn[i] -= d;
            let fd = (entropy_density(&cls, &up).unwrap() - entropy_density(&cls, &dn).unwrap())
                / (2.0 * d);
            assert!(
                (fd - grad[i]).abs() < 1e-5 * grad[i].abs().max(1.0),
                "dh/du_{i}: fd {fd} vs {g}",
                g = grad[i]
            );
        }
    }

    #[test]
    fn hessian_is_spd_and_matches_mass_cancelling_probe() {
        let cls = Closures::tabulated(ModelParams::uniform(2.0, 2.0, 1.0, 1.0, 3).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let u = rand_composition(&mut rng, 3, 0.98);
            if u.iter().any(|&v| v < 1e-12) {
                continue;
            }
            let h = entropy_hessian(&cls, &u).unwrap();
            let eig = h.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l > 0.0), "non-SPD Hessian at {u:?}: {eig}");
            // For v with sum 0 the rank-one part cancels: v^T H v = sum v_i^2/u_i.
            let v = [1.0, -1.0, 0.0];
            let mut quad = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    quad += v[i] * h[(i, j)] * v[j];
                }
            }
            let exact = 1.0 / u[0] + 1.0 / u[1];
            assert!((quad / exact - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_vars_round_trip() {
        let cls = Closures::tabulated(ModelParams::uniform(2.0, 2.0, 1.0, 1.0, 3).unwrap())
            .unwrap();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut cases: Vec<Vec<f64>> = (0..200).map(|_| rand_composition(&mut rng, 3, 0.97)).collect();
        cases.push(vec![1e-10, 0.5, 0.3]);
        cases.push(vec![0.3, 0.3, 0.399]);
        cases.push(vec![1e-8, 1e-8, 1e-8]);
        for u in cases {
            if u.iter().any(|&v| v <= 0.0) {
                continue;
            }
            let w = entropy_vars(&cls, &u, &rf).unwrap();
            let back = invert_entropy_vars(&cls, &w, &rf).unwrap();
            for i in 0..3 {
                assert!(
                    (back[i] - u[i]).abs() <= 1e-9 * u[i].max(1e-12),
                    "round trip {u:?} -> {back:?}"
                );
            }
            let m: f64 = back.iter().sum::<f64>();
            let m0: f64 = u.iter().sum();
            assert!((m - m0).abs() <= 1e-9 * m0);
        }
    }

    #[test]
    fn zero_entropy_vars_invert_to_the_reference() {
        let cls = cls();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        let back = invert_entropy_vars(&cls, &[0.0, 0.0, 0.0], &rf).unwrap();
        for i in 0..3 {
            assert!((back[i] - rf.u()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn inversion_rejects_saturating_variables() {
        let cls = cls();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        // ln Phi at the saturation cap is about 2 (1-M)^(-kappa) ~ 2e12 for
        // kappa = 1; variables beyond that have no preimage below the cap.
        let err = invert_entropy_vars(&cls, &[1e13, 1e13, 1e13], &rf);
        assert!(err.is_err());
        // Large-but-attainable variables land very close to saturation and
        // still respect the cap.
        let u = invert_entropy_vars(&cls, &[30.0, 30.0, 30.0], &rf).unwrap();
        let m: f64 = u.iter().sum();
        assert!(m > 0.9 && m <= 1.0 - DELTA_CAP);
    }

    #[test]
    fn saturation_part_controlled_by_seminorm() {
        let cls = cls();
        let rf = Reference::new(&cls, &[0.15, 0.2, 0.1]).unwrap();
        for &m in &[0.05, 0.2, 0.6, 0.9, 0.99] {
            let u = [m / 3.0; 3];
            let (_, h2) = relative_entropy_split(&cls, &u, &rf).unwrap();
            let phi_l = saturation_seminorm(&cls, m, &rf).unwrap();
            if (m - rf.m()).abs() > 1e-6 {
                let ratio = h2 / (phi_l * phi_l);
                assert!(
                    ratio.is_finite() && ratio >= 0.0 && ratio < 10.0,
                    "h2/Phi_L^2 = {ratio} at M = {m}"
                );
            }
        }
    }
}
