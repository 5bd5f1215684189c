//! Entropy/dissipation sampling along a run, CSV serialization, and decay
//! fits used to classify convergence to the boundary state.

use crate::closures::Closures;
use crate::entropy::{relative_entropy, Reference};
use crate::error::{Error, Result};
use crate::solver::{GridSpec, State};

/// Column header of the diagnostics CSV.
pub const CSV_HEADER: &str = "t,H_rel,dissipation,mass_mean,min_u,max_M";

/// One sampled diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    /// Simulation time.
    pub t: f64,
    /// Area-weighted relative entropy with respect to the reference state.
    pub h_rel: f64,
    /// Discrete entropy-dissipation functional (see [`compute_row`]).
    pub dissipation: f64,
    /// Mean of the total fraction over the domain.
    pub mass_mean: f64,
    /// Smallest nodal fraction.
    pub min_u: f64,
    /// Largest nodal total fraction.
    pub max_m: f64,
}

impl DiagnosticsRow {
    /// Serializes with `{}` formatting, which round-trips `f64` exactly.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.t, self.h_rel, self.dissipation, self.mass_mean, self.min_u, self.max_m
        )
    }
}

/// Parses a diagnostics CSV produced by [`DiagnosticsRow::csv_line`].
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty diagnostics file".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Input(format!("unexpected diagnostics header: {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Input(format!(
                "line {}: expected 6 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        let mut vals = [0.0f64; 6];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| Error::Input(format!("line {}: malformed number {field:?}", i + 2)))?;
        }
        rows.push(DiagnosticsRow {
            t: vals[0],
            h_rel: vals[1],
            dissipation: vals[2],
            mass_mean: vals[3],
            min_u: vals[4],
            max_m: vals[5],
        });
    }
    Ok(rows)
}

/// Computes one diagnostics record.
///
/// The entropy is the cell-area-weighted sum of the nodal relative entropy
/// against `rf`. The dissipation is the discrete counterpart of the
/// production functional controlling entropy decay,
///
/// ```text
///   2 sum_i alpha_i sum_faces mean(p^2) ((sqrt(phi_i(k')) - sqrt(phi_i(k))) / h)^2 * area,
/// ```
///
/// with `phi_i = u_i q/p` evaluated at the face-adjacent nodes.
pub fn compute_row(
    cls: &Closures,
    grid: &GridSpec,
    state: &State,
    rf: &Reference,
) -> Result<DiagnosticsRow> {
    let n = state.n_species();
    let nodes = state.num_nodes();
    if rf.n() != n {
        return Err(Error::Config("reference state dimension mismatch".into()));
    }
    if nodes != grid.num_nodes() {
        return Err(Error::Config("state size does not match the grid".into()));
    }
    let area = grid.cell_area();
    let u = state.data();
    let mut ubuf = vec![0.0; n];
    let mut sqphi = vec![0.0; n * nodes];
    let mut psq = vec![0.0; nodes];
    let mut h_rel = 0.0;
    for k in 0..nodes {
        let mut m = 0.0;
        for s in 0..n {
            ubuf[s] = u[s * nodes + k];
            m += ubuf[s];
        }
        h_rel += relative_entropy(cls, &ubuf, rf)?;
        psq[k] = cls.p_squared(m)?;
        if m > 0.0 {
            let g = cls.qp_ratio(m)?;
            if !g.is_finite() {
                return Err(Error::Numerical(
                    "flux potential q/p overflowed near saturation".into(),
                ));
            }
            for s in 0..n {
                sqphi[s * nodes + k] = (ubuf[s] * g).sqrt();
            }
        } else {
            for s in 0..n {
                sqphi[s * nodes + k] = 0.0;
            }
        }
    }
    h_rel *= area;

    let alpha = &cls.params().alpha;
    let nx = grid.nx();
    let ny = grid.ny();
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let mut dissipation = 0.0;
    for (s, &a_s) in alpha.iter().enumerate() {
        let base = s * nodes;
        let mut acc = 0.0;
        for iy in 0..ny {
            let row = iy * nx;
            for ix in 0..nx - 1 {
                let k = row + ix;
                let d = sqphi[base + k + 1] - sqphi[base + k];
                acc += 0.5 * (psq[k] + psq[k + 1]) * d * d * ihx2;
            }
        }
        if ny > 1 {
            let ihy2 = 1.0 / (grid.hy() * grid.hy());
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let k = iy * nx + ix;
                    let k2 = k + nx;
                    let d = sqphi[base + k2] - sqphi[base + k];
                    acc += 0.5 * (psq[k] + psq[k2]) * d * d * ihy2;
                }
            }
        }
        dissipation += 2.0 * a_s * acc * area;
    }

    Ok(DiagnosticsRow {
        t: state.t(),
        h_rel,
        dissipation,
        mass_mean: state.mass_mean(),
        min_u: state.min_u(),
        max_m: state.max_m(),
    })
}

/// Exponential and algebraic decay diagnostics of a sampled entropy curve.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Rate of the least-squares exponential fit `H ~ amplitude * exp(-beta t)`.
    pub beta: f64,
    /// Prefactor of the exponential fit.
    pub amplitude: f64,
    /// Root-mean-square residual of the fit in log space.
    pub log_residual_rms: f64,
    /// Samples used by the fit (entropy above the floor `1e-14`).
    pub points_used: usize,
    /// `sup_t (1 + t) H(t)` over the samples: the constant of an algebraic
    /// `H <= C / (1 + t)` envelope.
    pub algebraic_constant: f64,
    /// Whether the envelope constant is attained by the first sample.
    pub attained_at_start: bool,
    /// Whether `(1 + t) H(t)` is nonincreasing over the second half of the
    /// samples (within a tiny relative slack).
    pub tail_monotone: bool,
}

/// Fits the sampled entropy decay. Needs at least ten rows, of which at
/// least two above the floor; rows must be in increasing time order.
pub fn fit_decay(rows: &[DiagnosticsRow]) -> Result<DecayFit> {
    const FLOOR: f64 = 1e-14;
    if rows.len() < 10 {
        return Err(Error::Input(format!(
            "decay fit needs at least 10 samples, got {}",
            rows.len()
        )));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.h_rel > FLOOR)
        .map(|r| (r.t, r.h_rel.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Input(
            "decay fit needs at least two samples with entropy above the floor".into(),
        ));
    }
    let n = pts.len() as f64;
    let st: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sty: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * stt - st * st;
    if det <= 0.0 {
        return Err(Error::Input("decay fit needs distinct sample times".into()));
    }
    let slope = (n * sty - st * sy) / det;
    let intercept = (sy - slope * st) / n;
    let rss: f64 = pts
        .iter()
        .map(|&(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();

    let products: Vec<f64> = rows.iter().map(|r| (1.0 + r.t) * r.h_rel).collect();
    let mut arg = 0;
    for (i, &v) in products.iter().enumerate() {
        if v > products[arg] {
            arg = i;
        }
    }
    let half = rows.len() / 2;
    let tail_monotone = products[half..]
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);

    Ok(DecayFit {
        beta: -slope,
        amplitude: intercept.exp(),
        log_residual_rms: (rss / n).sqrt(),
        points_used: pts.len(),
        algebraic_constant: products[arg],
        attained_at_start: arg == 0,
        tail_monotone,
    })
}

/// Discrete entropy-balance constants extracted from consecutive samples.
#[derive(Debug, Clone, Copy)]
pub struct EntropyBalance {
    /// Largest observed `dH/dt + D` over sample intervals (`<= 0` up to
    /// sampling error when no production term is active).
    pub worst_production: f64,
    /// Smallest `lambda >= 0` with `dH/dt <= -D + lambda (1 + H)` on every
    /// sampled interval.
    pub lambda_estimate: f64,
}

/// Measures how strongly the sampled run violates the clean dissipation
/// balance, and the production constant needed to absorb the violation.
/// Derivatives are centered on sample intervals, so the estimates carry
/// `O(dt^2)` sampling error.
pub fn entropy_inequality_constants(rows: &[DiagnosticsRow]) -> Result<EntropyBalance> {
    if rows.len() < 2 {
        return Err(Error::Input("entropy balance needs at least two samples".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut lambda = 0.0f64;
    for w in rows.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            return Err(Error::Input("samples must be in increasing time order".into()));
        }
        let dh = (w[1].h_rel - w[0].h_rel) / dt;
        let d_mid = 0.5 * (w[0].dissipation + w[1].dissipation);
        let h_mid = 0.5 * (w[0].h_rel + w[1].h_rel);
        let production = dh + d_mid;
        worst = worst.max(production);
        lambda = lambda.max(production / (1.0 + h_mid));
    }
    Ok(EntropyBalance {
        worst_production: worst,
        lambda_estimate: lambda,
    })
}
