//! One-dimensional hopping-lattice model whose diffusive limit is the
//! continuum cross-diffusion system, plus the refinement study comparing
//! the two.
//!
//! Cells sit at `x_j = j h`. A species hops from cell `j` to a neighbour
//! `j±1` at rate `T^{j±} = alpha_i q(M^j) p(M^{j±1})`: the incentive to
//! leave is a function of the home cell's total fraction, the attractivity
//! of the destination a function of the destination's. The balance of
//! arrivals and departures gives the master equation
//!
//! ```text
//!   d/dt u_i^j = T^{(j-1)+} u_i^{j-1} + T^{(j+1)+} u_i^{j+1}
//!              - (T^{j+} + T^{j-}) u_i^j + r_i^j,
//! ```
//!
//! where each transition term multiplies the density it transports (the
//! departing term carries `u_i^j`; dimensional consistency and mass
//! conservation force this factor, see the study notes). End cells use
//! mirrored ghosts, i.e. zero net exchange across the boundary, matching
//! the zero-flux continuum condition. With hopping rates scaled as
//! `alpha_i = alpha_i0 / h^2` the formal `h -> 0` limit is the PDE with
//! diffusion matrix `A_ij = delta_ij pq + u_i (p q' - q p')`.

use crate::closures::Closures;
use crate::error::{Error, Result};
use crate::params::DELTA_CAP;
use crate::reactions::Reaction;
use crate::solver::{step_explicit, GridSpec, State};

/// Volume fractions on a 1D equidistant lattice, with the (already
/// `1/h^2`-scaled) hopping rate of each species.
#[derive(Debug, Clone)]
pub struct LatticeState {
    n: usize,
    cells: usize,
    h: f64,
    alpha: Vec<f64>,
    /// Species-major: `u[s * cells + j]`.
    u: Vec<f64>,
}

impl LatticeState {
    /// Builds a lattice state from per-species cell arrays and *unscaled*
    /// rate constants `alpha0`; the stored hopping rates are `alpha0 / h^2`.
    pub fn new(fields: &[Vec<f64>], h: f64, alpha0: &[f64]) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Config("lattice state needs at least one species".into()));
        }
        if fields.len() != alpha0.len() {
            return Err(Error::Config("one hopping rate per species is required".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("cell distance must be positive, got {h}")));
        }
        let cells = fields[0].len();
        if cells < 2 || fields.iter().any(|f| f.len() != cells) {
            return Err(Error::Config("species fields must share a length of at least 2".into()));
        }
        if alpha0.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(Error::Config("hopping rates must be positive".into()));
        }
        let n = fields.len();
        let mut u = vec![0.0; n * cells];
        for (s, f) in fields.iter().enumerate() {
            u[s * cells..(s + 1) * cells].copy_from_slice(f);
        }
        let state = LatticeState {
            n,
            cells,
            h,
            alpha: alpha0.iter().map(|&a| a / (h * h)).collect(),
            u,
        };
        state.check_valid()?;
        Ok(state)
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Hopping rates, already scaled by `1/h^2`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn species(&self, s: usize) -> &[f64] {
        &self.u[s * self.cells..(s + 1) * self.cells]
    }

    pub fn data(&self) -> &[f64] {
        &self.u
    }

    /// Total fraction in cell `j`.
    pub fn m_at(&self, j: usize) -> f64 {
        (0..self.n).map(|s| self.u[s * self.cells + j]).sum()
    }

    /// Per-species totals (plain cell sums; every cell has equal size).
    pub fn per_species_total(&self) -> Vec<f64> {
        (0..self.n).map(|s| self.species(s).iter().sum()).collect()
    }

    fn check_valid(&self) -> Result<()> {
        for j in 0..self.cells {
            let mut m = 0.0;
            for s in 0..self.n {
                let v = self.u[s * self.cells + j];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Domain(format!(
                        "species {s} holds {v:e} in cell {j}"
                    )));
                }
                m += v;
            }
            if m > 1.0 - DELTA_CAP {
                return Err(Error::Domain(format!("cell {j} saturated: total {m}")));
            }
        }
        Ok(())
    }
}

/// Master-equation rates for every cell and species (species-major, same
/// layout as [`LatticeState::data`]).
pub fn master_rhs(state: &LatticeState, cls: &Closures, reaction: &Reaction) -> Result<Vec<f64>> {
    rhs_of(state, &state.u, cls, reaction)
}

/// The rates evaluated at an arbitrary cell array `u` (used by the
/// integrator's internal stages).
fn rhs_of(state: &LatticeState, u: &[f64], cls: &Closures, reaction: &Reaction) -> Result<Vec<f64>> {
    let n = state.n;
    let cells = state.cells;
    let mut qv = vec![0.0; cells];
    let mut pv = vec![0.0; cells];
    for j in 0..cells {
        let mut m = 0.0;
        for s in 0..n {
            let v = u[s * cells + j];
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("species {s} holds {v:e} in cell {j}")));
            }
            m += v;
        }
        if m > 1.0 - DELTA_CAP {
            return Err(Error::Domain(format!("cell {j} saturated: total {m}")));
        }
        qv[j] = cls.q(m)?;
        pv[j] = cls.p(m)?;
    }
    let mut rhs = vec![0.0; n * cells];
    for s in 0..n {
        let a_s = state.alpha[s];
        let base = s * cells;
        // Mirrored end cells exchange nothing with their ghosts, so only
        // interior faces move mass.
        for j in 0..cells - 1 {
            let to_right = a_s * qv[j] * pv[j + 1] * u[base + j];
            let to_left = a_s * qv[j + 1] * pv[j] * u[base + j + 1];
            rhs[base + j] += to_left - to_right;
            rhs[base + j + 1] += to_right - to_left;
        }
        reaction.add_species_rate(s, &u[base..base + cells], &mut rhs[base..base + cells]);
    }
    Ok(rhs)
}

/// A stable step size for the explicit integrator: `0.1 h^2 / (alpha0 *
/// scale)` with the rate scale taken from the stiffest cell. Falls back to
/// `fallback` (e.g. the remaining time) on an identically degenerate
/// state.
pub fn suggested_dt(state: &LatticeState, cls: &Closures, fallback: f64) -> Result<f64> {
    let mut scale = 0.0f64;
    for j in 0..state.cells {
        let m = state.m_at(j);
        let local = cls.diffusivity(m)?.max(cls.pq(m)?);
        scale = scale.max(local);
    }
    let a_max = state.alpha.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || a_max == 0.0 {
        return Ok(fallback);
    }
    Ok((0.1 / (a_max * scale)).min(fallback))
}

/// One classical fourth-order Runge-Kutta step of the lattice ODE.
pub fn rk4_step(state: &mut LatticeState, dt: f64, cls: &Closures, reaction: &Reaction) -> Result<()> {
    let len = state.u.len();
    let k1 = rhs_of(state, &state.u, cls, reaction)?;
    let mut stage = vec![0.0; len];
    for i in 0..len {
        stage[i] = state.u[i] + 0.5 * dt * k1[i];
    }
    let k2 = rhs_of(state, &stage, cls, reaction)?;
    for i in 0..len {
        stage[i] = state.u[i] + 0.5 * dt * k2[i];
    }
    let k3 = rhs_of(state, &stage, cls, reaction)?;
    for i in 0..len {
        stage[i] = state.u[i] + dt * k3[i];
    }
    let k4 = rhs_of(state, &stage, cls, reaction)?;
    for i in 0..len {
        state.u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    state.check_valid()
}

/// Integrates the lattice ODE to `t_end` with step sizes adapted to `h^2`,
/// landing on `t_end` exactly.
pub fn integrate(state: &mut LatticeState, t_end: f64, cls: &Closures, reaction: &Reaction) -> Result<()> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::Config(format!("integration time must be nonnegative, got {t_end}")));
    }
    let mut t = 0.0;
    while t < t_end {
        let remaining = t_end - t;
        let dt = suggested_dt(state, cls, remaining)?.min(remaining);
        rk4_step(state, dt, cls, reaction)?;
        t += dt;
    }
    Ok(())
}

/// One row of the diffusive-limit refinement study.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    /// Cells at this refinement level.
    pub cells: usize,
    /// Cell distance.
    pub h: f64,
    /// Sup-norm discrepancy between the lattice and continuum solutions at
    /// `t_end`, over all cells and species.
    pub sup_error: f64,
    /// Observed order against the previous level, `log2(e_prev / e_this)`.
    pub order: Option<f64>,
    /// False when the integration at this level failed; `sup_error` is NaN
    /// in that case.
    pub stable: bool,
}

/// Renders the study as a plain-text table.
pub fn format_study(rows: &[StudyRow]) -> String {
    let mut out = String::from("cells          h    sup_error    order\n");
    for r in rows {
        let order = r.order.map_or_else(|| "      -".into(), |o| format!("{o:7.3}"));
        let err = if r.stable {
            format!("{:.6e}", r.sup_error)
        } else {
            "unstable".into()
        };
        out.push_str(&format!("{:5} {:10.6} {:>12} {}\n", r.cells, r.h, err, order));
    }
    out
}

/// Runs the lattice model and the 1D continuum scheme from the same sampled
/// profile on matching grids (`cells = base * 2^level + 1` nodes on
/// `[0, 1]`), doubling the resolution `levels` times, and reports the
/// sup-norm discrepancy at `t_end` per level.
///
/// `profile` maps `x` in `[0, 1]` to the per-species fractions there. The
/// continuum side runs explicit Euler with a step well inside its
/// stability limit; the lattice side uses the fourth-order integrator.
pub fn diffusive_limit_study(
    cls: &Closures,
    profile: &dyn Fn(f64) -> Vec<f64>,
    base: usize,
    levels: usize,
    t_end: f64,
) -> Result<Vec<StudyRow>> {
    if base < 2 || levels == 0 {
        return Err(Error::Config("study needs base >= 2 and at least one level".into()));
    }
    let n = cls.params().n();
    let alpha0 = cls.params().alpha.clone();
    let mut rows: Vec<StudyRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let cells = base * (1usize << level) + 1;
        let h = 1.0 / (cells - 1) as f64;
        let fields: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                (0..cells)
                    .map(|j| {
                        let vals = profile(j as f64 * h);
                        vals[s]
                    })
                    .collect()
            })
            .collect();
        let outcome = compare_at_level(cls, &alpha0, &fields, h, t_end);
        let (sup_error, stable) = match outcome {
            Ok(e) => (e, true),
            Err(_) => (f64::NAN, false),
        };
        let order = match rows.last() {
            Some(prev) if prev.stable && stable && sup_error > 0.0 && prev.sup_error > 0.0 => {
                Some((prev.sup_error / sup_error).log2())
            }
            _ => None,
        };
        rows.push(StudyRow {
            cells,
            h,
            sup_error,
            order,
            stable,
        });
    }
    Ok(rows)
}

fn compare_at_level(
    cls: &Closures,
    alpha0: &[f64],
    fields: &[Vec<f64>],
    h: f64,
    t_end: f64,
) -> Result<f64> {
    let mut lattice = LatticeState::new(fields, h, alpha0)?;
    integrate(&mut lattice, t_end, cls, &Reaction::None)?;

    let grid = GridSpec::line(fields[0].len())?;
    let mut state = State::from_fields(fields, &grid, 0.0)?;
    // Half the lattice safety factor: Euler needs more margin than RK4.
    let dt_cont = suggested_dt(&lattice, cls, t_end)? * 0.5;
    let steps = (t_end / dt_cont).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        let (next, _) = step_explicit(cls, &grid, &Reaction::None, &state, dt)?;
        state = next;
    }

    let mut worst = 0.0f64;
    for (a, b) in lattice.data().iter().zip(state.data()) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn closures(a: f64, b: f64, kappa: f64, alpha: f64, n: usize) -> Closures {
        Closures::tabulated(ModelParams::uniform(a, b, kappa, alpha, n).unwrap()).unwrap()
    }

    #[test]
    fn identical_cells_are_a_fixed_point() {
        let cls = closures(2.0, 2.0, 1.0, 1.0, 2);
        let state =
            LatticeState::new(&[vec![0.25; 9], vec![0.3; 9]], 0.125, &[1.0, 1.0]).unwrap();
        let rhs = master_rhs(&state, &cls, &Reaction::None).unwrap();
        for &v in &rhs {
            assert_eq!(v, 0.0, "identical cells must balance exactly");
        }
    }

    #[test]
    fn hop_terms_conserve_species_totals() {
        let cls = closures(2.0, 2.0, 1.0, 1.0, 2);
        let f0: Vec<f64> = (0..17).map(|j| 0.2 + 0.1 * (j as f64 * 0.7).sin()).collect();
        let f1: Vec<f64> = (0..17).map(|j| 0.15 + 0.08 * (j as f64 * 1.3).cos()).collect();
        let state = LatticeState::new(&[f0, f1], 1.0 / 16.0, &[1.0, 2.5]).unwrap();
        let rhs = master_rhs(&state, &cls, &Reaction::None).unwrap();
        let scale = rhs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for s in 0..2 {
            let total: f64 = rhs[s * 17..(s + 1) * 17].iter().sum();
            assert!(
                total.abs() <= 1e-14 * scale.max(1.0),
                "species {s} hop terms do not telescope: {total:e}"
            );
        }
    }

    /// Two cells with one species relax to the symmetric split of their
    /// conserved total. A brute-force Euler integration with a tiny step
    /// is the oracle for the transient.
    #[test]
    fn two_cells_relax_to_the_symmetric_state() {
        let cls = closures(2.0, 2.0, 1.0, 1.0, 1);
        let mut state = LatticeState::new(&[vec![0.3, 0.5]], 1.0, &[1.0]).unwrap();

        let mut brute = [0.3, 0.5];
        let fine = 1e-5;
        for _ in 0..(0.1 / fine) as usize {
            let m0 = brute[0];
            let m1 = brute[1];
            let flow = cls.q(m0).unwrap() * cls.p(m1).unwrap() * m0
                - cls.q(m1).unwrap() * cls.p(m0).unwrap() * m1;
            brute[0] -= fine * flow;
            brute[1] += fine * flow;
        }
        integrate(&mut state, 0.1, &cls, &Reaction::None).unwrap();
        assert!((state.species(0)[0] - brute[0]).abs() < 1e-6, "integrator disagrees with brute force");

        integrate(&mut state, 40.0, &cls, &Reaction::None).unwrap();
        assert!((state.species(0)[0] - 0.4).abs() < 1e-10);
        assert!((state.species(0)[1] - 0.4).abs() < 1e-10);
        let fixed = LatticeState::new(&[vec![0.4, 0.4]], 1.0, &[1.0]).unwrap();
        let rhs = master_rhs(&fixed, &cls, &Reaction::None).unwrap();
        assert_eq!(rhs[0], 0.0);
        assert_eq!(rhs[1], 0.0);
    }

    /// The single-species limit coefficient `pq + M (p q' - q p')`,
    /// assembled from finite differences of the closures alone, must match
    /// the design diffusivity `M^a (1-M)^{-b}`.
    #[test]
    fn limit_coefficient_reduces_to_the_design_diffusivity() {
        for (a, b, kappa) in [(2.0, 2.0, 1.0), (1.0, 2.0, 0.9)] {
            let cls = closures(a, b, kappa, 1.0, 1);
            for m in [0.05, 0.2, 0.5, 0.8] {
                let d = 1e-6;
                let dq = (cls.q(m + d).unwrap() - cls.q(m - d).unwrap()) / (2.0 * d);
                let dp = (cls.p(m + d).unwrap() - cls.p(m - d).unwrap()) / (2.0 * d);
                let coeff = cls.pq(m).unwrap() + m * (cls.p(m).unwrap() * dq - cls.q(m).unwrap() * dp);
                let design = m.powf(a) * (1.0 - m).powf(-b);
                assert!(
                    (coeff - design).abs() <= 1e-5 * design,
                    "a={a} b={b} kappa={kappa} M={m}: limit coefficient {coeff} vs {design}"
                );
            }
        }
    }

    #[test]
    fn zero_profile_gives_zero_error_at_all_levels() {
        let cls = closures(2.0, 2.0, 1.0, 1.0, 2);
        let rows =
            diffusive_limit_study(&cls, &|_x| vec![0.0, 0.0], 8, 3, 0.01).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.stable);
            assert_eq!(r.sup_error, 0.0);
        }
    }

    #[test]
    fn refinement_shrinks_the_lattice_continuum_gap() {
        let cls = closures(2.0, 2.0, 1.0, 1.0, 2);
        let profile = |x: f64| {
            let m = 0.3 + 0.15 * (std::f64::consts::PI * x).cos();
            vec![0.6 * m, 0.4 * m]
        };
        let rows = diffusive_limit_study(&cls, &profile, 16, 3, 0.005).unwrap();
        assert!(rows.iter().all(|r| r.stable));
        for w in rows.windows(2) {
            assert!(
                w[1].sup_error < w[0].sup_error,
                "error did not decrease: {rows:?}"
            );
        }
        let order = rows.last().unwrap().order.unwrap();
        assert!(
            order > 1.5,
            "expected roughly second-order shrinkage, saw {order} ({rows:?})"
        );
    }
}
