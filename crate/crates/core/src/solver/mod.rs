//! Finite-volume time stepping for the cross-diffusion system.
//!
//! Space is discretized with node-centered finite volumes on a uniform
//! grid. The flux of species `i` across the face between neighbouring
//! nodes `k` and `k'` is
//!
//! ```text
//!   F_i = mean(p^2) * (phi_i(k') - phi_i(k)) / h,    phi_i = u_i q(M)/p(M),
//! ```
//!
//! with the arithmetic face mean of `p^2`. Boundary faces carry zero flux
//! (mirror ghosts), so the divergence telescopes and area-weighted mass is
//! conserved exactly under pure Neumann conditions; the mixed condition
//! pins the top edge to its Dirichlet data instead.
//!
//! Time is advanced either by explicit Euler or by implicit (backward)
//! Euler. The implicit solve uses damped Newton with a matrix-free
//! BiCGStab linear solver (analytic Jacobian-vector products, Jacobi
//! preconditioning) and falls back to halving the time step when Newton
//! does not converge. States are never clamped: a step that leaves the
//! admissible region (negative fractions or total biomass at saturation)
//! is rejected with an error identifying the offending node.

mod grid;

pub use grid::{BoundaryCondition, GridSpec, State};

use crate::closures::Closures;
use crate::diagnostics::{self, DiagnosticsRow};
use crate::entropy::Reference;
use crate::error::{Error, Result};
use crate::params::{ModelParams, DELTA_CAP};
use crate::reactions::Reaction;

/// Time discretization of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Forward Euler; conditionally stable, cheapest per step.
    Explicit,
    /// Backward Euler with damped Newton; stable at large steps.
    Implicit,
}

/// What a single accepted time step did.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// Step actually taken (smaller than requested if the implicit solve
    /// had to halve the step).
    pub dt_used: f64,
    /// Largest nodal total fraction after the step.
    pub max_m: f64,
    /// Smallest nodal fraction after the step.
    pub min_u: f64,
    /// Newton iterations spent (zero for the explicit scheme).
    pub newton_iterations: usize,
    /// Final nonlinear residual max-norm (zero for the explicit scheme).
    pub residual_norm: f64,
}

/// Tuning knobs of the implicit solver.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Max-norm tolerance on the nonlinear residual.
    pub tol: f64,
    /// Newton iteration budget per attempted step.
    pub max_iterations: usize,
    /// Number of times the step may be halved after a failed solve.
    pub max_halvings: usize,
    /// Relative residual target of the inner linear solver.
    pub linear_rtol: f64,
    /// Iteration budget of the inner linear solver.
    pub linear_max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iterations: 50,
            max_halvings: 5,
            linear_rtol: 1e-8,
            linear_max_iterations: 500,
        }
    }
}

/// Per-simulation scratch: nodal closure values and accumulated rates.
#[derive(Debug)]
struct Workspace {
    /// Total fraction per node.
    m: Vec<f64>,
    /// `q/p` per node.
    g: Vec<f64>,
    /// `p^2` per node.
    psq: Vec<f64>,
    /// `d(q/p)/dM` per node (implicit scheme only).
    dg: Vec<f64>,
    /// `d(p^2)/dM` per node (implicit scheme only).
    dpsq: Vec<f64>,
    /// Species-major potentials `u_i q/p`.
    phi: Vec<f64>,
    /// Species-major accumulated rates.
    rhs: Vec<f64>,
    /// Face-coefficient sums per node, for the Jacobi diagonal.
    csum: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, nodes: usize) -> Self {
        Workspace {
            m: vec![0.0; nodes],
            g: vec![0.0; nodes],
            psq: vec![0.0; nodes],
            dg: vec![0.0; nodes],
            dpsq: vec![0.0; nodes],
            phi: vec![0.0; n * nodes],
            rhs: vec![0.0; n * nodes],
            csum: vec![0.0; nodes],
        }
    }
}

/// Scratch for Jacobian-vector products.
#[derive(Debug)]
struct JvpScratch {
    vm: Vec<f64>,
    dphi: Vec<f64>,
    drhs: Vec<f64>,
}

impl JvpScratch {
    fn new(n: usize, nodes: usize) -> Self {
        JvpScratch {
            vm: vec![0.0; nodes],
            dphi: vec![0.0; n * nodes],
            drhs: vec![0.0; n * nodes],
        }
    }
}

/// Rejects states outside the admissible region, naming the worst node.
fn validate_flat(u: &[f64], n: usize, grid: &GridSpec) -> Result<()> {
    let nodes = grid.num_nodes();
    for k in 0..nodes {
        let mut m = 0.0;
        for s in 0..n {
            let v = u[s * nodes + k];
            if !(v.is_finite() && v >= 0.0) {
                let (ix, iy) = grid.coords(k);
                return Err(Error::StepRejected {
                    reason: "negative or non-finite volume fraction".into(),
                    species: s,
                    ix,
                    iy,
                    value: v,
                });
            }
            m += v;
        }
        if m > 1.0 - DELTA_CAP {
            let (ix, iy) = grid.coords(k);
            return Err(Error::StepRejected {
                reason: "total biomass reached saturation".into(),
                species: 0,
                ix,
                iy,
                value: m,
            });
        }
    }
    Ok(())
}

/// Fills `m`, `g`, `p^2` and the potentials for a state already known to
/// be admissible.
fn fill_potentials(cls: &Closures, n: usize, nodes: usize, u: &[f64], ws: &mut Workspace) -> Result<()> {
    for k in 0..nodes {
        let mut m = 0.0;
        for s in 0..n {
            m += u[s * nodes + k];
        }
        ws.m[k] = m;
        if m == 0.0 {
            ws.g[k] = 0.0;
            ws.psq[k] = (-2.0f64).exp();
            for s in 0..n {
                ws.phi[s * nodes + k] = 0.0;
            }
        } else {
            let g = cls.qp_ratio(m)?;
            if !g.is_finite() {
                return Err(Error::Numerical(
                    "flux potential q/p overflowed near saturation".into(),
                ));
            }
            ws.g[k] = g;
            ws.psq[k] = cls.p_squared(m)?;
            for s in 0..n {
                ws.phi[s * nodes + k] = u[s * nodes + k] * g;
            }
        }
    }
    Ok(())
}

/// Fills the nodal derivatives `d(q/p)/dM` and `d(p^2)/dM` used by
/// Jacobian-vector products.
fn fill_flux_derivatives(cls: &Closures, nodes: usize, ws: &mut Workspace) -> Result<()> {
    let kappa = cls.params().kappa;
    for k in 0..nodes {
        let m = ws.m[k];
        let omm = 1.0 - m;
        ws.dpsq[k] = -2.0 * kappa * omm.powf(-1.0 - kappa) * ws.psq[k];
        ws.dg[k] = if m == 0.0 { 0.0 } else { ws.g[k] * cls.dlog_qp(m)? };
    }
    Ok(())
}

/// Accumulates the conservative flux divergence of every species into
/// `ws.rhs` (which is zeroed first).
fn accumulate_diffusion(grid: &GridSpec, alpha: &[f64], ws: &mut Workspace) {
    let nx = grid.nx();
    let ny = grid.ny();
    let nodes = grid.num_nodes();
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let psq = &ws.psq;
    let phi = &ws.phi;
    let rhs = &mut ws.rhs;
    rhs.fill(0.0);
    for (s, &a_s) in alpha.iter().enumerate() {
        let base = s * nodes;
        for iy in 0..ny {
            let row = iy * nx;
            for ix in 0..nx - 1 {
                let k = row + ix;
                let c = 0.5 * (psq[k] + psq[k + 1]) * ihx2 * a_s;
                let f = c * (phi[base + k + 1] - phi[base + k]);
                rhs[base + k] += f;
                rhs[base + k + 1] -= f;
            }
        }
        if ny > 1 {
            let ihy2 = 1.0 / (grid.hy() * grid.hy());
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let k = iy * nx + ix;
                    let k2 = k + nx;
                    let c = 0.5 * (psq[k] + psq[k2]) * ihy2 * a_s;
                    let f = c * (phi[base + k2] - phi[base + k]);
                    rhs[base + k] += f;
                    rhs[base + k2] -= f;
                }
            }
        }
    }
}

/// Zeroes the rows of Dirichlet-pinned nodes in a species-major field.
fn zero_dirichlet_rows(grid: &GridSpec, n: usize, v: &mut [f64]) {
    if grid.bc() == BoundaryCondition::Mixed {
        let nodes = grid.num_nodes();
        let row = (grid.ny() - 1) * grid.nx();
        for s in 0..n {
            for ix in 0..grid.nx() {
                v[s * nodes + row + ix] = 0.0;
            }
        }
    }
}

/// Overwrites Dirichlet-pinned nodes with their boundary data.
fn pin_dirichlet(grid: &GridSpec, n: usize, v: &mut [f64]) {
    if let Some(u_d) = grid.dirichlet_data() {
        let nodes = grid.num_nodes();
        let row = (grid.ny() - 1) * grid.nx();
        for (s, &val) in u_d.iter().enumerate().take(n) {
            for ix in 0..grid.nx() {
                v[s * nodes + row + ix] = val;
            }
        }
    }
}

/// Validates `u` and fills `ws.rhs` with diffusion plus reaction rates,
/// zeroed on Dirichlet rows.
fn fill_rates(
    cls: &Closures,
    grid: &GridSpec,
    alpha: &[f64],
    reaction: &Reaction,
    u: &[f64],
    ws: &mut Workspace,
) -> Result<()> {
    let n = alpha.len();
    let nodes = grid.num_nodes();
    validate_flat(u, n, grid)?;
    fill_potentials(cls, n, nodes, u, ws)?;
    accumulate_diffusion(grid, alpha, ws);
    for s in 0..n {
        reaction.add_species_rate(
            s,
            &u[s * nodes..(s + 1) * nodes],
            &mut ws.rhs[s * nodes..(s + 1) * nodes],
        );
    }
    zero_dirichlet_rows(grid, n, &mut ws.rhs);
    Ok(())
}

/// Diffusion operator applied to a state: one rate field per species
/// (Dirichlet rows zeroed, reactions not included).
pub fn diffusion_rhs(cls: &Closures, grid: &GridSpec, state: &State) -> Result<Vec<Vec<f64>>> {
    let n = state.n_species();
    let nodes = grid.num_nodes();
    check_shapes(cls, grid, state, &Reaction::None)?;
    let mut ws = Workspace::new(n, nodes);
    validate_flat(state.data(), n, grid)?;
    fill_potentials(cls, n, nodes, state.data(), &mut ws)?;
    accumulate_diffusion(grid, &cls.params().alpha, &mut ws);
    zero_dirichlet_rows(grid, n, &mut ws.rhs);
    Ok((0..n).map(|s| ws.rhs[s * nodes..(s + 1) * nodes].to_vec()).collect())
}

fn check_shapes(cls: &Closures, grid: &GridSpec, state: &State, reaction: &Reaction) -> Result<()> {
    let n = cls.params().n();
    if state.n_species() != n {
        return Err(Error::Config(format!(
            "state has {} species but the model has {}",
            state.n_species(),
            n
        )));
    }
    if state.num_nodes() != grid.num_nodes() {
        return Err(Error::Config("state size does not match the grid".into()));
    }
    if let Some(u_d) = grid.dirichlet_data() {
        if u_d.len() != n {
            return Err(Error::Config("boundary data dimension mismatch".into()));
        }
    }
    if let Reaction::Relaxation { u_d } = reaction {
        if u_d.len() != n {
            return Err(Error::Config("reaction target dimension mismatch".into()));
        }
    }
    Ok(())
}

fn explicit_into(
    cls: &Closures,
    grid: &GridSpec,
    params: &ModelParams,
    reaction: &Reaction,
    state: &State,
    dt: f64,
    ws: &mut Workspace,
    out: &mut State,
) -> Result<StepReport> {
    let n = state.n_species();
    fill_rates(cls, grid, &params.alpha, reaction, state.data(), ws)?;
    let src = state.data();
    let dst = out.data_mut();
    for (i, d) in dst.iter_mut().enumerate() {
        *d = src[i] + dt * ws.rhs[i];
    }
    pin_dirichlet(grid, n, dst);
    out.set_t(state.t() + dt);
    validate_flat(out.data(), n, grid)?;
    Ok(StepReport {
        dt_used: dt,
        max_m: out.max_m(),
        min_u: out.min_u(),
        newton_iterations: 0,
        residual_norm: 0.0,
    })
}

/// Backward-Euler residual `G(U) = U - U_old - dt (rhs(U) + r(U))`, with
/// `U - u_D` on Dirichlet rows. Returns the max-norm.
fn residual_into(
    cls: &Closures,
    grid: &GridSpec,
    params: &ModelParams,
    reaction: &Reaction,
    dt: f64,
    u_old: &[f64],
    cand: &[f64],
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<f64> {
    fill_rates(cls, grid, &params.alpha, reaction, cand, ws)?;
    for (i, o) in out.iter_mut().enumerate() {
        *o = cand[i] - u_old[i] - dt * ws.rhs[i];
    }
    if let Some(u_d) = grid.dirichlet_data() {
        let nodes = grid.num_nodes();
        let row = (grid.ny() - 1) * grid.nx();
        for (s, &val) in u_d.iter().enumerate() {
            for ix in 0..grid.nx() {
                let i = s * nodes + row + ix;
                out[i] = cand[i] - val;
            }
        }
    }
    Ok(out.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
}

/// Analytic Jacobian-vector product of the backward-Euler residual at the
/// iterate whose closure values sit in `ws`.
#[allow(clippy::too_many_arguments)]
fn apply_jacobian(
    grid: &GridSpec,
    alpha: &[f64],
    reaction_diag: f64,
    dt: f64,
    iterate: &[f64],
    ws: &Workspace,
    js: &mut JvpScratch,
    v: &[f64],
    out: &mut [f64],
) {
    let n = alpha.len();
    let nx = grid.nx();
    let ny = grid.ny();
    let nodes = grid.num_nodes();
    for k in 0..nodes {
        let mut sum = 0.0;
        for s in 0..n {
            sum += v[s * nodes + k];
        }
        js.vm[k] = sum;
    }
    for s in 0..n {
        let base = s * nodes;
        for k in 0..nodes {
            js.dphi[base + k] = ws.g[k] * v[base + k] + iterate[base + k] * ws.dg[k] * js.vm[k];
        }
    }
    js.drhs.fill(0.0);
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    for (s, &a_s) in alpha.iter().enumerate() {
        let base = s * nodes;
        for iy in 0..ny {
            let row = iy * nx;
            for ix in 0..nx - 1 {
                let k = row + ix;
                let k2 = k + 1;
                let c = 0.5 * (ws.psq[k] + ws.psq[k2]) * ihx2 * a_s;
                let dc = 0.5 * (ws.dpsq[k] * js.vm[k] + ws.dpsq[k2] * js.vm[k2]) * ihx2 * a_s;
                let f = c * (js.dphi[base + k2] - js.dphi[base + k])
                    + dc * (ws.phi[base + k2] - ws.phi[base + k]);
                js.drhs[base + k] += f;
                js.drhs[base + k2] -= f;
            }
        }
        if ny > 1 {
            let ihy2 = 1.0 / (grid.hy() * grid.hy());
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let k = iy * nx + ix;
                    let k2 = k + nx;
                    let c = 0.5 * (ws.psq[k] + ws.psq[k2]) * ihy2 * a_s;
                    let dc = 0.5 * (ws.dpsq[k] * js.vm[k] + ws.dpsq[k2] * js.vm[k2]) * ihy2 * a_s;
                    let f = c * (js.dphi[base + k2] - js.dphi[base + k])
                        + dc * (ws.phi[base + k2] - ws.phi[base + k]);
                    js.drhs[base + k] += f;
                    js.drhs[base + k2] -= f;
                }
            }
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = v[i] - dt * (js.drhs[i] + reaction_diag * v[i]);
    }
    if grid.bc() == BoundaryCondition::Mixed {
        let row = (ny - 1) * nx;
        for s in 0..n {
            for ix in 0..nx {
                let i = s * nodes + row + ix;
                out[i] = v[i];
            }
        }
    }
}

/// Jacobi diagonal of the backward-Euler residual (flux-coefficient
/// derivatives dropped; exact on Dirichlet rows).
fn jacobi_diagonal(
    grid: &GridSpec,
    alpha: &[f64],
    reaction_diag: f64,
    dt: f64,
    iterate: &[f64],
    ws: &mut Workspace,
    diag: &mut [f64],
) {
    let n = alpha.len();
    let nx = grid.nx();
    let ny = grid.ny();
    let nodes = grid.num_nodes();
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    ws.csum.fill(0.0);
    for iy in 0..ny {
        let row = iy * nx;
        for ix in 0..nx - 1 {
            let k = row + ix;
            let c = 0.5 * (ws.psq[k] + ws.psq[k + 1]) * ihx2;
            ws.csum[k] += c;
            ws.csum[k + 1] += c;
        }
    }
    if ny > 1 {
        let ihy2 = 1.0 / (grid.hy() * grid.hy());
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let k = iy * nx + ix;
                let k2 = k + nx;
                let c = 0.5 * (ws.psq[k] + ws.psq[k2]) * ihy2;
                ws.csum[k] += c;
                ws.csum[k2] += c;
            }
        }
    }
    for (s, &a_s) in alpha.iter().enumerate() {
        let base = s * nodes;
        for k in 0..nodes {
            diag[base + k] = 1.0
                + dt * (a_s * ws.csum[k] * (ws.g[k] + iterate[base + k] * ws.dg[k]) - reaction_diag);
        }
    }
    if grid.bc() == BoundaryCondition::Mixed {
        let row = (ny - 1) * nx;
        for s in 0..n {
            for ix in 0..nx {
                diag[s * nodes + row + ix] = 1.0;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGStab. Returns the achieved relative residual
/// and the iteration count; breakdowns simply return what was reached.
fn bicgstab(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iterations: usize,
) -> (f64, usize) {
    let len = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return (0.0, 0);
    }
    let tol = rtol * bnorm;
    let mut r = b.to_vec();
    let rhat = b.to_vec();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut y = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut s = vec![0.0; len];
    let mut t = vec![0.0; len];
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut rnorm = bnorm;
    for it in 1..=max_iterations {
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE {
            return (rnorm / bnorm, it);
        }
        if it == 1 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..len {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        for i in 0..len {
            y[i] = p[i] / diag[i];
        }
        apply(&y, &mut v);
        let denom = dot(&rhat, &v);
        if denom.abs() < f64::MIN_POSITIVE {
            return (rnorm / bnorm, it);
        }
        alpha = rho_new / denom;
        for i in 0..len {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm2(&s);
        if snorm <= tol {
            for i in 0..len {
                x[i] += alpha * y[i];
            }
            return (snorm / bnorm, it);
        }
        for i in 0..len {
            z[i] = s[i] / diag[i];
        }
        apply(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            for i in 0..len {
                x[i] += alpha * y[i];
            }
            return (snorm / bnorm, it);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..len {
            x[i] += alpha * y[i] + omega * z[i];
        }
        for i in 0..len {
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm2(&r);
        if rnorm <= tol || omega == 0.0 {
            return (rnorm / bnorm, it);
        }
        rho = rho_new;
    }
    (rnorm / bnorm, max_iterations)
}

/// Damped Newton solve of one backward-Euler step. `cand` enters as the
/// initial iterate (the previous state) and leaves as the solution.
#[allow(clippy::too_many_arguments)]
fn newton_solve(
    cls: &Closures,
    grid: &GridSpec,
    params: &ModelParams,
    reaction: &Reaction,
    opts: &NewtonOptions,
    dt: f64,
    u_old: &[f64],
    cand: &mut [f64],
    ws: &mut Workspace,
    js: &mut JvpScratch,
) -> Result<(usize, f64)> {
    let n = params.n();
    let len = cand.len();
    cand.copy_from_slice(u_old);
    pin_dirichlet(grid, n, cand);
    let mut gbuf = vec![0.0; len];
    let mut gbuf2 = vec![0.0; len];
    let mut trial = vec![0.0; len];
    let mut delta = vec![0.0; len];
    let mut diag = vec![0.0; len];
    let rdiag = reaction.jacobian_diag();
    let mut res = residual_into(cls, grid, params, reaction, dt, u_old, cand, ws, &mut gbuf)?;
    for iter in 1..=opts.max_iterations {
        if res <= opts.tol {
            return Ok((iter - 1, res));
        }
        fill_flux_derivatives(cls, grid.num_nodes(), ws)?;
        jacobi_diagonal(grid, &params.alpha, rdiag, dt, cand, ws, &mut diag);
        let (lin_res, _) = {
            let cand_ref: &[f64] = cand;
            let ws_ref: &Workspace = ws;
            let mut apply = |vv: &[f64], out: &mut [f64]| {
                apply_jacobian(grid, &params.alpha, rdiag, dt, cand_ref, ws_ref, js, vv, out)
            };
            bicgstab(
                &mut apply,
                &diag,
                &gbuf,
                &mut delta,
                opts.linear_rtol,
                opts.linear_max_iterations,
            )
        };
        if !lin_res.is_finite() || lin_res > 1e-2 {
            return Err(Error::NonConvergence {
                context: "linear solver stalled in implicit step".into(),
                residual: lin_res,
            });
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1e-10 {
            for i in 0..len {
                trial[i] = cand[i] - lambda * delta[i];
            }
            match residual_into(cls, grid, params, reaction, dt, u_old, &trial, ws, &mut gbuf2) {
                Ok(rn) if rn <= (1.0 - 1e-4 * lambda) * res || rn <= opts.tol => {
                    cand.copy_from_slice(&trial);
                    std::mem::swap(&mut gbuf, &mut gbuf2);
                    res = rn;
                    accepted = true;
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        if !accepted {
            return Err(Error::NonConvergence {
                context: "line search failed in implicit step".into(),
                residual: res,
            });
        }
        if res <= opts.tol {
            return Ok((iter, res));
        }
    }
    Err(Error::NonConvergence {
        context: "Newton iteration exhausted".into(),
        residual: res,
    })
}

#[allow(clippy::too_many_arguments)]
fn implicit_into(
    cls: &Closures,
    grid: &GridSpec,
    params: &ModelParams,
    reaction: &Reaction,
    opts: &NewtonOptions,
    state: &State,
    dt: f64,
    ws: &mut Workspace,
    js: &mut JvpScratch,
    out: &mut State,
) -> Result<StepReport> {
    validate_flat(state.data(), state.n_species(), grid)?;
    let mut dt_try = dt;
    let mut last_err = None;
    for _ in 0..=opts.max_halvings {
        match newton_solve(
            cls,
            grid,
            params,
            reaction,
            opts,
            dt_try,
            state.data(),
            out.data_mut(),
            ws,
            js,
        ) {
            Ok((iters, rn)) => {
                out.set_t(state.t() + dt_try);
                validate_flat(out.data(), state.n_species(), grid)?;
                return Ok(StepReport {
                    dt_used: dt_try,
                    max_m: out.max_m(),
                    min_u: out.min_u(),
                    newton_iterations: iters,
                    residual_norm: rn,
                });
            }
            Err(e) => {
                last_err = Some(e);
                dt_try *= 0.5;
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Numerical("implicit step failed".into())))
}

/// One explicit Euler step; rejects steps leaving the admissible region.
pub fn step_explicit(
    cls: &Closures,
    grid: &GridSpec,
    reaction: &Reaction,
    state: &State,
    dt: f64,
) -> Result<(State, StepReport)> {
    check_shapes(cls, grid, state, reaction)?;
    check_dt(dt)?;
    let params = cls.params().clone();
    let mut ws = Workspace::new(state.n_species(), grid.num_nodes());
    let mut out = state.clone();
    let report = explicit_into(cls, grid, &params, reaction, state, dt, &mut ws, &mut out)?;
    Ok((out, report))
}

/// One implicit Euler step (damped Newton, matrix-free BiCGStab), halving
/// the step on failure up to the configured budget.
pub fn step_implicit(
    cls: &Closures,
    grid: &GridSpec,
    reaction: &Reaction,
    state: &State,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<(State, StepReport)> {
    check_shapes(cls, grid, state, reaction)?;
    check_dt(dt)?;
    let params = cls.params().clone();
    let n = state.n_species();
    let nodes = grid.num_nodes();
    let mut ws = Workspace::new(n, nodes);
    let mut js = JvpScratch::new(n, nodes);
    let mut out = state.clone();
    let report = implicit_into(cls, grid, &params, reaction, opts, state, dt, &mut ws, &mut js, &mut out)?;
    Ok((out, report))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Summary of a completed (or aborted) time integration.
#[derive(Debug, Clone, Copy)]
pub struct RunOutcome {
    /// Accepted steps taken.
    pub steps: usize,
    /// Time reached.
    pub t_end: f64,
    /// Largest nodal total fraction seen anywhere along the run.
    pub max_m: f64,
    /// Smallest nodal fraction seen anywhere along the run.
    pub min_u: f64,
}

/// A configured time integration: model closures, grid, state, scheme and
/// the reference state that diagnostics measure distance to.
#[derive(Debug)]
pub struct Simulation {
    cls: Closures,
    params: ModelParams,
    grid: GridSpec,
    reaction: Reaction,
    scheme: Scheme,
    dt: f64,
    newton: NewtonOptions,
    state: State,
    scratch: State,
    reference: Reference,
    ws: Workspace,
    js: JvpScratch,
    steps: usize,
    max_m_overall: f64,
    min_u_overall: f64,
}

impl Simulation {
    pub fn new(
        cls: Closures,
        grid: GridSpec,
        state: State,
        scheme: Scheme,
        dt: f64,
        reaction: Reaction,
        reference: Reference,
    ) -> Result<Self> {
        check_shapes(&cls, &grid, &state, &reaction)?;
        check_dt(dt)?;
        state.check_valid(&grid)?;
        if reference.n() != state.n_species() {
            return Err(Error::Config("reference state dimension mismatch".into()));
        }
        let n = state.n_species();
        let nodes = grid.num_nodes();
        let params = cls.params().clone();
        let max_m_overall = state.max_m();
        let min_u_overall = state.min_u();
        Ok(Simulation {
            cls,
            params,
            grid,
            reaction,
            scheme,
            dt,
            newton: NewtonOptions::default(),
            scratch: state.clone(),
            state,
            reference,
            ws: Workspace::new(n, nodes),
            js: JvpScratch::new(n, nodes),
            steps: 0,
            max_m_overall,
            min_u_overall,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn closures(&self) -> &Closures {
        &self.cls
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Overrides the implicit-solver options.
    pub fn set_newton_options(&mut self, opts: NewtonOptions) {
        self.newton = opts;
    }

    /// Advances one step of the configured size.
    pub fn step(&mut self) -> Result<StepReport> {
        let dt = self.dt;
        self.step_dt(dt)
    }

    fn step_dt(&mut self, dt: f64) -> Result<StepReport> {
        let report = match self.scheme {
            Scheme::Explicit => explicit_into(
                &self.cls,
                &self.grid,
                &self.params,
                &self.reaction,
                &self.state,
                dt,
                &mut self.ws,
                &mut self.scratch,
            )?,
            Scheme::Implicit => implicit_into(
                &self.cls,
                &self.grid,
                &self.params,
                &self.reaction,
                &self.newton,
                &self.state,
                dt,
                &mut self.ws,
                &mut self.js,
                &mut self.scratch,
            )?,
        };
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.steps += 1;
        self.max_m_overall = self.max_m_overall.max(report.max_m);
        self.min_u_overall = self.min_u_overall.min(report.min_u);
        Ok(report)
    }

    /// Entropy/dissipation diagnostics of the current state.
    pub fn diagnostics_row(&self) -> Result<DiagnosticsRow> {
        diagnostics::compute_row(&self.cls, &self.grid, &self.state, &self.reference)
    }

    /// Integrates to `t_final`, reporting a diagnostics row for the
    /// initial state, after every `sample_every`-th step, and for the
    /// final state. The last partial step is shortened to land on
    /// `t_final` exactly; with `t_final` at or before the current time a
    /// single row is emitted and no step is taken. On a rejected step the
    /// error propagates after all earlier rows have been delivered.
    pub fn run_to(
        &mut self,
        t_final: f64,
        sample_every: usize,
        observer: &mut dyn FnMut(&DiagnosticsRow) -> Result<()>,
    ) -> Result<RunOutcome> {
        if sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        let row = self.diagnostics_row()?;
        observer(&row)?;
        let mut emitted_last = true;
        let mut taken = 0usize;
        while t_final - self.state.t() > self.dt * 1e-6 {
            let dt_step = self.dt.min(t_final - self.state.t());
            self.step_dt(dt_step)?;
            taken += 1;
            emitted_last = taken % sample_every == 0;
            if emitted_last {
                let row = self.diagnostics_row()?;
                observer(&row)?;
            }
        }
        if !emitted_last {
            let row = self.diagnostics_row()?;
            observer(&row)?;
        }
        Ok(RunOutcome {
            steps: taken,
            t_end: self.state.t(),
            max_m: self.max_m_overall,
            min_u: self.min_u_overall,
        })
    }
}
