//! Structured grids on the unit square/interval and nodal state storage.
//!
//! Nodes sit at `x_i = i hx`, `y_j = j hy` with `hx = 1/(nx-1)` (and `hy`
//! likewise; a 1D line uses `ny = 1`, `hy = 1`). Every node owns the same
//! cell area `hx*hy`, and boundary faces carry zero flux (mirror ghosts), so
//! the discrete divergence telescopes and area-weighted mass is conserved
//! exactly for pure Neumann problems. The mixed condition pins the top edge
//! (`y = 1`) to constant Dirichlet data and keeps zero flux on the other
//! three sides.

use crate::error::{Error, Result};
use crate::params::DELTA_CAP;

/// Boundary condition of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Zero-flux on every edge.
    Neumann,
    /// Dirichlet data on the top edge `y = 1`, zero-flux elsewhere.
    Mixed,
}

/// A uniform node-centered grid with its boundary description.
#[derive(Debug, Clone)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    bc: BoundaryCondition,
    /// Constant Dirichlet composition (present iff `bc` is `Mixed`).
    u_d: Option<Vec<f64>>,
}

impl GridSpec {
    /// Unit-square grid. `Mixed` needs `ny >= 2` and strictly positive
    /// Dirichlet data with total below saturation.
    pub fn unit_square(
        nx: usize,
        ny: usize,
        bc: BoundaryCondition,
        u_d: Option<Vec<f64>>,
    ) -> Result<Self> {
        if nx < 2 || ny < 1 {
            return Err(Error::Domain(format!("grid needs nx >= 2, ny >= 1; got {nx} x {ny}")));
        }
        match bc {
            BoundaryCondition::Mixed => {
                if ny < 2 {
                    return Err(Error::Domain(
                        "Dirichlet top edge needs a 2D grid (ny >= 2)".into(),
                    ));
                }
                let data = u_d.as_ref().ok_or_else(|| {
                    Error::Domain("mixed boundary conditions need Dirichlet data".into())
                })?;
                if data.is_empty() || data.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::Domain(
                        "Dirichlet data must be strictly positive".into(),
                    ));
                }
                let m_d: f64 = data.iter().sum();
                if m_d >= 1.0 {
                    return Err(Error::Domain(format!(
                        "Dirichlet total biomass M_D = {m_d} must stay below 1"
                    )));
                }
            }
            BoundaryCondition::Neumann => {
                if u_d.is_some() {
                    return Err(Error::Domain(
                        "Neumann problems carry no Dirichlet data".into(),
                    ));
                }
            }
        }
        let hx = 1.0 / (nx - 1) as f64;
        let hy = if ny > 1 { 1.0 / (ny - 1) as f64 } else { 1.0 };
        Ok(Self { nx, ny, hx, hy, bc, u_d })
    }

    /// 1D zero-flux line with `nx` nodes.
    pub fn line(nx: usize) -> Result<Self> {
        Self::unit_square(nx, 1, BoundaryCondition::Neumann, None)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// Area associated with every node.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Flat index of node `(ix, iy)`.
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Inverse of [`GridSpec::idx`].
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    /// Node position in the unit square.
    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.hx, iy as f64 * self.hy)
    }

    #[inline]
    pub fn is_dirichlet_node(&self, _ix: usize, iy: usize) -> bool {
        self.bc == BoundaryCondition::Mixed && iy == self.ny - 1
    }

    pub fn dirichlet_data(&self) -> Option<&[f64]> {
        self.u_d.as_deref()
    }
}

/// Nodal fields of all species plus simulation time. Species-major layout:
/// `u[s * nodes + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    n: usize,
    nodes: usize,
    u: Vec<f64>,
    t: f64,
}

impl State {
    pub fn zeros(n: usize, grid: &GridSpec) -> Self {
        Self { n, nodes: grid.num_nodes(), u: vec![0.0; n * grid.num_nodes()], t: 0.0 }
    }

    /// Builds a state from per-species fields (each of `num_nodes` length).
    pub fn from_fields(fields: &[Vec<f64>], grid: &GridSpec, t: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Domain("state needs at least one species".into()));
        }
        let nodes = grid.num_nodes();
        let mut u = Vec::with_capacity(fields.len() * nodes);
        for (s, f) in fields.iter().enumerate() {
            if f.len() != nodes {
                return Err(Error::Domain(format!(
                    "species {s}: field has {} values, grid has {nodes} nodes",
                    f.len()
                )));
            }
            u.extend_from_slice(f);
        }
        Ok(Self { n: fields.len(), nodes, u, t })
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    pub fn species(&self, s: usize) -> &[f64] {
        &self.u[s * self.nodes..(s + 1) * self.nodes]
    }

    pub fn species_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.u[s * self.nodes..(s + 1) * self.nodes]
    }

    pub fn data(&self) -> &[f64] {
        &self.u
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    /// Total biomass at node `k`.
    pub fn m_at(&self, k: usize) -> f64 {
        (0..self.n).map(|s| self.u[s * self.nodes + k]).sum()
    }

    /// Area-weighted total of each species over the grid.
    pub fn per_species_mass(&self, grid: &GridSpec) -> Vec<f64> {
        let area = grid.cell_area();
        (0..self.n).map(|s| self.species(s).iter().sum::<f64>() * area).collect()
    }

    /// Mean total biomass over the nodes.
    pub fn mass_mean(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.nodes as f64
    }

    pub fn min_u(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_m(&self) -> f64 {
        (0..self.nodes).map(|k| self.m_at(k)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks `u_i >= 0` and `M <= 1 - DELTA_CAP` at every node; the error
    /// identifies the offending node and species.
    pub fn check_valid(&self, grid: &GridSpec) -> Result<()> {
        for s in 0..self.n {
            let f = self.species(s);
            for (k, &v) in f.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    let (ix, iy) = grid.coords(k);
                    return Err(Error::StepRejected {
                        reason: "negative or non-finite volume fraction".into(),
                        species: s,
                        ix,
                        iy,
                        value: v,
                    });
                }
            }
        }
        for k in 0..self.nodes {
            let m = self.m_at(k);
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
}
