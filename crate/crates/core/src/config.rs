//! Flat `key=value` run configuration: parsing, benchmark presets,
//! override precedence, and assembly into ready-to-run pieces.
//!
//! Precedence, lowest to highest: preset selected by `test`, then file
//! keys, then command-line overrides. The `test` key itself may come from
//! any layer; everything else is applied on top of the chosen preset.

use std::collections::BTreeMap;

use crate::closures::Closures;
use crate::entropy::Reference;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::reactions::Reaction;
use crate::solver::{BoundaryCondition, GridSpec, Scheme, Simulation, State};

/// Which benchmark layout the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCase {
    /// Mixed boundary benchmark: three species, relaxation reaction,
    /// Dirichlet data on the top edge.
    One,
    /// Pure-Neumann benchmark: three species, no reactions.
    Two,
    /// Generalized layout: `n` species raised on disjoint blocks.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionKind {
    Relaxation,
    None,
}

/// All tunable knobs of a run. Field defaults come from the preset of the
/// selected [`TestCase`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub test: TestCase,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub n: usize,
    /// Explicit per-species rates; `None` means all ones.
    pub alpha: Option<Vec<f64>>,
    /// Background fraction and block increment (the benchmark's epsilon).
    pub eps: f64,
    pub bc: BoundaryCondition,
    pub reaction: ReactionKind,
    pub sample_every: usize,
    /// CSV destination; `None` writes to standard output.
    pub out: Option<String>,
    /// Seed for randomized property runs (not consumed by plain runs).
    pub seed: u64,
}

const KNOWN_KEYS: [&str; 17] = [
    "test", "nx", "ny", "dt", "t_final", "scheme", "a", "b", "kappa", "n", "alpha", "eps", "bc",
    "reaction", "sample_every", "out", "seed",
];

impl RunConfig {
    /// The defaults of one benchmark.
    pub fn preset(test: TestCase) -> Self {
        let common = RunConfig {
            test,
            nx: 32,
            ny: 32,
            dt: 1e-4,
            t_final: 2.0,
            scheme: Scheme::Explicit,
            a: 2.0,
            b: 2.0,
            kappa: 1.0,
            n: 3,
            alpha: None,
            eps: 0.1,
            bc: BoundaryCondition::Mixed,
            reaction: ReactionKind::Relaxation,
            sample_every: 100,
            out: None,
            seed: 0,
        };
        match test {
            TestCase::One | TestCase::Custom => common,
            TestCase::Two => RunConfig {
                a: 1.0,
                b: 2.0,
                kappa: 0.9,
                bc: BoundaryCondition::Neumann,
                reaction: ReactionKind::None,
                ..common
            },
        }
    }

    /// Builds a config from optional file text plus `key=value` overrides
    /// (later entries win).
    pub fn from_sources(file_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut map = match file_text {
            Some(text) => parse_flat(text)?,
            None => BTreeMap::new(),
        };
        for item in overrides {
            let (k, v) = split_kv(item)?;
            map.insert(k, v);
        }
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let test = match map.get("test").map(String::as_str) {
            None => TestCase::Custom,
            Some("1") => TestCase::One,
            Some("2") => TestCase::Two,
            Some("custom") => TestCase::Custom,
            Some(other) => {
                return Err(Error::Config(format!(
                    "test must be 1, 2 or custom, got `{other}`"
                )))
            }
        };
        let mut cfg = RunConfig::preset(test);
        for (key, value) in &map {
            if key != "test" {
                cfg.apply(key, value)?;
            }
        }
        Ok(cfg)
    }

    /// Applies one known key. `test` is handled by [`Self::from_sources`].
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nx" => self.nx = parse_num(key, value)?,
            "ny" => self.ny = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "t_final" => self.t_final = parse_num(key, value)?,
            "scheme" => {
                self.scheme = match value {
                    "explicit" => Scheme::Explicit,
                    "implicit" => Scheme::Implicit,
                    _ => {
                        return Err(Error::Config(format!(
                            "scheme must be explicit or implicit, got `{value}`"
                        )))
                    }
                }
            }
            "a" => self.a = parse_num(key, value)?,
            "b" => self.b = parse_num(key, value)?,
            "kappa" => self.kappa = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "alpha" => {
                let list: Result<Vec<f64>> = value
                    .split(',')
                    .map(|v| parse_num("alpha", v.trim()))
                    .collect();
                self.alpha = Some(list?);
            }
            "eps" => self.eps = parse_num(key, value)?,
            "bc" => {
                self.bc = match value {
                    "mixed" => BoundaryCondition::Mixed,
                    "neumann" => BoundaryCondition::Neumann,
                    _ => {
                        return Err(Error::Config(format!(
                            "bc must be mixed or neumann, got `{value}`"
                        )))
                    }
                }
            }
            "reaction" => {
                self.reaction = match value {
                    "relaxation" => ReactionKind::Relaxation,
                    "none" => ReactionKind::None,
                    _ => {
                        return Err(Error::Config(format!(
                            "reaction must be relaxation or none, got `{value}`"
                        )))
                    }
                }
            }
            "sample_every" => self.sample_every = parse_num(key, value)?,
            "out" => self.out = Some(value.to_string()),
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Resolved per-species rates.
    pub fn alphas(&self) -> Result<Vec<f64>> {
        match &self.alpha {
            None => Ok(vec![1.0; self.n]),
            Some(list) if list.len() == 1 => Ok(vec![list[0]; self.n]),
            Some(list) if list.len() == self.n => Ok(list.clone()),
            Some(list) => Err(Error::Config(format!(
                "alpha lists {} rates for n = {} species",
                list.len(),
                self.n
            ))),
        }
    }

    /// Validates the cross-field constraints and builds every run
    /// ingredient.
    pub fn finalize(&self) -> Result<ReadyRun> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if matches!(self.test, TestCase::One | TestCase::Two) && self.n != 3 {
            return Err(Error::Config(format!(
                "the numbered benchmarks are three-species layouts; use test=custom for n = {}",
                self.n
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        let params = ModelParams::new(self.a, self.b, self.kappa, self.alphas()?)?;
        let cls = Closures::tabulated(params.clone())?;
        let background = vec![self.eps; self.n];
        let dirichlet = match self.bc {
            BoundaryCondition::Mixed => Some(background.clone()),
            BoundaryCondition::Neumann => None,
        };
        let grid = GridSpec::unit_square(self.nx, self.ny, self.bc, dirichlet)?;
        let state = match self.test {
            TestCase::One | TestCase::Two => block_initial_state(
                &grid,
                self.eps,
                self.eps,
                &[(0.2, 0.5), (0.5, 0.8), (0.2, 0.8)],
            )?,
            TestCase::Custom => {
                block_initial_state(&grid, self.eps, self.eps, &disjoint_blocks(self.n))?
            }
        };
        let reaction = match self.reaction {
            ReactionKind::Relaxation => Reaction::Relaxation { u_d: background.clone() },
            ReactionKind::None => Reaction::None,
        };
        // Diagnostics measure distance to the Dirichlet composition when
        // one exists, otherwise to the nodal mean of the initial data (the
        // exact stationary target of the discrete mass identity).
        let reference_u = match self.bc {
            BoundaryCondition::Mixed => background,
            BoundaryCondition::Neumann => {
                let nodes = grid.num_nodes() as f64;
                (0..self.n)
                    .map(|s| state.species(s).iter().sum::<f64>() / nodes)
                    .collect()
            }
        };
        let reference = Reference::new(&cls, &reference_u)?;
        Ok(ReadyRun {
            config: self.clone(),
            cls,
            grid,
            state,
            reaction,
            reference,
        })
    }
}

/// Everything a run needs, assembled and validated.
#[derive(Debug)]
pub struct ReadyRun {
    pub config: RunConfig,
    pub cls: Closures,
    pub grid: GridSpec,
    pub state: State,
    pub reaction: Reaction,
    pub reference: Reference,
}

impl ReadyRun {
    pub fn into_simulation(self) -> Result<Simulation> {
        Simulation::new(
            self.cls,
            self.grid,
            self.state,
            self.config.scheme,
            self.config.dt,
            self.reaction,
            self.reference,
        )
    }
}

/// Initial data of the benchmarks: every species sits at `background`
/// everywhere and is raised by `eps` inside its block `[x0, x1] x [0,
/// 0.2]` (closed intervals, so nodes on the boundary belong to the block).
pub fn block_initial_state(
    grid: &GridSpec,
    background: f64,
    eps: f64,
    blocks: &[(f64, f64)],
) -> Result<State> {
    let mut fields = Vec::with_capacity(blocks.len());
    for &(x0, x1) in blocks {
        let mut f = vec![0.0; grid.num_nodes()];
        for k in 0..grid.num_nodes() {
            let (ix, iy) = grid.coords(k);
            let (x, y) = grid.position(ix, iy);
            f[k] = if (x0..=x1).contains(&x) && y <= 0.2 {
                background + eps
            } else {
                background
            };
        }
        fields.push(f);
    }
    State::from_fields(&fields, grid, 0.0)
}

/// `n` equal disjoint x-intervals partitioning `[0.2, 0.8]`, one per
/// species, for the generalized layout.
pub fn disjoint_blocks(n: usize) -> Vec<(f64, f64)> {
    let width = 0.6 / n as f64;
    (0..n)
        .map(|i| (0.2 + width * i as f64, 0.2 + width * (i + 1) as f64))
        .collect()
}

/// Parses flat `key=value` text: one pair per line, `#` starts a comment,
/// blank lines ignored, later duplicates win.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_kv(line)
            .map_err(|_| Error::Config(format!("line {}: expected key=value, got `{line}`", idx + 1)))?;
        map.insert(k, v);
    }
    Ok(map)
}

fn split_kv(item: &str) -> Result<(String, String)> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{item}`")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("empty key in `{item}`")));
    }
    Ok((key.to_string(), v.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("could not parse `{value}` for key `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_published_benchmarks() {
        let one = RunConfig::preset(TestCase::One);
        assert_eq!((one.a, one.b, one.kappa), (2.0, 2.0, 1.0));
        assert_eq!(one.bc, BoundaryCondition::Mixed);
        assert_eq!(one.reaction, ReactionKind::Relaxation);
        assert_eq!(one.dt, 1e-4);
        assert_eq!(one.eps, 0.1);

        let two = RunConfig::preset(TestCase::Two);
        assert_eq!((two.a, two.b, two.kappa), (1.0, 2.0, 0.9));
        assert_eq!(two.bc, BoundaryCondition::Neumann);
        assert_eq!(two.reaction, ReactionKind::None);
    }

    #[test]
    fn overrides_beat_file_keys_beat_presets() {
        let file = "test=1\nnx=16\ndt=2e-4\n";
        let overrides = vec!["nx=48".to_string()];
        let cfg = RunConfig::from_sources(Some(file), &overrides).unwrap();
        assert_eq!(cfg.test, TestCase::One);
        assert_eq!(cfg.nx, 48); // override beats file
        assert_eq!(cfg.dt, 2e-4); // file beats preset
        assert_eq!(cfg.ny, 32); // preset survives untouched keys
    }

    #[test]
    fn test_key_can_come_from_an_override() {
        let cfg = RunConfig::from_sources(None, &["test=2".to_string()]).unwrap();
        assert_eq!(cfg.test, TestCase::Two);
        assert_eq!(cfg.bc, BoundaryCondition::Neumann);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_sources(Some("granularity=9\n"), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_sources(None, &["weird=1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("weird"), "{err}");
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "\n# a comment\n  nx = 20  # trailing\n\nny=21\n";
        let map = parse_flat(text).unwrap();
        assert_eq!(map.get("nx").unwrap(), "20");
        assert_eq!(map.get("ny").unwrap(), "21");
    }

    #[test]
    fn alpha_list_must_match_species_count() {
        let mut cfg = RunConfig::preset(TestCase::One);
        cfg.alpha = Some(vec![1.0, 2.0]);
        assert!(cfg.alphas().is_err());
        cfg.alpha = Some(vec![3.0]);
        assert_eq!(cfg.alphas().unwrap(), vec![3.0, 3.0, 3.0]);
        cfg.alpha = Some(vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.alphas().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn finalize_builds_the_mixed_benchmark() {
        let run = RunConfig::preset(TestCase::One).finalize().unwrap();
        assert_eq!(run.grid.bc(), BoundaryCondition::Mixed);
        assert_eq!(run.state.n_species(), 3);
        // Background 0.1 everywhere; the overlap of blocks 1 and 3 puts
        // the peak total at 0.5.
        assert!((run.state.max_m() - 0.5).abs() < 1e-15);
        assert!((run.state.min_u() - 0.1).abs() < 1e-15);
        // Inside block 1 at (0.3, 0.1): u1 raised, u2 background.
        let k = run.grid.idx(
            (0.3 / run.grid.hx()).round() as usize,
            (0.1 / run.grid.hy()).round() as usize,
        );
        assert!((run.state.species(0)[k] - 0.2).abs() < 1e-15);
        assert!((run.state.species(1)[k] - 0.1).abs() < 1e-15);
        assert!((run.state.species(2)[k] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn neumann_reference_is_the_nodal_mean() {
        let run = RunConfig::preset(TestCase::Two).finalize().unwrap();
        let nodes = run.grid.num_nodes() as f64;
        for s in 0..3 {
            let mean = run.state.species(s).iter().sum::<f64>() / nodes;
            assert!((run.reference.u()[s] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn numbered_benchmarks_pin_three_species() {
        let mut cfg = RunConfig::preset(TestCase::One);
        cfg.n = 4;
        assert!(cfg.finalize().is_err());
        let mut cfg = RunConfig::preset(TestCase::Custom);
        cfg.n = 4;
        let run = cfg.finalize().unwrap();
        assert_eq!(run.state.n_species(), 4);
        // Disjoint blocks: peak total is background*n + one eps.
        assert!((run.state.max_m() - (0.4 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn custom_blocks_partition_the_strip() {
        let blocks = disjoint_blocks(3);
        assert_eq!(blocks.len(), 3);
        assert!((blocks[0].0 - 0.2).abs() < 1e-15);
        assert!((blocks[2].1 - 0.8).abs() < 1e-15);
        for w in blocks.windows(2) {
            assert!((w[0].1 - w[1].0).abs() < 1e-15, "blocks must tile");
        }
    }
}
