//! JSON run configuration with defaults and field-path error messages.
//!
//! ```json
//! {
//!   "grid": {"nx": 16, "ny": 16, "nz": 17},
//!   "params": {"sigma": 0.5, "kappa": 0.1, "b": 1.0, "delta0": 0.0},
//!   "time": {"t_final": 0.1, "safety": 0.5},
//!   "initial": {"psi": [{"amp": 0.01, "k": [1, 0]}]}
//! }
//! ```
//!
//! Only `grid` is required.

use crate::error::{Error, Result};
use crate::evolution::RunOptions;
use crate::grid::{Field, Grid};
use crate::scalar::{lit, Real};
use crate::state::{build_initial_data, ElasticColumn, InitialData, Model, Params, State};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub sigma: f64,
    pub kappa: f64,
    pub b: f64,
    /// `0` selects the full-depth polynomial cutoff.
    pub delta0: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { sigma: 0.5, kappa: 0.1, b: 1.0, delta0: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub safety: f64,
    /// Diagnostics every `cadence` steps.
    pub cadence: usize,
    pub fixed_dt: Option<f64>,
    pub with_e4: bool,
    /// Write a snapshot every this many steps; `0` writes only the final state.
    pub snapshot_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t_final: 0.1, safety: 0.5, cadence: 1, fixed_dt: None, with_e4: false, snapshot_every: 0 }
    }
}

/// `amp · sin(k·x̄ + phase) · ((x₃ + b)/b)^power`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amp: f64,
    pub k: [i64; 2],
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub power: u32,
}

impl Wave {
    fn horizontal(&self, x: f64, y: f64) -> f64 {
        self.amp * (self.k[0] as f64 * x + self.k[1] as f64 * y + self.phase).sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialWave {
    /// Component of the vector potential, `0..=2`.
    pub component: usize,
    #[serde(flatten)]
    pub wave: Wave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub mean: [f64; 2],
    #[serde(default)]
    pub stream: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub psi: Vec<Wave>,
    pub potential: Vec<PotentialWave>,
    pub columns: [ColumnConfig; 3],
}

impl Default for InitialConfig {
    fn default() -> Self {
        let col = |mean| ColumnConfig { mean, stream: Vec::new() };
        InitialConfig {
            psi: vec![Wave { amp: 0.01, k: [1, 0], phase: 0.0, power: 0 }],
            potential: Vec::new(),
            columns: [col([1.0, 0.0]), col([0.0, 1.0]), col([0.0, 0.0])],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GalerkinConfig {
    pub m: usize,
    pub t_final: f64,
    pub dt: Option<f64>,
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        GalerkinConfig { m: 16, t_final: 0.5, dt: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub n_max: usize,
    pub t_final: f64,
    pub steps: Option<usize>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { n_max: 7, t_final: 0.1, steps: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KappaStudyConfig {
    pub kappas: Vec<f64>,
}

impl Default for KappaStudyConfig {
    fn default() -> Self {
        KappaStudyConfig { kappas: vec![0.1, 0.05, 0.025] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub galerkin: GalerkinConfig,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub kappa_study: KappaStudyConfig,
}

fn require(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

impl RunConfig {
    /// Checks every value that serde cannot.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        require(g.nx >= 4 && g.nx.is_multiple_of(2), "grid.nx", "must be even and >= 4")?;
        require(g.ny >= 4 && g.ny.is_multiple_of(2), "grid.ny", "must be even and >= 4")?;
        require(g.nz >= 3, "grid.nz", "must be >= 3")?;
        let p = &self.params;
        require(p.sigma > 0.0 && p.sigma.is_finite(), "params.sigma", "sigma must be > 0")?;
        require(p.kappa >= 0.0 && p.kappa.is_finite(), "params.kappa", "kappa must be >= 0")?;
        require(p.b > 0.0 && p.b.is_finite(), "params.b", "b must be > 0")?;
        require(p.delta0 >= 0.0 && p.delta0 < p.b / 2.0, "params.delta0", "delta0 must lie in [0, b/2)")?;
        let t = &self.time;
        require(t.t_final >= 0.0 && t.t_final.is_finite(), "time.t_final", "must be finite and >= 0")?;
        require(t.safety > 0.0 && t.safety <= 1.0, "time.safety", "must lie in (0, 1]")?;
        require(t.cadence >= 1, "time.cadence", "must be >= 1")?;
        if let Some(dt) = t.fixed_dt {
            require(dt > 0.0 && dt.is_finite(), "time.fixed_dt", "must be > 0")?;
        }
        for (i, w) in self.initial.potential.iter().enumerate() {
            let path = format!("initial.potential[{i}]");
            require(w.component < 3, &format!("{path}.component"), "must be 0, 1 or 2")?;
            require(
                w.component == 2 || w.wave.power >= 1,
                &format!("{path}.power"),
                "horizontal potential components must vanish on the bottom (power >= 1)",
            )?;
        }
        require(self.galerkin.m >= 1 && self.galerkin.m <= 64, "galerkin.m", "must lie in 1..=64")?;
        require(self.galerkin.t_final > 0.0, "galerkin.t_final", "must be > 0")?;
        require(self.picard.n_max >= 1, "picard.n_max", "must be >= 1")?;
        require(self.picard.t_final > 0.0, "picard.t_final", "must be > 0")?;
        let ks = &self.kappa_study.kappas;
        require(ks.len() >= 3, "kappa_study.kappas", "needs at least three values")?;
        require(
            ks.iter().all(|&k| k >= 0.0) && ks.windows(2).all(|w| w[1] < w[0]),
            "kappa_study.kappas",
            "values must be non-negative and strictly descending",
        )?;
        Ok(())
    }

    pub fn params<T: Real>(&self) -> Params<T> {
        let p = &self.params;
        Params { sigma: lit(p.sigma), kappa: lit(p.kappa), b: lit(p.b), delta0: lit(p.delta0) }
    }

    pub fn model<T: Real>(&self) -> Result<Model<T>> {
        let g = &self.grid;
        let grid = Grid::new(g.nx, g.ny, g.nz, lit(self.params.b)).map_err(|e| Error::config("grid", e.to_string()))?;
        Model::new(grid, self.params()).map_err(|e| Error::config("params", e.to_string()))
    }

    pub fn run_options<T: Real>(&self) -> RunOptions<T> {
        let t = &self.time;
        RunOptions {
            t_final: lit(t.t_final),
            safety: lit(t.safety),
            cadence: t.cadence,
            fixed_dt: t.fixed_dt.map(lit),
            with_e4: t.with_e4,
        }
    }

    /// The configured waves as fields on `model`'s grid.
    pub fn initial_data<T: Real>(&self, model: &Model<T>) -> InitialData<T> {
        let grid = &model.grid;
        let b: f64 = self.params.b;
        let volume = |waves: &[&Wave]| -> Field<T> {
            grid.volume_from_fn(|x, y, z| {
                let (x, y, z) = (crate::scalar::to_f64(x), crate::scalar::to_f64(y), crate::scalar::to_f64(z));
                lit(waves.iter().map(|w| w.horizontal(x, y) * ((z + b) / b).powi(w.power as i32)).sum::<f64>())
            })
        };
        let init = &self.initial;
        let psi0 = grid.surface_from_fn(|x, y| {
            let (x, y) = (crate::scalar::to_f64(x), crate::scalar::to_f64(y));
            lit(init.psi.iter().map(|w| w.horizontal(x, y)).sum::<f64>())
        });
        let potential = if init.potential.is_empty() {
            None
        } else {
            Some([0, 1, 2].map(|c| {
                let ws: Vec<&Wave> = init.potential.iter().filter(|p| p.component == c).map(|p| &p.wave).collect();
                volume(&ws)
            }))
        };
        let columns = [0, 1, 2].map(|k| {
            let col = &init.columns[k];
            ElasticColumn {
                mean: [lit(col.mean[0]), lit(col.mean[1])],
                stream: if col.stream.is_empty() { None } else { Some(volume(&col.stream.iter().collect::<Vec<_>>())) },
            }
        });
        InitialData { psi0, potential, columns }
    }

    pub fn initial_state<T: Real>(&self, model: &Model<T>) -> Result<State<T>> {
        build_initial_data(model, &self.initial_data(model))
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(r#"{"grid":{"nx":16,"ny":16,"nz":17}}"#).unwrap();
        assert_eq!(c.params, ParamsConfig::default());
        assert_eq!(c.time.safety, 0.5);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn errors_carry_the_field_path() {
        let e = parse_config(r#"{"grid":{"nx":16,"ny":16,"nz":17},"params":{"sigma":-1}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config { path, message } if path == "params.sigma" && message == "sigma must be > 0"));
        let e = parse_config(r#"{"grid":{"nx":16,"ny":"x","nz":17}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "grid.ny"), "{e}");
        let e = parse_config(r#"{"grid":{"nx":16,"ny":16,"nz":17},"tiem":{}}"#).unwrap_err();
        assert!(e.to_string().contains("tiem"), "{e}");
        assert!(parse_config(r#"{"grid":{"nx":16,"ny":16,"nz":17},"params":{"kappa":0}}"#).is_ok());
    }
}
