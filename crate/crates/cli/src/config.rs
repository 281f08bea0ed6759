//! Run configuration in TOML. Sections may be written as tables or as
//! dotted keys (`physics.epsilon = 0.5`).

use std::fs;
use std::path::{Path, PathBuf};

use hevi_core::{
    build_mesh, BoundaryCondition, DescentOptions, FatigueMap, SingleFieldParams, SolverOptions, TimeGrid,
    TrackingObjective, Trajectory, TwoFieldParams, VolterraKernel,
};
use serde::Deserialize;

use crate::csvio::read_trajectory;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    SingleField,
    TwoField,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n_nodes: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T", alias = "t_final", default = "one")]
    pub t_final: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FatigueKindConfig {
    Sigmoid,
    Softplus,
    Constant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FatigueConfig {
    pub kind: FatigueKindConfig,
    pub kappa0: f64,
    pub kappa_min: Option<f64>,
    #[serde(default = "one")]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindConfig {
    None,
    Constant,
    Exponential,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKindConfig,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub offset: Vec<f64>,
}

/// A target given inline as a constant or as a CSV path relative to the
/// config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Constant(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub phi_target: Target,
    pub ell_target: Target,
    #[serde(default)]
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub spd_tol: Option<f64>,
    pub act_tol: Option<f64>,
    pub z_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub armijo_c: Option<f64>,
    pub armijo_shrink: Option<f64>,
    pub initial_step: Option<f64>,
    pub barzilai_borwein: Option<bool>,
    pub random_directions: Option<usize>,
    /// Single-field dictionary: nodal indicators on this many time blocks.
    pub time_blocks: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub physics: PhysicsConfig,
    pub fatigue: FatigueConfig,
    pub kernel: KernelConfig,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    /// Directory of the config file; relative target paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

/// Built-in configuration: the 4-node two-field instance used by `verify`.
pub const DEFAULT_CONFIG: &str = r#"
model = "two_field"
seed = 0
mesh.n_nodes = 4
mesh.length = 1.0
time.T = 1.0
time.n_steps = 20
physics.alpha = 0.5
physics.beta = 2.0
physics.epsilon = 0.5
fatigue.kind = "sigmoid"
fatigue.kappa0 = 1.0
fatigue.kappa_min = 0.2
fatigue.gamma = 2.0
kernel.kind = "exponential"
kernel.amplitude = 1.0
kernel.rate = 0.5
objective.phi_target = 0.0
objective.ell_target = 0.0
objective.alpha1 = 0.05
objective.alpha2 = 0.1
"#;

/// Model parameters built from a config.
pub enum Instance {
    Single(SingleFieldParams),
    Two(TwoFieldParams),
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(path, &text)
    }

    pub fn builtin() -> Self {
        Self::parse(Path::new("<default>"), DEFAULT_CONFIG).expect("built-in config is valid")
    }

    fn check(&self, path: &Path) -> CliResult<()> {
        let bad = |message: &str| {
            Err(CliError::Config {
                path: path.to_path_buf(),
                message: message.to_string(),
            })
        };
        if self.model == Model::TwoField && self.physics.beta.is_none() {
            return bad("physics.beta is required for the two-field model");
        }
        if self.model == Model::SingleField && self.physics.beta.is_some() {
            return bad("physics.beta only applies to the two-field model");
        }
        if self.fatigue.kind != FatigueKindConfig::Constant && self.fatigue.kappa_min.is_none() {
            return bad("fatigue.kappa_min is required unless fatigue.kind = \"constant\"");
        }
        if self.mesh.n_nodes == 0 || self.time.n_steps == 0 {
            return bad("mesh.n_nodes and time.n_steps must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.time.t_final, self.time.n_steps)?)
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes
    }

    fn fatigue_map(&self) -> FatigueMap {
        let f = &self.fatigue;
        let kmin = f.kappa_min.unwrap_or(f.kappa0);
        match f.kind {
            FatigueKindConfig::Sigmoid => FatigueMap::sigmoid(f.kappa0, kmin, f.gamma),
            FatigueKindConfig::Softplus => FatigueMap::softplus(f.kappa0, kmin, f.gamma),
            FatigueKindConfig::Constant => FatigueMap::constant(f.kappa0),
        }
    }

    fn kernel(&self) -> VolterraKernel {
        let k = &self.kernel;
        let base = match k.kind {
            KernelKindConfig::None => VolterraKernel::none(),
            KernelKindConfig::Constant => VolterraKernel::constant(k.amplitude),
            KernelKindConfig::Exponential => VolterraKernel::exponential(k.amplitude, k.rate),
        };
        base.with_offset(k.offset.clone())
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(v) = self.solver.spd_tol {
            o.spd_tol = v;
        }
        if let Some(v) = self.solver.act_tol {
            o.act_tol = v;
        }
        if let Some(v) = self.solver.z_tol {
            o.z_tol = v;
        }
        o
    }

    pub fn descent_options(&self) -> DescentOptions {
        let o = &self.optimize;
        let d = DescentOptions::default();
        DescentOptions {
            max_iters: o.max_iters.unwrap_or(d.max_iters),
            armijo_c: o.armijo_c.unwrap_or(d.armijo_c),
            armijo_shrink: o.armijo_shrink.unwrap_or(d.armijo_shrink),
            grad_tol: o.grad_tol.unwrap_or(d.grad_tol),
            initial_step: o.initial_step.unwrap_or(d.initial_step),
            max_shrinks: d.max_shrinks,
            barzilai_borwein: o.barzilai_borwein.unwrap_or(d.barzilai_borwein),
            random_directions: o.random_directions.unwrap_or(d.random_directions),
            seed: self.seed,
        }
    }

    pub fn instance(&self) -> CliResult<Instance> {
        let opts = self.solver_options();
        let p = &self.physics;
        Ok(match self.model {
            Model::SingleField => {
                let mesh = build_mesh(self.mesh.n_nodes, self.mesh.length, BoundaryCondition::Dirichlet)?;
                Instance::Single(
                    SingleFieldParams::new(p.alpha, p.epsilon, self.fatigue_map(), self.kernel(), mesh)?
                        .with_options(opts),
                )
            }
            Model::TwoField => {
                let mesh = build_mesh(self.mesh.n_nodes, self.mesh.length, BoundaryCondition::Natural)?;
                let beta = p.beta.unwrap_or_default();
                Instance::Two(TwoFieldParams::with_options(
                    p.alpha,
                    beta,
                    p.epsilon,
                    self.fatigue_map(),
                    self.kernel(),
                    mesh,
                    opts,
                )?)
            }
        })
    }

    fn target(&self, t: &Target, times: Vec<f64>, what: &str) -> CliResult<Trajectory> {
        let n = self.n_nodes();
        match t {
            Target::Constant(v) => Ok(Trajectory::constant(times, &vec![*v; n])),
            Target::File(rel) => {
                let path = self.base_dir.join(rel);
                let y = read_trajectory(&path)?;
                // state files carry one extra row at t = T; it is accepted and ignored
                let rows = self.time.n_steps;
                if y.dim() != n || (y.len() != rows && y.len() != rows + 1) {
                    return Err(CliError::Config {
                        path,
                        message: format!(
                            "{what} must have {n} node columns and {rows} or {} rows, found {} x {}",
                            rows + 1,
                            y.len(),
                            y.dim()
                        ),
                    });
                }
                Ok(y)
            }
        }
    }

    pub fn objective(&self) -> CliResult<TrackingObjective> {
        let grid = self.grid()?;
        let o = &self.objective;
        let phi = self.target(&o.phi_target, grid.control_times(), "objective.phi_target")?;
        let ell = self.target(&o.ell_target, grid.control_times(), "objective.ell_target")?;
        if ell.len() != grid.n_steps() {
            return Err(CliError::Usage("objective.ell_target needs exactly n_steps rows".into()));
        }
        Ok(TrackingObjective::new(phi, ell, o.alpha1, o.alpha2)?)
    }

    /// Nodal indicators, constant on each of `time_blocks` blocks and
    /// normalized in `L²(0,T;L²)`.
    pub fn dictionary(&self, mass: &[f64]) -> CliResult<Vec<Trajectory>> {
        let grid = self.grid()?;
        let blocks = self.optimize.time_blocks.unwrap_or(1).clamp(1, grid.n_steps());
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(blocks * n);
        for b in 0..blocks {
            for i in 0..n {
                let y = Trajectory::control_from_fn(&grid, n, |t, j| {
                    let k = ((t / grid.dt()).round() as usize).min(grid.n_steps() - 1);
                    if j == i && k * blocks / grid.n_steps() == b {
                        1.0
                    } else {
                        0.0
                    }
                });
                let nrm = y.weighted_norm(mass, grid.dt());
                out.push(y.scaled(1.0 / nrm));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_config_parses() {
        let c = RunConfig::builtin();
        assert_eq!(c.model, Model::TwoField);
        assert_eq!(c.time.n_steps, 20);
        assert!(matches!(c.instance().unwrap(), Instance::Two(_)));
    }

    #[test]
    fn table_and_dotted_forms_agree() {
        let tables = r#"
model = "single_field"
[mesh]
n_nodes = 3
[time]
T = 2.0
n_steps = 10
[physics]
alpha = 1.0
epsilon = 0.5
[fatigue]
kind = "constant"
kappa0 = 1.0
[kernel]
kind = "none"
[objective]
phi_target = 0.0
ell_target = 1.5
alpha2 = 0.1
"#;
        let c = RunConfig::parse(Path::new("a.toml"), tables).unwrap();
        assert_eq!(c.time.t_final, 2.0);
        assert_eq!(c.objective().unwrap().ell_target.row(3), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_beta() {
        let typo = DEFAULT_CONFIG.replace("physics.epsilon", "physics.epsilom");
        assert!(RunConfig::parse(Path::new("x"), &typo).is_err());
        let no_beta = DEFAULT_CONFIG.replace("physics.beta = 2.0\n", "");
        assert!(RunConfig::parse(Path::new("x"), &no_beta).is_err());
    }

    #[test]
    fn dictionary_blocks_cover_every_step_once() {
        let mut c = RunConfig::builtin();
        c.optimize.time_blocks = Some(3);
        let mass = vec![1.0; 4];
        let d = c.dictionary(&mass).unwrap();
        assert_eq!(d.len(), 12);
        let mut sum = Trajectory::control_zeros(&c.grid().unwrap(), 4);
        for y in &d {
            sum = sum.add_scaled(1.0, &y.map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        }
        assert!(sum.rows().iter().all(|r| r.iter().all(|v| *v == 1.0)));
    }
}
