use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hevi_core::objective::eval_partials;
use hevi_core::single_field::{adjoint_single, forward_single, sensitivity_single, stationarity_residual_single};
use hevi_core::two_field::{adjoint_two, directional_derivative, forward_two, sensitivity_two, stationarity_residual_two};
use hevi_core::{
    descend_single_field, descend_two_field, directional_derivative_single, eval_objective, verify, EviError,
    Trajectory,
};

use crate::config::{Instance, RunConfig};
use crate::csvio::{read_trajectory, write_trajectory};
use crate::error::{CliError, CliResult};

pub struct Outputs {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str, y: &Trajectory) -> CliResult<()> {
        let path = self.dir.join(name);
        write_trajectory(&path, y)?;
        self.written.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }
}

/// Reads a control file and checks it against the grid and mesh.
fn read_control(cfg: &RunConfig, path: Option<&Path>, flag: &str) -> CliResult<Trajectory> {
    let path = path.ok_or_else(|| CliError::Usage(format!("{flag} <path> is required for this command")))?;
    let y = read_trajectory(path)?;
    let (rows, n) = (cfg.time.n_steps, cfg.n_nodes());
    if y.len() != rows || y.dim() != n {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected {rows} rows x {n} nodes, found {} x {}", y.len(), y.dim()),
        });
    }
    Ok(y)
}

pub fn forward(cfg: &RunConfig, ell: Option<&Path>, out: &mut Outputs) -> CliResult<()> {
    let ell = read_control(cfg, ell, "--ell")?;
    let grid = cfg.grid()?;
    match cfg.instance()? {
        Instance::Single(p) => {
            let s = forward_single(&p, &ell, &grid)?;
            out.csv("q.csv", &s.q)?;
        }
        Instance::Two(p) => {
            let s = forward_two(&p, &ell, &grid)?;
            out.csv("d.csv", &s.d)?;
            out.csv("phi.csv", &s.phi)?;
        }
    }
    Ok(())
}

pub fn sensitivity(cfg: &RunConfig, ell: Option<&Path>, dell: Option<&Path>, out: &mut Outputs) -> CliResult<()> {
    let ell = read_control(cfg, ell, "--ell")?;
    let dell = read_control(cfg, dell, "--dell")?;
    let grid = cfg.grid()?;
    let obj = cfg.objective()?;
    let mut summary = String::new();
    match cfg.instance()? {
        Instance::Single(p) => {
            let s = forward_single(&p, &ell, &grid)?;
            let sens = sensitivity_single(&p, &s, &ell, &dell)?;
            let dj = directional_derivative_single(&p, &obj, &s, &ell, &dell)?;
            out.csv("dq.csv", &sens.dq)?;
            let _ = writeln!(summary, "directional_derivative = {dj:?}");
            let _ = writeln!(summary, "biactive_count = {}", sens.biactive_counts.iter().sum::<usize>());
        }
        Instance::Two(p) => {
            let s = forward_two(&p, &ell, &grid)?;
            let sens = sensitivity_two(&p, &s, &ell, &dell)?;
            let partials = eval_partials(&obj, &p.objective_metric(&grid), &s, &ell)?;
            let dj = directional_derivative(&p, &s, &ell, &partials, &dell)?;
            out.csv("dd.csv", &sens.dd)?;
            out.csv("dphi.csv", &sens.dphi)?;
            let _ = writeln!(summary, "directional_derivative = {dj:?}");
            let _ = writeln!(summary, "biactive_count = {}", s.biactive_total());
        }
    }
    out.text("sensitivity.txt", &summary)
}

pub fn adjoint(cfg: &RunConfig, ell: Option<&Path>, out: &mut Outputs) -> CliResult<()> {
    let ell = read_control(cfg, ell, "--ell")?;
    let grid = cfg.grid()?;
    let obj = cfg.objective()?;
    let report = match cfg.instance()? {
        Instance::Single(p) => {
            let s = forward_single(&p, &ell, &grid)?;
            let adj = adjoint_single(&p, &s, &ell, &obj)?;
            out.csv("xi.csv", &adj.xi)?;
            out.csv("lambda.csv", &adj.lambda)?;
            out.csv("gradient.csv", &adj.gradient)?;
            let j = eval_objective(&obj, &p.objective_metric(&grid), &s, &ell)?;
            let r = stationarity_residual_single(&p, &s, &ell, &adj.xi, &adj.lambda, &obj)?;
            format!("J = {j:?}\n{r}")
        }
        Instance::Two(p) => {
            let s = forward_two(&p, &ell, &grid)?;
            let b = adjoint_two(&p, &s, &ell, &obj)?;
            out.csv("xi.csv", &b.xi)?;
            out.csv("w.csv", &b.w)?;
            out.csv("lambda.csv", &b.lambda)?;
            out.csv("gradient.csv", &b.gradient)?;
            let j = eval_objective(&obj, &p.objective_metric(&grid), &s, &ell)?;
            let r = stationarity_residual_two(&p, &s, &ell, &b, &obj)?;
            format!("J = {j:?}\n{r}")
        }
    };
    out.text("report.txt", &report)
}

pub fn optimize(cfg: &RunConfig, ell0: Option<&Path>, out: &mut Outputs) -> CliResult<()> {
    let grid = cfg.grid()?;
    let obj = cfg.objective()?;
    let ell0 = match ell0 {
        Some(_) => read_control(cfg, ell0, "--ell")?,
        None => obj.ell_target.clone(),
    };
    let opts = cfg.descent_options();
    let result = match cfg.instance()? {
        Instance::Single(p) => {
            let dict = cfg.dictionary(p.mass())?;
            descend_single_field(&p, &obj, &ell0, &grid, &opts, &dict)
        }
        Instance::Two(p) => descend_two_field(&p, &obj, &ell0, &grid, &opts),
    };
    let res = match result {
        Ok(r) => r,
        Err(EviError::Stagnation {
            iteration,
            shrinks,
            last_iterate,
        }) => {
            out.csv("ell_last.csv", &last_iterate)?;
            return Err(EviError::Stagnation {
                iteration,
                shrinks,
                last_iterate,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    out.csv("ell_star.csv", &res.ell_star)?;
    let mut hist = String::from("iteration,J\n");
    for (i, j) in res.j_history.iter().enumerate() {
        let _ = writeln!(hist, "{i},{j:?}");
    }
    out.text("j_history.csv", &hist)?;
    out.text("report.txt", &format!("iterations = {}\n{}", res.iterations, res.report))
}

/// Runs the verification suite; failing checks are collected into
/// [`CliError::Verify`].
pub fn verify(cfg: &RunConfig, out: Option<&mut Outputs>) -> CliResult<String> {
    let outcomes = verify::run_all(cfg.seed);
    let mut body = String::new();
    for o in &outcomes {
        let _ = writeln!(body, "{o}");
    }
    if let Some(out) = out {
        out.text("verify.txt", &body)?;
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.to_string()).collect();
    if failed.is_empty() {
        Ok(body)
    } else {
        print!("{body}");
        Err(CliError::Verify(failed))
    }
}
