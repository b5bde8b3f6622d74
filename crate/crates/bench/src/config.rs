//! Experiment configuration: flat key=value files with command-line
//! overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use schwarz_core::mesh::MeshParams;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemChoice {
    SLaplacian,
    Poisson,
    Obstacle,
    DualTv,
}

impl ProblemChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemChoice::SLaplacian => "slaplacian",
            ProblemChoice::Poisson => "poisson",
            ProblemChoice::Obstacle => "obstacle",
            ProblemChoice::DualTv => "dualtv",
        }
    }
}

impl FromStr for ProblemChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slaplacian" => Ok(ProblemChoice::SLaplacian),
            "poisson" => Ok(ProblemChoice::Poisson),
            "obstacle" => Ok(ProblemChoice::Obstacle),
            "dualtv" => Ok(ProblemChoice::DualTv),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Asm,
    AccelAsm,
    Fista,
    FistaRestart,
    Fb,
    Pcg,
}

impl SolverChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverChoice::Asm => "asm",
            SolverChoice::AccelAsm => "accel_asm",
            SolverChoice::Fista => "fista",
            SolverChoice::FistaRestart => "fista_restart",
            SolverChoice::Fb => "fb",
            SolverChoice::Pcg => "pcg",
        }
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asm" => Ok(SolverChoice::Asm),
            "accel_asm" => Ok(SolverChoice::AccelAsm),
            "fista" => Ok(SolverChoice::Fista),
            "fista_restart" => Ok(SolverChoice::FistaRestart),
            "fb" => Ok(SolverChoice::Fb),
            "pcg" => Ok(SolverChoice::Pcg),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelChoice {
    One,
    Two,
}

impl LevelChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            LevelChoice::One => "one",
            LevelChoice::Two => "two",
        }
    }
}

impl FromStr for LevelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(LevelChoice::One),
            "two" => Ok(LevelChoice::Two),
            other => Err(Error::Config(format!("unknown level '{other}'"))),
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemChoice,
    /// Exponent of the s-Laplacian energy (ignored by the other problems).
    pub s: f64,
    /// Fine cells per side (h = 1/cells).
    pub cells: usize,
    /// Subdomains per side (H = 1/subdomains).
    pub subdomains: usize,
    /// Overlap width in fine-cell layers.
    pub overlap: usize,
    pub level: LevelChoice,
    pub solver: SolverChoice,
    /// Outer step override; also the fixed step of full-space solvers.
    pub tau: Option<f64>,
    pub max_iter: usize,
    /// Energy-error stop; `None` runs the full iteration budget.
    pub tol: Option<f64>,
    pub reference_path: PathBuf,
    pub output_path: Option<PathBuf>,
    /// Reserved for future stochastic solvers; deterministic ones ignore it.
    pub seed: u64,
}

impl ExperimentConfig {
    /// The energy exponent after normalizing the Poisson alias.
    pub fn effective_s(&self) -> f64 {
        match self.problem {
            ProblemChoice::Poisson => 2.0,
            _ => self.s,
        }
    }

    pub fn mesh_params(&self) -> Result<MeshParams> {
        Ok(MeshParams::new(self.cells, self.subdomains, self.overlap)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh_params()?;
        if self.solver == SolverChoice::Pcg && self.effective_s() != 2.0 {
            return Err(Error::Config("pcg requires the linear instance (s = 2)".into()));
        }
        if self.solver == SolverChoice::Pcg
            && !matches!(self.problem, ProblemChoice::Poisson | ProblemChoice::SLaplacian)
        {
            return Err(Error::Config("pcg requires the Poisson problem".into()));
        }
        if self.problem == ProblemChoice::DualTv && self.level == LevelChoice::Two {
            return Err(Error::Config("the dual-TV problem supports one-level only".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("tau {t} outside (0, 1]")));
            }
        }
        if self.tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("tol must be positive (omit it to disable)".into()));
        }
        Ok(())
    }
}

/// Partial configuration collected from a file or command-line flags;
/// later overlays win field-by-field.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverlay {
    pub problem: Option<String>,
    pub s: Option<f64>,
    pub cells: Option<usize>,
    pub subdomains: Option<usize>,
    pub overlap: Option<usize>,
    pub level: Option<String>,
    pub solver: Option<String>,
    pub tau: Option<f64>,
    pub max_iter: Option<usize>,
    /// A zero disables the energy stop.
    pub tol: Option<f64>,
    pub reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ConfigOverlay {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut overlay = ConfigOverlay::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                )));
            };
            overlay.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(overlay)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse {key}='{value}'")))
        }
        match key {
            "problem" => self.problem = Some(value.to_string()),
            "s" => self.s = Some(parse(key, value)?),
            "n" => self.cells = Some(parse(key, value)?),
            "N" => self.subdomains = Some(parse(key, value)?),
            "overlap" => self.overlap = Some(parse(key, value)?),
            "level" => self.level = Some(value.to_string()),
            "solver" => self.solver = Some(value.to_string()),
            "tau" => self.tau = Some(parse(key, value)?),
            "max_iter" => self.max_iter = Some(parse(key, value)?),
            "tol" => self.tol = Some(parse(key, value)?),
            "ref" => self.reference = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Field-by-field merge; entries of `over` take precedence.
    pub fn merged(self, over: ConfigOverlay) -> ConfigOverlay {
        ConfigOverlay {
            problem: over.problem.or(self.problem),
            s: over.s.or(self.s),
            cells: over.cells.or(self.cells),
            subdomains: over.subdomains.or(self.subdomains),
            overlap: over.overlap.or(self.overlap),
            level: over.level.or(self.level),
            solver: over.solver.or(self.solver),
            tau: over.tau.or(self.tau),
            max_iter: over.max_iter.or(self.max_iter),
            tol: over.tol.or(self.tol),
            reference: over.reference.or(self.reference),
            out: over.out.or(self.out),
            seed: over.seed.or(self.seed),
        }
    }

    pub fn build(self) -> Result<ExperimentConfig> {
        let problem: ProblemChoice = self
            .problem
            .ok_or_else(|| Error::Config("missing 'problem'".into()))?
            .parse()?;
        let cells = self.cells.ok_or_else(|| Error::Config("missing 'n'".into()))?;
        let s = self.s.unwrap_or(4.0);
        let subdomains = self.subdomains.unwrap_or(2);
        let overlap = self.overlap.unwrap_or(1);
        let level: LevelChoice = match self.level {
            Some(l) => l.parse()?,
            None => LevelChoice::One,
        };
        let solver: SolverChoice = match self.solver {
            Some(v) => v.parse()?,
            None => Ok::<_, Error>(SolverChoice::AccelAsm)?,
        };
        // tol = 0 disables the energy stop; unset means the default 1e-8
        let tol = match self.tol {
            None => Some(1e-8),
            Some(t) => (t != 0.0).then_some(t),
        };
        let reference_path = self.reference.unwrap_or_else(|| {
            let name = match problem {
                ProblemChoice::SLaplacian => format!("slaplacian_s{}_n{}.ref", s, cells),
                ProblemChoice::Poisson => format!("poisson_n{cells}.ref"),
                ProblemChoice::Obstacle => format!("obstacle_n{cells}.ref"),
                ProblemChoice::DualTv => format!("dualtv_n{cells}.ref"),
            };
            PathBuf::from("refs").join(name)
        });
        let cfg = ExperimentConfig {
            problem,
            s,
            cells,
            subdomains,
            overlap,
            level,
            solver,
            tau: self.tau,
            max_iter: self.max_iter.unwrap_or(1000),
            tol,
            reference_path,
            output_path: self.out,
            seed: self.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
