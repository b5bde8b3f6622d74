//! Reference solutions: high-accuracy minimizers cached on disk, keyed by a
//! fingerprint of the problem so a stale file can never be silently reused.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use sha2::{Digest, Sha256};

use schwarz_core::linalg;
use schwarz_core::mesh::FeFunction;
use schwarz_core::problems::{energy_value, ProblemKind};
use schwarz_core::solvers::{run_fista, FistaVariant, LocalSolverConfig};

use crate::config::{ExperimentConfig, ProblemChoice};
use crate::experiment::{build_problem, initial_guess};
use crate::{Error, Result};

const MAGIC: &str = "asmref v1";
const REFERENCE_ITERS: usize = 100_000;

/// A cached high-accuracy solution with its provenance.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub fingerprint: String,
    pub generator: String,
    pub values: Vec<f64>,
    pub energy: f64,
}

/// Fingerprint of the full-space problem a reference solves. Decomposition
/// settings do not enter: a reference depends on the energy and mesh only.
pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    let key = match cfg.problem {
        ProblemChoice::SLaplacian | ProblemChoice::Poisson => {
            format!("slaplacian;s={:.17e};n={}", cfg.effective_s(), cfg.cells)
        }
        ProblemChoice::Obstacle => format!("obstacle;n={}", cfg.cells),
        ProblemChoice::DualTv => format!("dualtv;n={}", cfg.cells),
    };
    let mut hasher = Sha256::new();
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Computes a reference solution from scratch: a direct solve for the linear
/// instance, otherwise 1e5 accelerated-restart iterations on the full space.
pub fn compute_reference(cfg: &ExperimentConfig) -> Result<ReferenceSolution> {
    let p = build_problem(cfg)?;
    let (values, generator) = match p.kind() {
        ProblemKind::SLaplacian { s, load } if *s == 2.0 => {
            let a = linalg::assemble_stiffness(p.space().as_p1()?);
            let x = linalg::solve_spd(&a, load, 1e-14)?;
            (x, "direct".to_string())
        }
        _ => {
            let u0 = initial_guess(&p, cfg)?;
            let run_cfg = LocalSolverConfig {
                max_iters: REFERENCE_ITERS,
                // only an exact stall may stop the run early
                stop_tol: f64::MIN_POSITIVE,
                fixed_step: matches!(p.kind(), ProblemKind::DualTv { .. })
                    .then_some(schwarz_core::problems::DUAL_TV_STEP),
                ..Default::default()
            };
            let obj = schwarz_core::problems::FullObjective::new(&p);
            let out = run_fista(
                &obj,
                u0.into_values(),
                FistaVariant::Restart,
                &run_cfg,
                false,
                |_, _, _, _| true,
            )?;
            (out.u, "fista_restart_1e5".to_string())
        }
    };
    let u = FeFunction::from_values(p.space().clone(), values)?;
    let energy = energy_value(&p, &u)?.value();
    Ok(ReferenceSolution {
        fingerprint: fingerprint(cfg),
        generator,
        values: u.into_values(),
        energy,
    })
}

pub fn save_reference(path: &Path, r: &ReferenceSolution) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = String::with_capacity(32 * r.values.len() + 256);
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("fingerprint {}\n", r.fingerprint));
    out.push_str(&format!("generator {}\n", r.generator));
    out.push_str(&format!("dofs {}\n", r.values.len()));
    out.push_str(&format!("energy {:.16e}\n", r.energy));
    for v in &r.values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_reference(path: &Path) -> Result<ReferenceSolution> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::BadReference(format!("{}: {msg}", path.display()));
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing magic header"));
    }
    let field = |line: Option<&str>, name: &str| -> Result<String> {
        let line = line.ok_or_else(|| bad("truncated header"))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected '{name} ...'")))
    };
    let fingerprint = field(lines.next(), "fingerprint")?;
    let generator = field(lines.next(), "generator")?;
    let dofs: usize =
        field(lines.next(), "dofs")?.parse().map_err(|_| bad("bad dof count"))?;
    let energy: f64 =
        field(lines.next(), "energy")?.parse().map_err(|_| bad("bad energy"))?;
    let mut values = Vec::with_capacity(dofs);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| bad("bad value line"))?);
    }
    if values.len() != dofs {
        return Err(bad(&format!("expected {dofs} values, found {}", values.len())));
    }
    Ok(ReferenceSolution { fingerprint, generator, values, energy })
}

fn fingerprint_lock(fp: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let map = LOCKS.get_or_init(|| Mutex::new(HashMap::new()));
    map.lock().unwrap().entry(fp.to_string()).or_default().clone()
}

/// Loads the reference from the configured path, computing and persisting it
/// on a cache miss. Loading a file whose fingerprint does not match the
/// request is a hard error. Concurrent requests for the same fingerprint are
/// serialized so the computation runs once.
pub fn ensure_reference(cfg: &ExperimentConfig) -> Result<ReferenceSolution> {
    let expected = fingerprint(cfg);
    let lock = fingerprint_lock(&expected);
    let _guard = lock.lock().unwrap();
    let path = &cfg.reference_path;
    if path.exists() {
        let r = load_reference(path)?;
        if r.fingerprint != expected {
            return Err(Error::CacheMismatch { expected, found: r.fingerprint });
        }
        return Ok(r);
    }
    let r = compute_reference(cfg)?;
    save_reference(path, &r)?;
    Ok(r)
}
