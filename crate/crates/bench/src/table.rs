//! Scalability tables: iteration counts of the accelerated method over a
//! grid of (subdomain-size ratio, subdomain count) pairs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, LevelChoice, ProblemChoice, SolverChoice};
use crate::experiment::{iterations_to_tol, run_experiment};
use crate::{Error, Result};

/// One table entry; `iters` is `None` when the budget ran out first.
#[derive(Debug, Clone)]
pub struct TableCell {
    pub problem: ProblemChoice,
    /// Cells per subdomain side (the ratio of subdomain to mesh size).
    pub ratio: usize,
    /// Subdomains per side.
    pub coarse: usize,
    /// Fine cells per side.
    pub cells: usize,
    pub level: LevelChoice,
    pub overlap: usize,
    pub tau: f64,
    pub iters: Option<usize>,
}

/// Settings of a table run; the decomposition defaults to two-level with an
/// overlap of two fine layers, recorded in every emitted row.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub problem: ProblemChoice,
    pub s: f64,
    pub ratios: Vec<usize>,
    pub coarse_counts: Vec<usize>,
    pub overlap: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub reference_dir: PathBuf,
}

fn cell_config(spec: &TableSpec, ratio: usize, coarse: usize) -> Result<ExperimentConfig> {
    let cells = ratio
        .checked_mul(coarse)
        .ok_or_else(|| Error::Config("table cell size overflows".into()))?;
    let ref_name = match spec.problem {
        ProblemChoice::SLaplacian => format!("slaplacian_s{}_n{}.ref", spec.s, cells),
        ProblemChoice::Poisson => format!("poisson_n{cells}.ref"),
        ProblemChoice::Obstacle => format!("obstacle_n{cells}.ref"),
        ProblemChoice::DualTv => format!("dualtv_n{cells}.ref"),
    };
    let level = if spec.problem == ProblemChoice::DualTv {
        LevelChoice::One
    } else {
        LevelChoice::Two
    };
    let cfg = ExperimentConfig {
        problem: spec.problem,
        s: spec.s,
        cells,
        subdomains: coarse,
        overlap: spec.overlap,
        level,
        solver: SolverChoice::AccelAsm,
        tau: None,
        max_iter: spec.max_iter,
        tol: Some(spec.tol),
        reference_path: spec.reference_dir.join(ref_name),
        output_path: None,
        seed: 0,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every (ratio, coarse) cell of the grid; independent cells run
/// concurrently, reference computations are deduplicated by fingerprint.
pub fn table_scalability(spec: &TableSpec) -> Result<Vec<TableCell>> {
    let mut pairs = Vec::new();
    for &ratio in &spec.ratios {
        for &coarse in &spec.coarse_counts {
            pairs.push((ratio, coarse));
        }
    }
    let cells: Vec<Result<TableCell>> = pairs
        .par_iter()
        .map(|&(ratio, coarse)| {
            let cfg = cell_config(spec, ratio, coarse)?;
            let trace = run_experiment(&cfg)?;
            Ok(TableCell {
                problem: spec.problem,
                ratio,
                coarse,
                cells: cfg.cells,
                level: cfg.level,
                overlap: cfg.overlap,
                tau: cfg.tau.unwrap_or(match cfg.level {
                    LevelChoice::One => 0.25,
                    LevelChoice::Two => 0.2,
                }),
                iters: iterations_to_tol(&trace, spec.tol),
            })
        })
        .collect();
    cells.into_iter().collect()
}

/// Aligned text rendering, one row per cell.
pub fn render_table(cells: &[TableCell]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>10} {:>6} {:>6} {:>6} {:>6} {:>8} {:>6} {:>8}\n",
        "problem", "H/h", "1/H", "1/h", "level", "overlap", "tau", "iters"
    ));
    for c in cells {
        out.push_str(&format!(
            "{:>10} {:>6} {:>6} {:>6} {:>6} {:>8} {:>6} {:>8}\n",
            c.problem.as_str(),
            c.ratio,
            c.coarse,
            c.cells,
            c.level.as_str(),
            c.overlap,
            c.tau,
            c.iters.map_or("-".to_string(), |n| n.to_string()),
        ));
    }
    out
}

/// CSV emission with the decomposition choices recorded per row.
pub fn write_table_csv(path: &Path, cells: &[TableCell]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = String::new();
    out.push_str("problem,ratio,coarse_n,n,level,overlap,tau,iters\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.problem.as_str(),
            c.ratio,
            c.coarse,
            c.cells,
            c.level.as_str(),
            c.overlap,
            c.tau,
            c.iters.map_or(String::new(), |n| n.to_string()),
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_reduces_to_one_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TableSpec {
            problem: ProblemChoice::Poisson,
            s: 2.0,
            ratios: vec![2],
            coarse_counts: vec![2],
            overlap: 1,
            tol: 1e-8,
            max_iter: 200,
            reference_dir: dir.path().to_path_buf(),
        };
        let cells = table_scalability(&spec).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].cells, 4);
        assert!(cells[0].iters.is_some());
        let text = render_table(&cells);
        assert!(text.contains("poisson"));
        let csv = dir.path().join("t.csv");
        write_table_csv(&csv, &cells).unwrap();
        let body = std::fs::read_to_string(csv).unwrap();
        assert!(body.starts_with("problem,ratio,coarse_n,n,level,overlap,tau,iters\n"));
    }
}
