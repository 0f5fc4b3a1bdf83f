//! Reproducible runs: data synthesis, the posterior density on a grid, the
//! QMC convergence study, the FEM convergence study and point-set export.
//! Every file written here starts with `#` provenance lines.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{RunConfig, SensorSpec, VERSION};

use crate::bayes::{self, ObservationSetup, Posterior, PosteriorEstimate};
use crate::error::{Error, Result};
use crate::fem::manufactured::{convergence_study, FemRow};
use crate::fem::{ForwardModel, P2Space};
use crate::fem::solver::SolverOptions;
use crate::field::ParamVector;
use crate::qmc::cbc::{walsh_kernel_bank, heuristic_cbc, CbcOptions};
use crate::qmc::io::{format_generating_vector, load_generating_vector, sha256_hex};
use crate::qmc::{generate_points, shift_to_prior, LatticeRule, PointSet};

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Empirical orders `log(e_{i-1}/e_i) / log(N_i/N_{i-1})`; `None` for the first entry.
pub fn eoc(ns: &[usize], errs: &[f64]) -> Vec<Option<f64>> {
    (0..errs.len().min(ns.len()))
        .map(|i| {
            (i > 0).then(|| (errs[i - 1] / errs[i]).ln() / (ns[i] as f64 / ns[i - 1] as f64).ln())
        })
        .collect()
}

/// The truth parameter for synthetic data, uniform on the prior box.
///
/// Drawn from `ChaCha8Rng::seed_from_u64(seed)`; the noise then uses `seed + 1`.
pub fn truth(cfg: &RunConfig) -> Result<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    ParamVector::new((0..cfg.s).map(|_| rng.random_range(-0.5..0.5)).collect())
}

fn model(cfg: &RunConfig, n: usize) -> Result<ForwardModel> {
    Ok(ForwardModel::new(
        P2Space::uniform(n)?,
        cfg.field()?,
        cfg.force(),
        SolverOptions::default(),
    ))
}

/// Draws `y*`, solves on the data mesh, adds noise and writes the observation file.
pub fn synth(cfg: &RunConfig) -> Result<ObservationSetup> {
    cfg.validate()?;
    let y_star = truth(cfg)?;
    let data_model = model(cfg, cfg.data_mesh_n)?;
    let mut setup = bayes::synthesize_data(
        &y_star,
        cfg.sensors.points(),
        cfg.sigma,
        cfg.seed.wrapping_add(1),
        &data_model,
    )?;
    setup.provenance.insert("version".into(), VERSION.into());
    setup.provenance.insert("config_sha256".into(), cfg.hash());
    setup.provenance.insert("noise_seed".into(), setup.provenance["seed"].clone());
    setup.provenance.insert("seed".into(), cfg.seed.to_string());
    write_file(&cfg.observations_path(), &setup.to_csv())?;
    Ok(setup)
}

/// Reads the observation file and checks it matches the run's `s` and `sigma`.
pub fn load_observations(cfg: &RunConfig) -> Result<ObservationSetup> {
    let path = cfg.observations_path();
    let setup = ObservationSetup::read_csv(&path)?;
    if let Some(s) = setup.provenance.get("s") {
        if s != &cfg.s.to_string() {
            return Err(Error::Config(format!(
                "{} was synthesized with s = {s}, run has s = {}",
                path.display(),
                cfg.s
            )));
        }
    }
    if setup.sigma() != cfg.sigma {
        return Err(Error::Config(format!(
            "{} has noise variance {}, run has sigma = {}",
            path.display(),
            setup.sigma(),
            cfg.sigma
        )));
    }
    Ok(setup)
}

fn posterior(cfg: &RunConfig, setup: ObservationSetup) -> Result<Posterior> {
    Ok(Posterior::new(model(cfg, cfg.mesh_n)?, setup))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub g: usize,
    /// Cell-centred axis values `-1/2 + (i + 1/2)/G`.
    pub axis: Vec<f64>,
    /// `theta[i * g + j]` at `(axis[i], axis[j])`.
    pub theta: Vec<f64>,
}

impl DensityGrid {
    pub fn argmax(&self) -> (usize, usize) {
        let k = (0..self.theta.len())
            .fold(0, |best, k| if self.theta[k] > self.theta[best] { k } else { best });
        (k / self.g, k % self.g)
    }
}

/// Un-normalised posterior density `Theta` on a `G x G` grid (requires `s = 2`).
/// Writes `density.csv` and the gnuplot script `density.gp`.
pub fn density(cfg: &RunConfig) -> Result<DensityGrid> {
    cfg.validate()?;
    if cfg.s != 2 {
        return Err(Error::Config(format!("density needs s = 2, got s = {}", cfg.s)));
    }
    let g = cfg.grid;
    if g < 2 {
        return Err(Error::Config(format!("grid resolution must be at least 2, got {g}")));
    }
    let setup = load_observations(cfg)?;
    let post = posterior(cfg, setup)?;
    let axis: Vec<f64> = (0..g).map(|i| -0.5 + (i as f64 + 0.5) / g as f64).collect();
    let theta = (0..g * g)
        .into_par_iter()
        .map(|k| post.theta(&ParamVector::new(vec![axis[k / g], axis[k % g]])?))
        .collect::<Result<Vec<f64>>>()?;
    let grid = DensityGrid { g, axis, theta };

    let mut csv = cfg.provenance_header(&[("grid", g.to_string())]);
    csv.push_str("y1,y2,theta\n");
    for (k, t) in grid.theta.iter().enumerate() {
        let _ = writeln!(csv, "{:?},{:?},{t:?}", grid.axis[k / g], grid.axis[k % g]);
    }
    write_file(&cfg.output_dir.join("density.csv"), &csv)?;
    let mut gp = cfg.provenance_header(&[]);
    gp.push_str(
        "set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set key autotitle columnhead\n\
         set xlabel 'y_1'\n\
         set ylabel 'y_2'\n\
         set xrange [-0.5:0.5]\n\
         set yrange [-0.5:0.5]\n\
         set size square\n\
         set title 'Un-normalised posterior density'\n\
         plot 'density.csv' using 1:2:3 with image notitle\n",
    );
    write_file(&cfg.output_dir.join("density.gp"), &gp)?;
    Ok(grid)
}

fn vector_file(cfg: &RunConfig, dir: &Path, m: usize) -> PathBuf {
    dir.join(format!("gv_b{}_m{m}_a{}_s{}.txt", cfg.b, cfg.alpha, cfg.s))
}

/// The rule for `m`: loaded from the generating-vector directory when one is
/// configured, otherwise built by the heuristic CBC search.
pub fn rule_for(cfg: &RunConfig, m: usize) -> Result<LatticeRule> {
    match &cfg.generating_vector {
        Some(dir) => {
            let path = vector_file(cfg, dir, m);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "missing generating vector for m = {m}: {}",
                    path.display()
                )));
            }
            let rule = load_generating_vector(&path)?;
            if (rule.base(), rule.m(), rule.alpha(), rule.s()) != (cfg.b, m, cfg.alpha, cfg.s) {
                return Err(Error::Config(format!(
                    "{} holds {}, expected b = {}, m = {m}, alpha = {}, s = {}",
                    path.display(),
                    rule.describe(),
                    cfg.b,
                    cfg.alpha,
                    cfg.s
                )));
            }
            Ok(rule)
        }
        None => heuristic_cbc(
            cfg.b,
            m,
            cfg.s,
            cfg.alpha,
            &walsh_kernel_bank(cfg.s),
            &CbcOptions {
                max_candidates: cfg.cbc_candidates,
                ..CbcOptions::default()
            },
        ),
    }
}

/// Runs the CBC search for every study m and the reference m and saves the
/// vectors (into `generating_vector` if set, else the output directory).
pub fn save_vectors(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = cfg.generating_vector.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let search = RunConfig {
        generating_vector: None,
        ..cfg.clone()
    };
    let mut paths = Vec::new();
    for &m in cfg.m_list.iter().chain([&cfg.reference_m]) {
        let rule = rule_for(&search, m)?;
        let path = vector_file(cfg, &dir, m);
        let text = cfg.provenance_header(&[("rule", rule.describe())]) + &format_generating_vector(&rule);
        write_file(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes the unshifted points of every study rule as `points_m<m>.csv`
/// with columns `u1..us`.
pub fn gen_points(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut paths = Vec::new();
    for &m in &cfg.m_list {
        let rule = rule_for(cfg, m)?;
        let pts = generate_points(&rule);
        let mut extra = vec![("rule", pts.provenance.clone())];
        if let Some(h) = &rule.source_hash {
            extra.push(("vector_sha256", h.clone()));
        }
        let path = cfg.output_dir.join(format!("points_m{m}.csv"));
        let header: Vec<String> = (1..=cfg.s).map(|j| format!("u{j}")).collect();
        let text = cfg.provenance_header(&extra) + &header.join(",") + "\n" + &pts.to_csv();
        write_file(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// One row of the QMC convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub z_prime: f64,
    pub z: f64,
    pub ratio: f64,
    pub err: f64,
    pub eoc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference: PosteriorEstimate,
}

impl ConvergenceTable {
    fn to_csv(&self, cfg: &RunConfig, obs_hash: &str) -> String {
        let r = &self.reference;
        let mut out = cfg.provenance_header(&[
            ("observations_sha256", obs_hash.to_string()),
            ("reference_n", r.n_points.to_string()),
            ("reference_ratio", format!("{:?}", r.ratio)),
            ("reference_z", format!("{:?}", r.z)),
            ("reference_z_prime", format!("{:?}", r.z_prime)),
        ]);
        out.push_str("N,z_prime,z,ratio,err,eoc\n");
        for row in &self.rows {
            let eoc = row.eoc.map_or(String::new(), |e| format!("{e:?}"));
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{eoc}",
                row.n, row.z_prime, row.z, row.ratio, row.err
            );
        }
        out
    }
}

fn prior_points(cfg: &RunConfig, m: usize) -> Result<PointSet> {
    Ok(shift_to_prior(&generate_points(&rule_for(cfg, m)?)))
}

/// Estimates `Z'/Z` for every study m and the reference m on the same mesh and
/// tabulates `|ratio_N - ratio_ref|` with its EOC. Writes `convergence.csv`.
pub fn converge(cfg: &RunConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let obs_path = cfg.observations_path();
    let obs_text = std::fs::read_to_string(&obs_path).map_err(|e| Error::io(&obs_path, e))?;
    let setup = load_observations(cfg)?;
    let post = posterior(cfg, setup)?;
    let reference = bayes::estimate(&prior_points(cfg, cfg.reference_m)?, &post)?;
    let mut rows = Vec::with_capacity(cfg.m_list.len());
    for &m in &cfg.m_list {
        let est = bayes::estimate(&prior_points(cfg, m)?, &post)?;
        rows.push(ConvergenceRow {
            n: est.n_points,
            z_prime: est.z_prime,
            z: est.z,
            ratio: est.ratio,
            err: (est.ratio - reference.ratio).abs(),
            eoc: None,
        });
    }
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.err).collect();
    for (row, e) in rows.iter_mut().zip(eoc(&ns, &errs)) {
        row.eoc = e;
    }
    let table = ConvergenceTable { rows, reference };
    write_file(
        &cfg.output_dir.join("convergence.csv"),
        &table.to_csv(cfg, &sha256_hex(obs_text.as_bytes())),
    )?;
    Ok(table)
}

/// Manufactured-solution study over `fem_ns`. Writes `fem_convergence.csv`.
pub fn fem_converge(cfg: &RunConfig) -> Result<Vec<FemRow>> {
    if !(cfg.nu > 0.0 && cfg.nu < 0.5) {
        return Err(Error::Config(format!("Poisson ratio {} outside (0, 1/2)", cfg.nu)));
    }
    let rows = convergence_study(&cfg.fem_ns, cfg.nu)?;
    let opt = |e: Option<f64>| e.map_or(String::new(), |e| format!("{e:?}"));
    let mut out = cfg.provenance_header(&[]);
    out.push_str("n,h,l2_error,l2_eoc,qoi_error,qoi_eoc\n");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{},{:?},{}",
            r.n,
            r.h,
            r.l2_error,
            opt(r.l2_eoc),
            r.qoi_error,
            opt(r.qoi_eoc)
        );
    }
    write_file(&cfg.output_dir.join("fem_convergence.csv"), &out)?;
    Ok(rows)
}
