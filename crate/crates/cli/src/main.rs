use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use kl_elast_core::experiment::{self, RunConfig};

fn key_help(key: &str) -> &'static str {
    match key {
        "s" => "number of KL terms (parameter dimension)",
        "mesh_n" => "cells per side of the inversion mesh",
        "data_mesh_n" => "cells per side of the mesh used to synthesize data",
        "b" => "prime base of the lattice rules",
        "m_list" => "comma-separated study exponents, N = b^m",
        "reference_m" => "exponent of the reference rule",
        "alpha" => "interlacing factor",
        "nu" => "Poisson ratio in (0, 1/2)",
        "sigma" => "noise variance",
        "seed" => "seed for the truth sample and the noise",
        "sensors" => "`default` or `x,y;x,y;...`",
        "family" => "KL basis family",
        "body_force" => "c0..c5 with f1 = c0 + c1 x1 + c2 x2, f2 = c3 + c4 x1 + c5 x2",
        "grid" => "density grid points per axis",
        "fem_ns" => "comma-separated mesh sizes for fem-converge",
        "cbc_candidates" => "candidates per component in the CBC search",
        "output_dir" => "directory for output files",
        "observations" => "observation file (default <output-dir>/observations.csv)",
        "generating_vector" => "directory of saved generating vectors to load",
        "workers" => "worker threads, 0 = all cores",
        _ => "",
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("kl-elast")
        .version(experiment::VERSION)
        .about("Bayesian inversion of a KL-parameterised Young's modulus with interlaced polynomial lattice rules")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("flat `key = value` file; flags override it"),
        )
        .arg(
            Arg::new("desk")
                .long("desk")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("small preset: s = 16, mesh n = 16, reference m = 13"),
        )
        .arg(
            Arg::new("print-config")
                .long("print-config")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("print the resolved configuration before running"),
        );
    for key in RunConfig::keys() {
        cmd = cmd.arg(
            Arg::new(key)
                .long(key.replace('_', "-"))
                .global(true)
                .value_name("VALUE")
                .help(key_help(key))
                .help_heading("Run configuration"),
        );
    }
    cmd.subcommands([
        Command::new("synth").about("draw y*, solve on the data mesh and write noisy observations"),
        Command::new("density").about("un-normalised posterior density on a G x G grid (s = 2)"),
        Command::new("converge").about("QMC estimates of Z'/Z against the reference rule"),
        Command::new("fem-converge").about("manufactured-solution convergence of the P2 solver"),
        Command::new("gen-points").about("export the points of every study rule"),
        Command::new("save-vector").about("search and save generating vectors for every m"),
    ])
}

fn resolve(matches: &ArgMatches) -> kl_elast_core::Result<RunConfig> {
    let mut cfg = if matches.get_flag("desk") {
        RunConfig::desk()
    } else {
        RunConfig::default()
    };
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for key in RunConfig::keys() {
        if let Some(v) = matches.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(name: &str, cfg: &RunConfig) -> kl_elast_core::Result<()> {
    match name {
        "synth" => {
            let setup = experiment::synth(cfg)?;
            println!(
                "wrote {} ({} sensors, sigma = {})",
                cfg.observations_path().display(),
                setup.k(),
                setup.sigma()
            );
            println!("y* = {:?}", experiment::truth(cfg)?.values());
        }
        "density" => {
            let grid = experiment::density(cfg)?;
            let (i, j) = grid.argmax();
            println!(
                "wrote {} and density.gp; argmax at ({}, {})",
                cfg.output_dir.join("density.csv").display(),
                grid.axis[i],
                grid.axis[j]
            );
        }
        "converge" => {
            let table = experiment::converge(cfg)?;
            println!(
                "reference N = {}: ratio = {:.10}",
                table.reference.n_points, table.reference.ratio
            );
            println!("{:>8} {:>16} {:>12} {:>8}", "N", "ratio", "err", "EOC");
            for r in &table.rows {
                let eoc = r.eoc.map_or(String::new(), |e| format!("{e:.4}"));
                println!("{:>8} {:>16.10} {:>12.4e} {:>8}", r.n, r.ratio, r.err, eoc);
            }
        }
        "fem-converge" => {
            println!("{:>4} {:>12} {:>8} {:>12} {:>8}", "n", "L2 error", "EOC", "QoI error", "EOC");
            let f = |e: Option<f64>| e.map_or(String::new(), |e| format!("{e:.3}"));
            for r in experiment::fem_converge(cfg)? {
                println!(
                    "{:>4} {:>12.4e} {:>8} {:>12.4e} {:>8}",
                    r.n,
                    r.l2_error,
                    f(r.l2_eoc),
                    r.qoi_error,
                    f(r.qoi_eoc)
                );
            }
        }
        "gen-points" => {
            for p in experiment::gen_points(cfg)? {
                println!("wrote {}", p.display());
            }
        }
        "save-vector" => {
            for p in experiment::save_vectors(cfg)? {
                println!("wrote {}", p.display());
            }
        }
        other => unreachable!("unknown subcommand {other}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = resolve(sub).and_then(|cfg| {
        if sub.get_flag("print-config") {
            print!("{}", cfg.to_text());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| kl_elast_core::Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| run(name, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
