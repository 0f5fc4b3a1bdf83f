use std::path::Path;

use kl_elast_core::experiment::{self, RunConfig, SensorSpec};
use kl_elast_core::field::ParamVector;
use kl_elast_core::Error;
use tempfile::TempDir;

fn small(dir: &Path, s: usize) -> RunConfig {
    RunConfig {
        s,
        mesh_n: 4,
        data_mesh_n: 8,
        m_list: vec![4, 5],
        reference_m: 7,
        grid: 8,
        cbc_candidates: 16,
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn has_provenance(text: &str, cfg: &RunConfig) {
    assert!(text.contains(&format!("# version = {}", experiment::VERSION)), "{text}");
    assert!(text.contains(&format!("# config_sha256 = {}", cfg.hash())), "{text}");
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let ca = small(a.path(), 3);
    let cb = small(b.path(), 3);
    experiment::synth(&ca).unwrap();
    experiment::synth(&cb).unwrap();
    let ta = read(&ca.observations_path());
    assert_eq!(ta, read(&cb.observations_path()));
    has_provenance(&ta, &ca);
    assert!(ta.contains("# noise_seed = 43"));

    let cc = RunConfig { seed: 5, ..small(a.path(), 3) };
    experiment::synth(&cc).unwrap();
    assert_ne!(ta, read(&cc.observations_path()));
}

#[test]
fn default_sensors_give_twenty_values() {
    let dir = TempDir::new().unwrap();
    let setup = experiment::synth(&small(dir.path(), 2)).unwrap();
    assert_eq!(setup.k(), 10);
    assert_eq!(setup.delta().len(), 20);
}

#[test]
fn noise_has_the_configured_size() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        sigma: 0.0,
        ..small(dir.path(), 2)
    };
    let noiseless = experiment::synth(&cfg).unwrap();
    let noisy = experiment::synth(&RunConfig { sigma: 1e-4, ..cfg.clone() }).unwrap();
    let diff: f64 = noiseless
        .delta()
        .iter()
        .zip(noisy.delta())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    // 20 draws of standard deviation 1e-2
    assert!(diff > 1e-3 && diff < 0.2, "{diff}");
}

#[test]
fn observation_variance_must_match_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 2);
    experiment::synth(&cfg).unwrap();
    let other = RunConfig { sigma: 0.2, ..cfg.clone() };
    assert!(matches!(experiment::load_observations(&other), Err(Error::Config(_))));
    let wider = RunConfig { s: 3, ..cfg };
    assert!(matches!(experiment::load_observations(&wider), Err(Error::Config(_))));
}

#[test]
fn density_is_in_the_unit_interval_and_written() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 2);
    experiment::synth(&cfg).unwrap();
    let grid = experiment::density(&cfg).unwrap();
    assert_eq!(grid.theta.len(), 64);
    assert!(grid.theta.iter().all(|&t| t > 0.0 && t <= 1.0));
    assert!((grid.axis[0] + 0.5 - 1.0 / 16.0).abs() < 1e-15);
    let csv = read(&dir.path().join("density.csv"));
    has_provenance(&csv, &cfg);
    assert!(csv.contains("\ny1,y2,theta\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 65);
    has_provenance(&read(&dir.path().join("density.gp")), &cfg);
}

#[test]
fn density_peaks_at_the_truth_for_accurate_data() {
    let dir = TempDir::new().unwrap();
    // the default sensors sit on x1 = 1/2 and barely see y2, so spread them out
    let sensors = vec![[0.25, 0.3], [0.7, 0.2], [0.3, 0.8], [0.8, 0.65], [0.55, 0.45]];
    let cfg = RunConfig {
        sensors: SensorSpec::Points(sensors),
        mesh_n: 8,
        data_mesh_n: 8,
        sigma: 1e-8,
        grid: 20,
        ..small(dir.path(), 2)
    };
    experiment::synth(&cfg).unwrap();
    let grid = experiment::density(&cfg).unwrap();
    let (i, j) = grid.argmax();
    let y = experiment::truth(&cfg).unwrap();
    let h = 1.0 / cfg.grid as f64;
    assert!((grid.axis[i] - y.values()[0]).abs() <= h, "{:?} vs {:?}", (grid.axis[i], grid.axis[j]), y);
    assert!((grid.axis[j] - y.values()[1]).abs() <= h, "{:?} vs {:?}", (grid.axis[i], grid.axis[j]), y);
}

#[test]
fn density_rejects_bad_settings() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3);
    assert!(matches!(experiment::density(&cfg), Err(Error::Config(_))));
    let coarse = RunConfig { grid: 1, ..small(dir.path(), 2) };
    assert!(matches!(experiment::density(&coarse), Err(Error::Config(_))));
}

#[test]
fn saved_vectors_reload_to_the_same_rules() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3);
    let paths = experiment::save_vectors(&cfg).unwrap();
    assert_eq!(paths.len(), 3);
    has_provenance(&read(&paths[0]), &cfg);
    let loaded = RunConfig {
        generating_vector: Some(dir.path().to_path_buf()),
        ..cfg.clone()
    };
    for m in [4, 5, 7] {
        let a = experiment::rule_for(&cfg, m).unwrap();
        let b = experiment::rule_for(&loaded, m).unwrap();
        assert_eq!(a.generators(), b.generators());
        assert_eq!(a.modulus(), b.modulus());
    }
}

#[test]
fn converge_needs_every_saved_vector() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 2);
    experiment::synth(&cfg).unwrap();
    let paths = experiment::save_vectors(&cfg).unwrap();
    std::fs::remove_file(paths.last().unwrap()).unwrap();
    let loaded = RunConfig {
        generating_vector: Some(dir.path().to_path_buf()),
        ..cfg
    };
    match experiment::converge(&loaded) {
        Err(Error::Config(msg)) => assert!(msg.contains("m = 7"), "{msg}"),
        other => panic!("expected a missing-vector error, got {other:?}"),
    }
}

#[test]
fn convergence_table_against_the_reference() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 2);
    experiment::synth(&cfg).unwrap();
    let table = experiment::converge(&cfg).unwrap();
    assert_eq!(table.reference.n_points, 128);
    assert_eq!(table.rows.iter().map(|r| r.n).collect::<Vec<_>>(), [16, 32]);
    for r in &table.rows {
        assert_eq!(r.ratio, r.z_prime / r.z);
        assert!(r.z > 0.0 && r.z <= 1.0);
        assert_eq!(r.err, (r.ratio - table.reference.ratio).abs());
    }
    assert_eq!(table.rows[0].eoc, None);
    let csv = read(&dir.path().join("convergence.csv"));
    has_provenance(&csv, &cfg);
    assert!(csv.contains("# reference_n = 128"));
    assert!(csv.contains("# observations_sha256 = "));
    assert!(csv.contains("\nN,z_prime,z,ratio,err,eoc\n"));
}

#[test]
fn point_files_hold_every_point() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 2);
    let paths = experiment::gen_points(&cfg).unwrap();
    assert_eq!(paths.len(), 2);
    let text = read(&paths[1]);
    has_provenance(&text, &cfg);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("u1,u2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 32);
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| (0.0..1.0).contains(x)));
    }
}

#[test]
fn fem_study_file() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        fem_ns: vec![4, 8],
        ..small(dir.path(), 2)
    };
    let rows = experiment::fem_converge(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].l2_error < rows[0].l2_error);
    let csv = read(&dir.path().join("fem_convergence.csv"));
    has_provenance(&csv, &cfg);
    assert!(csv.contains("\nn,h,l2_error,l2_eoc,qoi_error,qoi_eoc\n"));
}

#[test]
fn truth_is_a_valid_parameter() {
    let cfg = RunConfig::default();
    let y: ParamVector = experiment::truth(&cfg).unwrap();
    assert_eq!(y.len(), 64);
    assert!(y.values().iter().all(|v| (-0.5..0.5).contains(v)));
}
