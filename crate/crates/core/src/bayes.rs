//! Observation operator, least-squares misfit potential and the QMC ratio
//! estimator of the posterior expectation of a quantity of interest.
//!
//! With noise covariance `Gamma = sigma I` the likelihood weight is
//! `Theta(y) = exp(-|delta - O(u(y))|^2 / (2 sigma))` and the estimate is
//! `Z' / Z` with `Z = Q(Theta)`, `Z' = Q(Theta * phi(u))`, both from the
//! same point set and the same forward solves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{Displacement, ForwardModel};
use crate::field::ParamVector;
use crate::qmc::{self, PointSet};

/// `x_k = (0.5, 1e-3 + k (1e-1 - 1e-4))`, `k = 0..9`.
pub fn default_sensors() -> Vec<[f64; 2]> {
    (0..10)
        .map(|k| [0.5, 1e-3 + k as f64 * (1e-1 - 1e-4)])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSetup {
    sensors: Vec<[f64; 2]>,
    sigma: f64,
    delta: Vec<f64>,
    /// Free-form `key = value` provenance carried into output files.
    pub provenance: BTreeMap<String, String>,
}

impl ObservationSetup {
    /// `sigma` is the noise variance; zero is accepted for noiseless data but
    /// rejected by [`potential`].
    pub fn new(sensors: Vec<[f64; 2]>, sigma: f64, delta: Vec<f64>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        if let Some(p) = sensors
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]))
        {
            return Err(Error::Config(format!("sensor ({}, {}) outside the domain", p[0], p[1])));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise variance {sigma} must be finite and non-negative")));
        }
        if delta.len() != 2 * sensors.len() {
            return Err(Error::Config(format!(
                "data vector has length {}, expected 2K = {}",
                delta.len(),
                2 * sensors.len()
            )));
        }
        Ok(ObservationSetup {
            sensors,
            sigma,
            delta,
            provenance: BTreeMap::new(),
        })
    }

    pub fn sensors(&self) -> &[[f64; 2]] {
        &self.sensors
    }

    pub fn k(&self) -> usize {
        self.sensors.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Same sensors and data with another noise variance.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let mut s = Self::new(self.sensors.clone(), sigma, self.delta.clone())?;
        s.provenance = self.provenance.clone();
        Ok(s)
    }

    /// CSV with `#` provenance lines, then `x,y,u1,u2` per sensor.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sigma = {:?}", self.sigma);
        for (k, v) in &self.provenance {
            if k != "sigma" {
                let _ = writeln!(out, "# {k} = {v}");
            }
        }
        out.push_str("x,y,u1,u2\n");
        for (p, d) in self.sensors.iter().zip(self.delta.chunks(2)) {
            let _ = writeln!(out, "{:?},{:?},{:?},{:?}", p[0], p[1], d[0], d[1]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut provenance = BTreeMap::new();
        let mut sensors = Vec::new();
        let mut delta = Vec::new();
        let mut header_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.split_once('=') {
                    provenance.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line != "x,y,u1,u2" {
                    return Err(err(idx + 1, format!("expected header `x,y,u1,u2`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(idx + 1, e.to_string()))?;
            if vals.len() != 4 {
                return Err(err(idx + 1, format!("expected 4 columns, found {}", vals.len())));
            }
            sensors.push([vals[0], vals[1]]);
            delta.extend_from_slice(&vals[2..]);
        }
        let sigma = provenance
            .get("sigma")
            .ok_or_else(|| err(1, "missing `# sigma = ...` line".into()))?
            .parse::<f64>()
            .map_err(|e| err(1, format!("sigma: {e}")))?;
        let mut setup = Self::new(sensors, sigma, delta)?;
        provenance.remove("sigma");
        setup.provenance = provenance;
        Ok(setup)
    }
}

/// `(u1, u2)` at each sensor, in sensor order.
pub fn observe(u: &Displacement, sensors: &[[f64; 2]]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * sensors.len());
    for &x in sensors {
        out.extend(u.evaluate_at(x)?);
    }
    Ok(out)
}

/// `|delta - predicted|^2 / (2 sigma)`.
pub fn potential(predicted: &[f64], setup: &ObservationSetup) -> Result<f64> {
    if !(setup.sigma > 0.0) {
        return Err(Error::Config(format!(
            "noise variance must be positive to evaluate the potential, got {}",
            setup.sigma
        )));
    }
    if predicted.len() != setup.delta.len() {
        return Err(Error::Input(format!(
            "prediction has length {}, data has {}",
            predicted.len(),
            setup.delta.len()
        )));
    }
    let sq: f64 = setup
        .delta
        .iter()
        .zip(predicted)
        .map(|(d, p)| (d - p) * (d - p))
        .sum();
    Ok(0.5 * sq / setup.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qoi {
    /// `int (u1 + u2) dx`.
    Integral,
    Constant(f64),
}

impl Qoi {
    pub fn apply(&self, u: &Displacement) -> f64 {
        match self {
            Qoi::Integral => u.qoi_integral(),
            Qoi::Constant(c) => *c,
        }
    }
}

/// Forward model plus data: everything needed to evaluate `Theta` and `Psi_h`.
#[derive(Debug)]
pub struct Posterior {
    pub model: ForwardModel,
    pub setup: ObservationSetup,
    pub qoi: Qoi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub theta: f64,
    pub qoi: f64,
}

impl Sample {
    pub fn psi(&self) -> f64 {
        self.theta * self.qoi
    }
}

impl Posterior {
    pub fn new(model: ForwardModel, setup: ObservationSetup) -> Self {
        Posterior {
            model,
            setup,
            qoi: Qoi::Integral,
        }
    }

    /// One forward solve, shared by `Theta` and `phi`.
    pub fn evaluate(&self, y: &ParamVector) -> Result<Sample> {
        let u = self.model.forward(y)?;
        let pred = observe(&u, &self.setup.sensors)?;
        let phi = potential(&pred, &self.setup)?;
        Ok(Sample {
            theta: (-phi).exp(),
            qoi: self.qoi.apply(&u),
        })
    }

    pub fn theta(&self, y: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(y)?.theta)
    }

    pub fn psi_h(&self, y: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(y)?.psi())
    }

    /// Evaluates every point (in parallel) and returns the samples in index order.
    pub fn samples(&self, points: &PointSet) -> Result<Vec<Sample>> {
        if points.dim() != self.model.field().s() {
            return Err(Error::Input(format!(
                "points are {}-dimensional, field has s = {}",
                points.dim(),
                self.model.field().s()
            )));
        }
        (0..points.len())
            .into_par_iter()
            .map(|n| {
                ParamVector::new(points.point(n))
                    .and_then(|y| self.evaluate(&y))
                    .map_err(|e| Error::Sample {
                        index: n,
                        reason: e.to_string(),
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    pub z_prime: f64,
    pub z: f64,
    pub ratio: f64,
    pub n_points: usize,
    pub s: usize,
    pub mesh_n: usize,
    pub provenance: String,
}

/// `Z = Q(Theta)`, `Z' = Q(Theta phi)` from already evaluated samples.
pub fn ratio_from_samples(samples: &[Sample]) -> Result<(f64, f64, f64)> {
    let thetas: Vec<f64> = samples.iter().map(|s| s.theta).collect();
    let psis: Vec<f64> = samples.iter().map(Sample::psi).collect();
    let z = qmc::mean_of(&thetas)?;
    let z_prime = qmc::mean_of(&psis)?;
    if !(z >= 1e-300) {
        return Err(Error::DegeneratePosterior { z });
    }
    Ok((z_prime, z, z_prime / z))
}

/// Ratio estimate of the posterior expectation over a point set in the prior box.
pub fn estimate(points: &PointSet, post: &Posterior) -> Result<PosteriorEstimate> {
    if points.is_empty() {
        return Err(Error::Input("empty point set".into()));
    }
    let samples = post.samples(points)?;
    let (z_prime, z, ratio) = ratio_from_samples(&samples)?;
    Ok(PosteriorEstimate {
        z_prime,
        z,
        ratio,
        n_points: points.len(),
        s: points.dim(),
        mesh_n: post.model.space().mesh().n(),
        provenance: points.provenance.clone(),
    })
}

/// Noisy point observations of the solution at `y_star`.
///
/// Noise is `sqrt(sigma) * z` per entry, with `z` drawn from the ziggurat
/// `StandardNormal` sampler of `rand_distr` driven by `ChaCha8Rng::seed_from_u64(seed)`.
pub fn synthesize_data(
    y_star: &ParamVector,
    sensors: Vec<[f64; 2]>,
    sigma: f64,
    seed: u64,
    data_model: &ForwardModel,
) -> Result<ObservationSetup> {
    let u = data_model.forward(y_star)?;
    let clean = observe(&u, &sensors)?;
    let delta = add_noise(&clean, sigma, seed);
    let mut setup = ObservationSetup::new(sensors, sigma, delta)?;
    let truth_text: String = y_star.values().iter().map(|v| format!("{v:?};")).collect();
    setup.provenance.insert("seed".into(), seed.to_string());
    setup.provenance.insert("data_mesh_n".into(), data_model.space().mesh().n().to_string());
    setup.provenance.insert("s".into(), y_star.len().to_string());
    setup
        .provenance
        .insert("truth_sha256".into(), qmc::io::sha256_hex(truth_text.as_bytes()));
    Ok(setup)
}

pub fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma.sqrt();
    clean
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            c + sd * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::P2Space;
    use crate::field::KLField;

    fn model(n: usize, s: usize) -> ForwardModel {
        ForwardModel::with_defaults(P2Space::uniform(n).unwrap(), KLField::sine_product(s, 0.4).unwrap())
    }

    #[test]
    fn sensor_layout() {
        let s = default_sensors();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|p| p[0] == 0.5));
        assert!((s[0][1] - 0.001).abs() < 1e-15);
        assert!((s[1][1] - 0.1009).abs() < 1e-15);
        assert!((s[9][1] - 0.9001).abs() < 1e-15);
    }

    #[test]
    fn observing_zero_and_linearity() {
        let m = model(4, 2);
        let zero = Displacement::zero(m.space().clone());
        assert_eq!(observe(&zero, &default_sensors()).unwrap(), vec![0.0; 20]);
        let u = m.forward(&ParamVector::new(vec![0.2, -0.3]).unwrap()).unwrap();
        let v = m.forward(&ParamVector::new(vec![-0.4, 0.1]).unwrap()).unwrap();
        let ou = observe(&u, &default_sensors()).unwrap();
        let ov = observe(&v, &default_sensors()).unwrap();
        let ouv = observe(&(&u + &v), &default_sensors()).unwrap();
        for k in 0..20 {
            assert!((ouv[k] - ou[k] - ov[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn potential_values() {
        let sensors = default_sensors();
        let delta: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let setup = ObservationSetup::new(sensors.clone(), 1.0, delta.clone()).unwrap();
        assert_eq!(potential(&delta, &setup).unwrap(), 0.0);
        let shifted: Vec<f64> = delta.iter().map(|d| d - 1.0).collect();
        assert!((potential(&shifted, &setup).unwrap() - 10.0).abs() < 1e-12);
        let setup = ObservationSetup::new(sensors.clone(), 0.1, delta.clone()).unwrap();
        let e: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        let pred: Vec<f64> = delta.iter().zip(&e).map(|(d, e)| d - e).collect();
        let e2: f64 = e.iter().map(|x| x * x).sum();
        assert!((potential(&pred, &setup).unwrap() - 5.0 * e2).abs() < 1e-12);
        let zero = ObservationSetup::new(sensors, 0.0, delta.clone()).unwrap();
        assert!(matches!(potential(&delta, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn theta_psi_and_truth() {
        let m = model(4, 2);
        let y = ParamVector::new(vec![0.1, 0.2]).unwrap();
        let u = m.forward(&y).unwrap();
        let pred = observe(&u, &default_sensors()).unwrap();
        let setup = ObservationSetup::new(default_sensors(), 0.1, pred.clone()).unwrap();
        let post = Posterior::new(m, setup);
        let s = post.evaluate(&y).unwrap();
        assert_eq!(s.theta, 1.0);
        assert_eq!(post.psi_h(&y).unwrap(), u.qoi_integral());

        let other = ParamVector::new(vec![-0.4, 0.3]).unwrap();
        let so = post.evaluate(&other).unwrap();
        assert!(so.theta > 0.0 && so.theta < 1.0);
        assert!(so.psi().abs() <= so.qoi.abs());
        let zero_qoi = Posterior { qoi: Qoi::Constant(0.0), ..post };
        assert_eq!(zero_qoi.psi_h(&other).unwrap(), 0.0);
    }

    #[test]
    fn theta_decreases_with_mismatch() {
        let m = model(4, 1);
        let y = ParamVector::new(vec![0.0]).unwrap();
        let pred = observe(&m.forward(&y).unwrap(), &default_sensors()).unwrap();
        let mut prev = 1.0 + 1e-12;
        for scale in [0.0, 0.01, 0.05, 0.2] {
            let delta: Vec<f64> = pred.iter().map(|p| p + scale).collect();
            let setup = ObservationSetup::new(default_sensors(), 0.1, delta).unwrap();
            let post = Posterior::new(model(4, 1), setup);
            let t = post.theta(&y).unwrap();
            assert!(t < prev);
            prev = t;
        }
        // Phi = 10 gives e^-10
        let delta: Vec<f64> = pred.iter().map(|p| p + 1.0).collect();
        let setup = ObservationSetup::new(default_sensors(), 1.0, delta).unwrap();
        let t = Posterior::new(model(4, 1), setup).theta(&y).unwrap();
        assert!((t - (-10f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ratio_invariant_under_theta_scaling() {
        let samples: Vec<Sample> = (0..257)
            .map(|k| Sample {
                theta: (-(k as f64 * 0.37).sin().powi(2) * 3.0).exp(),
                qoi: 0.1 + (k as f64 * 0.11).cos(),
            })
            .collect();
        let (_, z, r) = ratio_from_samples(&samples).unwrap();
        assert!(z > 0.0 && z <= 1.0);
        for c in [1e-3, 0.5, 7.0, 1e5] {
            let scaled: Vec<Sample> = samples
                .iter()
                .map(|s| Sample { theta: c * s.theta, qoi: s.qoi })
                .collect();
            let (_, _, rs) = ratio_from_samples(&scaled).unwrap();
            assert!(((rs - r) / r).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_posterior_is_reported() {
        let samples = vec![Sample { theta: 0.0, qoi: 1.0 }; 4];
        assert!(matches!(
            ratio_from_samples(&samples),
            Err(Error::DegeneratePosterior { .. })
        ));
    }

    #[test]
    fn noise_generator_is_pinned() {
        let noise = add_noise(&[0.0; 4], 1.0, 42);
        let again = add_noise(&[0.0; 4], 1.0, 42);
        assert_eq!(noise, again);
        assert_eq!(add_noise(&[1.0, 2.0], 0.0, 42), vec![1.0, 2.0]);
        // frozen first draws of ChaCha8 + ziggurat for seed 42
        let frozen = FROZEN_SEED42;
        for (a, b) in noise.iter().zip(frozen) {
            assert_eq!(a.to_bits(), b.to_bits(), "{noise:?}");
        }
    }

    const FROZEN_SEED42: [f64; 4] = [
        0.47798123835102174,
        1.3340706102318078,
        -0.21086668327103028,
        0.4763469238088213,
    ];

    #[test]
    fn noise_variance_matches_sigma() {
        let sigma = 0.1;
        let draws = add_noise(&vec![0.0; 10_000], sigma, 7);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!(((var - sigma) / sigma).abs() < 0.05, "{var}");
    }

    #[test]
    fn synthesis_is_seeded() {
        let m = model(4, 2);
        let y = ParamVector::new(vec![0.3, -0.2]).unwrap();
        let a = synthesize_data(&y, default_sensors(), 0.1, 9, &m).unwrap();
        let b = synthesize_data(&y, default_sensors(), 0.1, 9, &m).unwrap();
        assert_eq!(a, b);
        let clean = synthesize_data(&y, default_sensors(), 0.0, 9, &m).unwrap();
        assert_eq!(clean.delta(), observe(&m.forward(&y).unwrap(), &default_sensors()).unwrap());
        assert_eq!(a.provenance["seed"], "9");
    }

    #[test]
    fn observation_csv_round_trip() {
        let m = model(4, 2);
        let y = ParamVector::new(vec![0.3, -0.2]).unwrap();
        let a = synthesize_data(&y, default_sensors(), 0.1, 9, &m).unwrap();
        let back = ObservationSetup::parse_csv(&a.to_csv(), Path::new("obs.csv")).unwrap();
        assert_eq!(back, a);
        assert!(ObservationSetup::parse_csv("# sigma = 0.1\nx,y,u1,u2\n0.5,0.5,1\n", Path::new("o")).is_err());
    }

    #[test]
    fn constant_qoi_gives_unit_ratio_and_large_sigma_gives_prior_mean() {
        use crate::qmc::{generate_points, shift_to_prior, LatticeRule, PolyGF};
        let rule = LatticeRule::with_default_modulus(
            2, 5, 2, 2,
            [1u64, 11, 7, 29].iter().map(|&c| PolyGF::from_int(c, 2).unwrap()).collect(),
        ).unwrap();
        let pts = shift_to_prior(&generate_points(&rule));
        let m = model(4, 2);
        let y = ParamVector::new(vec![0.3, -0.2]).unwrap();
        let setup = synthesize_data(&y, default_sensors(), 0.1, 3, &m).unwrap();
        let post = Posterior { qoi: Qoi::Constant(1.0), ..Posterior::new(m, setup.clone()) };
        assert_eq!(estimate(&pts, &post).unwrap().ratio, 1.0);

        let wide = Posterior::new(model(4, 2), setup.with_sigma(1e12).unwrap());
        let est = estimate(&pts, &wide).unwrap();
        let prior_mean = qmc::quadrature(&pts, |u| {
            wide.model.forward(&ParamVector::new(u.to_vec()).unwrap()).unwrap().qoi_integral()
        }).unwrap();
        assert!(((est.ratio - prior_mean) / prior_mean).abs() < 1e-9);
        assert!(est.z > 0.0 && est.z <= 1.0);
    }
}
