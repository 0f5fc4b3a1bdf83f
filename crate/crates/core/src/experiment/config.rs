use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::BodyForce;
use crate::field::{family_by_name, KLField};
use crate::qmc::io::sha256_hex;
use crate::qmc::poly::is_prime;

pub const VERSION: &str = concat!("kl-elast-v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum SensorSpec {
    /// Ten sensors on the vertical line `x1 = 1/2`.
    Default,
    Points(Vec<[f64; 2]>),
}

impl SensorSpec {
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            SensorSpec::Default => crate::bayes::default_sensors(),
            SensorSpec::Points(p) => p.clone(),
        }
    }

    fn parse(v: &str) -> Result<Self> {
        if v == "default" {
            return Ok(SensorSpec::Default);
        }
        let pts = v
            .split(';')
            .map(|p| {
                let c = parse_list::<f64>("sensors", p)?;
                match c[..] {
                    [x, y] => Ok([x, y]),
                    _ => Err(Error::Config(format!("sensor `{p}` needs two coordinates `x,y`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SensorSpec::Points(pts))
    }

    fn render(&self) -> String {
        match self {
            SensorSpec::Default => "default".into(),
            SensorSpec::Points(p) => p
                .iter()
                .map(|[x, y]| format!("{x:?},{y:?}"))
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

/// Everything a run depends on. Defaults give the full study; [`RunConfig::desk`]
/// shrinks it to a few minutes on one core.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub s: usize,
    pub mesh_n: usize,
    /// Mesh for synthetic data; finer than `mesh_n` to avoid an inverse crime.
    pub data_mesh_n: usize,
    pub b: u32,
    pub m_list: Vec<usize>,
    pub reference_m: usize,
    pub alpha: usize,
    pub nu: f64,
    /// Noise variance, `Gamma = sigma I`.
    pub sigma: f64,
    pub seed: u64,
    pub sensors: SensorSpec,
    pub family: String,
    /// `f1 = c0 + c1 x1 + c2 x2`, `f2 = c3 + c4 x1 + c5 x2`.
    pub body_force: [f64; 6],
    /// Density grid resolution per axis.
    pub grid: usize,
    pub fem_ns: Vec<usize>,
    pub cbc_candidates: usize,
    pub output_dir: PathBuf,
    /// Observation file; `<output_dir>/observations.csv` when unset.
    pub observations: Option<PathBuf>,
    /// Directory of saved generating vectors. When set, rules are loaded from
    /// it instead of being searched for.
    pub generating_vector: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            s: 64,
            mesh_n: 32,
            data_mesh_n: 64,
            b: 2,
            m_list: vec![8, 10, 11, 12],
            reference_m: 15,
            alpha: 2,
            nu: 0.4,
            sigma: 0.1,
            seed: 42,
            sensors: SensorSpec::Default,
            family: "sine-product".into(),
            body_force: [10.0, 2.0, 0.0, -3.0, 0.0, 1.0],
            grid: 65,
            fem_ns: vec![8, 16, 32, 64],
            cbc_candidates: 128,
            output_dir: PathBuf::from("out"),
            observations: None,
            generating_vector: None,
            workers: 0,
        }
    }
}

/// Keys that change results; the config hash covers exactly these.
const HASHED_KEYS: &[&str] = &[
    "s",
    "mesh_n",
    "data_mesh_n",
    "b",
    "m_list",
    "reference_m",
    "alpha",
    "nu",
    "sigma",
    "seed",
    "sensors",
    "family",
    "body_force",
    "grid",
    "fem_ns",
    "cbc_candidates",
];

const PATH_KEYS: &[&str] = &["output_dir", "observations", "generating_vector", "workers"];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{v}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|x| parse_num(key, x)).collect()
}

fn render_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            s: 16,
            mesh_n: 16,
            data_mesh_n: 32,
            reference_m: 13,
            ..Self::default()
        }
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        HASHED_KEYS.iter().chain(PATH_KEYS).copied()
    }

    /// Sets one field from its textual form. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "s" => self.s = parse_num(&key, v)?,
            "mesh_n" => self.mesh_n = parse_num(&key, v)?,
            "data_mesh_n" => self.data_mesh_n = parse_num(&key, v)?,
            "b" => self.b = parse_num(&key, v)?,
            "m_list" => self.m_list = parse_list(&key, v)?,
            "reference_m" => self.reference_m = parse_num(&key, v)?,
            "alpha" => self.alpha = parse_num(&key, v)?,
            "nu" => self.nu = parse_num(&key, v)?,
            "sigma" => self.sigma = parse_num(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "sensors" => self.sensors = SensorSpec::parse(v)?,
            "family" => self.family = v.to_string(),
            "body_force" => {
                let c: Vec<f64> = parse_list(&key, v)?;
                self.body_force = c.try_into().map_err(|c: Vec<f64>| {
                    Error::Config(format!("body_force needs 6 coefficients, found {}", c.len()))
                })?;
            }
            "grid" => self.grid = parse_num(&key, v)?,
            "fem_ns" => self.fem_ns = parse_list(&key, v)?,
            "cbc_candidates" => self.cbc_candidates = parse_num(&key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "observations" => self.observations = (!v.is_empty()).then(|| PathBuf::from(v)),
            "generating_vector" => self.generating_vector = (!v.is_empty()).then(|| PathBuf::from(v)),
            "workers" => self.workers = parse_num(&key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        Some(match key {
            "s" => self.s.to_string(),
            "mesh_n" => self.mesh_n.to_string(),
            "data_mesh_n" => self.data_mesh_n.to_string(),
            "b" => self.b.to_string(),
            "m_list" => render_list(&self.m_list),
            "reference_m" => self.reference_m.to_string(),
            "alpha" => self.alpha.to_string(),
            "nu" => format!("{:?}", self.nu),
            "sigma" => format!("{:?}", self.sigma),
            "seed" => self.seed.to_string(),
            "sensors" => self.sensors.render(),
            "family" => self.family.clone(),
            "body_force" => render_list(&self.body_force),
            "grid" => self.grid.to_string(),
            "fem_ns" => render_list(&self.fem_ns),
            "cbc_candidates" => self.cbc_candidates.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "observations" => opt(&self.observations),
            "generating_vector" => opt(&self.generating_vector),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, found `{line}`")))?;
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Canonical `key = value` text of every field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::keys() {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }

    /// SHA-256 of the result-relevant fields; paths and worker count excluded.
    pub fn hash(&self) -> String {
        let text: String = HASHED_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect();
        sha256_hex(text.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.s == 0 {
            return bad("s must be at least 1".into());
        }
        if self.mesh_n < 2 || self.data_mesh_n < 2 {
            return bad(format!(
                "mesh sizes must be at least 2, got mesh_n = {}, data_mesh_n = {}",
                self.mesh_n, self.data_mesh_n
            ));
        }
        if !is_prime(self.b) {
            return bad(format!("base b = {} is not prime", self.b));
        }
        if self.alpha == 0 {
            return bad("alpha must be at least 1".into());
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return bad("m_list must be non-empty with m >= 1".into());
        }
        if self.m_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("m_list must be strictly increasing, got {:?}", self.m_list));
        }
        let m_max = *self.m_list.last().expect("non-empty");
        if self.reference_m <= m_max {
            return bad(format!(
                "reference_m = {} must exceed every study m (max {m_max})",
                self.reference_m
            ));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return bad(format!("Poisson ratio {} outside (0, 1/2)", self.nu));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("noise variance {} must be finite and non-negative", self.sigma));
        }
        if self.body_force.iter().any(|c| !c.is_finite()) {
            return bad("body_force coefficients must be finite".into());
        }
        if self.cbc_candidates == 0 {
            return bad("cbc_candidates must be at least 1".into());
        }
        family_by_name(&self.family)?;
        Ok(())
    }

    pub fn field(&self) -> Result<KLField> {
        KLField::new(self.s, self.nu, family_by_name(&self.family)?)
    }

    pub fn force(&self) -> BodyForce {
        let c = self.body_force;
        Arc::new(move |x: [f64; 2]| {
            [
                c[0] + c[1] * x[0] + c[2] * x[1],
                c[3] + c[4] * x[0] + c[5] * x[1],
            ]
        })
    }

    pub fn observations_path(&self) -> PathBuf {
        self.observations
            .clone()
            .unwrap_or_else(|| self.output_dir.join("observations.csv"))
    }

    /// `# key = value` lines identifying the run, plus `extra`.
    pub fn provenance_header(&self, extra: &[(&str, String)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# version = {VERSION}");
        let _ = writeln!(out, "# config_sha256 = {}", self.hash());
        let _ = writeln!(out, "# seed = {}", self.seed);
        for (k, v) in extra {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::desk();
        cfg.sensors = SensorSpec::Points(vec![[0.25, 0.5], [0.75, 0.125]]);
        cfg.generating_vector = Some("vectors".into());
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("c.cfg")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_force_matches_the_model() {
        let f = RunConfig::default().force();
        let g = crate::fem::default_body_force();
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 0.25]] {
            assert_eq!(f(x), g(x));
        }
    }

    #[test]
    fn hash_ignores_paths_and_workers() {
        let a = RunConfig::desk();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.workers = 3;
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig::desk().validate().is_ok());
        let cases: [fn(&mut RunConfig); 6] = [
            |c| c.reference_m = 12,
            |c| c.m_list = vec![10, 8],
            |c| c.nu = 0.5,
            |c| c.b = 4,
            |c| c.mesh_n = 1,
            |c| c.family = "cosine".into(),
        ];
        for f in cases {
            let mut c = RunConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn bad_lines_name_the_line() {
        let mut c = RunConfig::default();
        match c.apply_text("s = 4\n\n# ok\nmesh_n 8\n", Path::new("c.cfg")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(c.apply_text("colour = red", Path::new("c.cfg")).is_err());
        assert!(c.set("body-force", "1,2,3").is_err());
        c.set("mesh-n", "12").unwrap();
        assert_eq!(c.mesh_n, 12);
    }
}
