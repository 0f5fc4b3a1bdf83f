//! Greedy component-by-component search for generating vectors.
//!
//! Each raw component `g_k` is chosen to minimise the worst absolute
//! quadrature error over a bank of product test integrands with exact
//! integral one:
//!
//! * `prod_j (1 + gamma_j B2(u_j))`, `B2(u) = (u - 1/2)^2 - 1/12`, on the
//!   interlaced coordinates;
//! * the Walsh kernel `prod_j (1 + gamma_j (-1 + prod_i (1 + omega(x_{j,i}))))`
//!   on the raw coordinates `x_{j,i}` before interlacing, where
//!   `omega(x) = sum_{k >= 1} b^(-lambda a(k)) wal_k(x)` and `a(k)` is the
//!   position of the leading digit of `k`. Its quadrature error is a
//!   worst-case error of the digital net, so it cannot vanish by accident
//!   the way a single polynomial integrand can.
//!
//! Missing digits of a partly assembled interlaced coordinate are set to
//! zero for the `B2` members and left out of the product for the kernel.
//! Ties go to the smallest polynomial encoding.
//!
//! [`calibration_bank`] holds `B2` members only and is what the rate checks
//! use. The kernel bank gives markedly better rules for the posterior
//! integrands: at `s = 1` every candidate integrates the `B2` factor almost
//! exactly, so the `B2` bank leaves the choice to the encoding order.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{find_irreducible, generate_points, raw_numerators, spread, to_unit, LatticeRule, PolyGF};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CbcOptions {
    /// Candidates examined per component. When `b^m - 1` exceeds this, a
    /// fixed pseudo-random subset (always containing `g = 1`) is scanned.
    pub max_candidates: usize,
    pub seed: u64,
}

impl Default for CbcOptions {
    fn default() -> Self {
        CbcOptions {
            max_candidates: 128,
            seed: 0x05ee_dcbc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Bernoulli,
    WalshKernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestIntegrand {
    pub shape: Shape,
    pub gamma: Vec<f64>,
}

impl TestIntegrand {
    pub fn new(shape: Shape, gamma: Vec<f64>) -> Self {
        TestIntegrand { shape, gamma }
    }
}

fn weights(s: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (1..=s).map(|j| f(j as f64)).collect()
}

/// `B2` products with `gamma_j` = `j^-2`, `j^-3` and `0.8^j`.
pub fn calibration_bank(s: usize) -> Vec<TestIntegrand> {
    vec![
        TestIntegrand::new(Shape::Bernoulli, weights(s, |j| j.powi(-2))),
        TestIntegrand::new(Shape::Bernoulli, weights(s, |j| j.powi(-3))),
        TestIntegrand::new(Shape::Bernoulli, weights(s, |j| 0.8f64.powf(j))),
    ]
}

/// The Walsh kernel with `gamma_j = j^-2`, matching the decay of the KL terms.
pub fn walsh_kernel_bank(s: usize) -> Vec<TestIntegrand> {
    vec![TestIntegrand::new(Shape::WalshKernel, weights(s, |j| j.powi(-2)))]
}

fn bernoulli(u: f64) -> f64 {
    (u - 0.5).powi(2) - 1.0 / 12.0
}

/// `1 + omega(x)` for an `m`-digit raw numerator, tabulated by the position of
/// the leading nonzero digit. Decay `lambda = max(alpha, 2)`.
struct Kernel {
    b: u32,
    m: usize,
    /// index 0: x = 0; index `nu`: leading digit at position `nu`
    table: Vec<f64>,
}

impl Kernel {
    fn new(b: u32, m: usize, alpha: usize) -> Self {
        let bf = b as f64;
        let lambda = alpha.max(2) as f64;
        let r = bf.powf(1.0 - lambda);
        let below = |nu: i32| (bf - 1.0) / bf * r * (1.0 - r.powi(nu - 1)) / (1.0 - r);
        let mut table = vec![1.0 + (bf - 1.0) / bf * r / (1.0 - r)];
        table.extend((1..=m as i32).map(|nu| 1.0 + below(nu) - r.powi(nu) / bf));
        Kernel { b, m, table }
    }

    fn one_plus_omega(&self, numer: u64) -> f64 {
        if numer == 0 {
            return self.table[0];
        }
        let nu = if self.b == 2 {
            self.m - (63 - numer.leading_zeros() as usize)
        } else {
            let mut top = 0;
            let mut v = numer;
            while v >= self.b as u64 {
                v /= self.b as u64;
                top += 1;
            }
            self.m - top
        };
        self.table[nu]
    }
}

fn candidates(b: u32, m: usize, k: usize, opts: &CbcOptions) -> Vec<u64> {
    let total = (b as u64).pow(m as u32) - 1;
    if total as usize <= opts.max_candidates {
        return (1..=total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((m as u64) << 32) ^ k as u64);
    let mut set = std::collections::BTreeSet::new();
    set.insert(1u64);
    while set.len() < opts.max_candidates {
        set.insert(rng.random_range(1..=total));
    }
    set.into_iter().collect()
}

pub fn heuristic_cbc(
    b: u32,
    m: usize,
    s: usize,
    alpha: usize,
    bank: &[TestIntegrand],
    opts: &CbcOptions,
) -> Result<LatticeRule> {
    if bank.is_empty() {
        return Err(Error::Config("calibration bank is empty".into()));
    }
    if let Some(short) = bank.iter().find(|f| f.gamma.len() < s) {
        return Err(Error::Config(format!(
            "calibration weight sequence has {} entries, need {s}",
            short.gamma.len()
        )));
    }
    if m > 16 {
        return Err(Error::Config(format!("heuristic CBC is limited to m <= 16, got {m}")));
    }
    let modulus = find_irreducible(b, m)?;
    // validate parameters before the search
    LatticeRule::new(b, m, alpha, s, modulus.clone(), vec![PolyGF::one(b); alpha * s])?;

    let n_pts = (b as usize).pow(m as u32);
    let digits = alpha * m;
    let kernel = Kernel::new(b, m, alpha);
    let has_bernoulli = bank.iter().any(|f| f.shape == Shape::Bernoulli);
    let combine = |a: u64, v: u64| if b == 2 { a | v } else { a + v };
    // running product over finished dimensions, one row per bank member
    let mut prod = vec![vec![1.0; n_pts]; bank.len()];
    let mut gen = Vec::with_capacity(alpha * s);
    for j in 0..s {
        let mut partial = vec![0u64; n_pts];
        let mut kpart = vec![1.0f64; n_pts];
        for i in 0..alpha {
            let k = j * alpha + i;
            let member_error = |p: &[f64], f: &TestIntegrand, raw: &[u64], bern: &[f64]| {
                let gamma = f.gamma[j];
                let mut acc = super::CompensatedSum::default();
                for n in 0..n_pts {
                    let factor = match f.shape {
                        Shape::Bernoulli => 1.0 + gamma * bern[n],
                        Shape::WalshKernel => 1.0 + gamma * (kpart[n] * kernel.one_plus_omega(raw[n]) - 1.0),
                    };
                    acc.add(p[n] * factor);
                }
                (acc.total() / n_pts as f64 - 1.0).abs()
            };
            let mut best: Option<(f64, u64, Vec<u64>)> = None;
            for code in candidates(b, m, k, opts) {
                let raw = raw_numerators(b, m, &modulus, &PolyGF::from_int(code, b)?);
                let bern: Vec<f64> = if has_bernoulli {
                    raw.iter()
                        .zip(&partial)
                        .map(|(&r, &q)| bernoulli(to_unit(combine(q, spread(r, i, alpha, m, b)), b, digits)))
                        .collect()
                } else {
                    Vec::new()
                };
                // stop scoring once this candidate is already worse than the best
                let bound = best.as_ref().map_or(f64::INFINITY, |(e, _, _)| *e);
                let mut err = 0.0f64;
                for (p, f) in prod.iter().zip(bank) {
                    err = err.max(member_error(p, f, &raw, &bern));
                    if err >= bound {
                        break;
                    }
                }
                if err < bound {
                    best = Some((err, code, raw));
                }
            }
            let (_, code, raw) = best.expect("candidate set is non-empty");
            for n in 0..n_pts {
                partial[n] = combine(partial[n], spread(raw[n], i, alpha, m, b));
                kpart[n] *= kernel.one_plus_omega(raw[n]);
            }
            gen.push(PolyGF::from_int(code, b)?);
        }
        for (p, f) in prod.iter_mut().zip(bank) {
            let gamma = f.gamma[j];
            for n in 0..n_pts {
                p[n] *= match f.shape {
                    Shape::Bernoulli => 1.0 + gamma * bernoulli(to_unit(partial[n], b, digits)),
                    Shape::WalshKernel => 1.0 + gamma * (kpart[n] - 1.0),
                };
            }
        }
    }
    LatticeRule::new(b, m, alpha, s, modulus, gen)
}

/// Absolute quadrature error of `rule` on each bank member.
pub fn bank_errors(rule: &LatticeRule, bank: &[TestIntegrand]) -> Result<Vec<f64>> {
    let (b, m, alpha, s) = (rule.base(), rule.m(), rule.alpha(), rule.s());
    if let Some(short) = bank.iter().find(|f| f.gamma.len() < s) {
        return Err(Error::Config(format!(
            "calibration weight sequence has {} entries, need {s}",
            short.gamma.len()
        )));
    }
    let pts = generate_points(rule);
    let kernel = Kernel::new(b, m, alpha);
    let raw: Vec<Vec<u64>> = rule
        .generators()
        .iter()
        .map(|g| raw_numerators(b, m, rule.modulus(), g))
        .collect();
    bank.iter()
        .map(|f| {
            let values: Vec<f64> = (0..pts.len())
                .map(|n| {
                    (0..s)
                        .map(|j| match f.shape {
                            Shape::Bernoulli => 1.0 + f.gamma[j] * bernoulli(pts.value(n, j)),
                            Shape::WalshKernel => {
                                let inner: f64 =
                                    (0..alpha).map(|i| kernel.one_plus_omega(raw[j * alpha + i][n])).product();
                                1.0 + f.gamma[j] * (inner - 1.0)
                            }
                        })
                        .product()
                })
                .collect();
            Ok((super::mean_of(&values)? - 1.0).abs())
        })
        .collect()
}

pub fn bank_worst_error(rule: &LatticeRule, bank: &[TestIntegrand]) -> Result<f64> {
    Ok(bank_errors(rule, bank)?.into_iter().fold(0.0, f64::max))
}
