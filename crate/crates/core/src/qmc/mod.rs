//! Interlaced polynomial lattice rules and equal-weight quadrature.
//!
//! Point `n` of a rule with modulus `P` and generating vector `g` is built
//! from the `alpha * s` raw coordinates `v_m(n(x) g_k(x) / P(x))`; each
//! block of `alpha` consecutive raw coordinates is merged into one output
//! coordinate by digit interlacing. Digits stay integral until a point is
//! converted to floating point.

pub mod cbc;
pub mod io;
pub mod poly;

use rayon::prelude::*;

use crate::error::{Error, Result};
pub use poly::{find_irreducible, int_to_poly, is_irreducible, poly_mul_mod, vm_digits, PolyGF};

/// Largest `m` accepted in base 2.
pub const MAX_M_BASE2: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRule {
    b: u32,
    m: usize,
    alpha: usize,
    s: usize,
    modulus: PolyGF,
    gen: Vec<PolyGF>,
    /// Hash of the file the rule was read from, if any.
    pub source_hash: Option<String>,
}

impl LatticeRule {
    pub fn new(b: u32, m: usize, alpha: usize, s: usize, modulus: PolyGF, gen: Vec<PolyGF>) -> Result<Self> {
        if !poly::is_prime(b) {
            return Err(Error::Input(format!("base {b} is not prime")));
        }
        if m == 0 || alpha == 0 || s == 0 {
            return Err(Error::Input(format!(
                "m, alpha and s must be positive (got m={m}, alpha={alpha}, s={s})"
            )));
        }
        if b == 2 && m > MAX_M_BASE2 {
            return Err(Error::Input(format!("m = {m} exceeds the cap of {MAX_M_BASE2}")));
        }
        if (b as u64).checked_pow((alpha * m) as u32).is_none() {
            return Err(Error::Input(format!(
                "{b}^{} interlaced digits do not fit in 64 bits",
                alpha * m
            )));
        }
        if modulus.base() != b || modulus.degree() != Some(m) {
            return Err(Error::Input(format!("modulus {modulus:?} must have degree {m} over base {b}")));
        }
        if !is_irreducible(&modulus) {
            return Err(Error::Input(format!("modulus {modulus:?} is not irreducible")));
        }
        if gen.len() != alpha * s {
            return Err(Error::Input(format!(
                "generating vector has {} entries, expected alpha * s = {}",
                gen.len(),
                alpha * s
            )));
        }
        for (k, g) in gen.iter().enumerate() {
            if g.base() != b {
                return Err(Error::Input(format!("generator {k} has base {}, expected {b}", g.base())));
            }
            match g.degree() {
                None => return Err(Error::Input(format!("generator {k} is the zero polynomial"))),
                Some(d) if d >= m => {
                    return Err(Error::Input(format!("generator {k} has degree {d} >= m = {m}")))
                }
                _ => {}
            }
        }
        Ok(LatticeRule {
            b,
            m,
            alpha,
            s,
            modulus,
            gen,
            source_hash: None,
        })
    }

    /// Rule with the smallest irreducible modulus of degree `m`.
    pub fn with_default_modulus(b: u32, m: usize, alpha: usize, s: usize, gen: Vec<PolyGF>) -> Result<Self> {
        Self::new(b, m, alpha, s, find_irreducible(b, m)?, gen)
    }

    pub fn base(&self) -> u32 {
        self.b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn modulus(&self) -> &PolyGF {
        &self.modulus
    }

    pub fn generators(&self) -> &[PolyGF] {
        &self.gen
    }

    pub fn num_points(&self) -> usize {
        (self.b as usize).pow(self.m as u32)
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "b={} m={} alpha={} s={} P={}",
            self.b,
            self.m,
            self.alpha,
            self.s,
            self.modulus.to_int().unwrap_or(0)
        );
        if let Some(h) = &self.source_hash {
            s.push_str(&format!(" file-sha256={h}"));
        }
        s
    }
}

/// Raw coordinate numerators `sum_l t_l b^(m-l)` of one generating polynomial
/// for every `n < b^m`.
pub(crate) fn raw_numerators(b: u32, m: usize, modulus: &PolyGF, g: &PolyGF) -> Vec<u64> {
    let n_pts = (b as usize).pow(m as u32);
    // column i holds the digits of x^i g / P
    let columns: Vec<Vec<u32>> = (0..m)
        .map(|i| {
            let a = poly_mul_mod(&PolyGF::monomial(b, i), g, modulus).expect("same base");
            vm_digits(&a, modulus, m).expect("reduced numerator")
        })
        .collect();
    if b == 2 {
        let cols: Vec<u64> = columns.iter().map(|d| pack(d, 2)).collect();
        let mut out = vec![0u64; n_pts];
        for n in 1..n_pts {
            out[n] = out[n & (n - 1)] ^ cols[n.trailing_zeros() as usize];
        }
        return out;
    }
    let bu = b as usize;
    (0..n_pts)
        .map(|n| {
            let mut t = vec![0u32; m];
            let mut rest = n;
            for col in &columns {
                let eta = (rest % bu) as u32;
                rest /= bu;
                if eta != 0 {
                    for (tl, c) in t.iter_mut().zip(col) {
                        *tl = (*tl + eta * c) % b;
                    }
                }
            }
            pack(&t, b)
        })
        .collect()
}

/// Most significant digit first.
fn pack(digits: &[u32], b: u32) -> u64 {
    digits.iter().fold(0u64, |acc, &d| acc * b as u64 + d as u64)
}

fn unpack(mut numer: u64, b: u32, len: usize) -> Vec<u32> {
    let mut d = vec![0u32; len];
    for slot in d.iter_mut().rev() {
        *slot = (numer % b as u64) as u32;
        numer /= b as u64;
    }
    d
}

/// Places the `m` digits of raw coordinate `i` (0-based within its block)
/// at interlaced positions `i + 1 + (l - 1) alpha`.
pub(crate) fn spread(numer: u64, i: usize, alpha: usize, m: usize, b: u32) -> u64 {
    let total = alpha * m;
    if b == 2 {
        let mut out = 0u64;
        let mut bits = numer;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize; // digit l = m - k
            bits &= bits - 1;
            let l = m - k;
            let p = i + 1 + (l - 1) * alpha;
            out |= 1u64 << (total - p);
        }
        return out;
    }
    let digits = unpack(numer, b, m);
    let mut out = vec![0u32; total];
    for (l, &d) in digits.iter().enumerate() {
        out[i + l * alpha] = d;
    }
    pack(&out, b)
}

/// Digit interlacing of `alpha` digit vectors of equal length `m`: output
/// digit `j + (i - 1) alpha` (1-based) is digit `i` of input `j`.
pub fn interlace(inputs: &[Vec<u32>]) -> Vec<u32> {
    let alpha = inputs.len();
    let m = inputs.first().map_or(0, Vec::len);
    let mut out = vec![0u32; alpha * m];
    for (j, x) in inputs.iter().enumerate() {
        assert_eq!(x.len(), m, "interlaced inputs must share a digit count");
        for (i, &d) in x.iter().enumerate() {
            out[j + i * alpha] = d;
        }
    }
    out
}

pub fn deinterlace(digits: &[u32], alpha: usize) -> Vec<Vec<u32>> {
    assert!(alpha > 0 && digits.len() % alpha == 0, "digit block not divisible by alpha");
    (0..alpha)
        .map(|j| digits.iter().skip(j).step_by(alpha).copied().collect())
        .collect()
}

/// Exact conversion `numer / b^digits`, rounded down to stay below one.
fn to_unit(numer: u64, b: u32, digits: usize) -> f64 {
    if b == 2 {
        if digits <= 53 {
            return numer as f64 * (-(digits as f64)).exp2();
        }
        return (numer >> (digits - 53)) as f64 * (-53f64).exp2();
    }
    let v = numer as f64 / (b as f64).powi(digits as i32);
    if v >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else {
        v
    }
}

/// `N x s` point matrix kept as integer digit numerators.
#[derive(Debug, Clone)]
pub struct PointSet {
    base: u32,
    digits: usize,
    len: usize,
    s: usize,
    numerators: Vec<u64>,
    offset: f64,
    pub provenance: String,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    /// Digits per coordinate (`alpha * m`).
    pub fn digit_count(&self) -> usize {
        self.digits
    }

    /// `0` for `[0,1)^s`, `-1/2` once shifted to the prior box.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn numerator(&self, n: usize, j: usize) -> u64 {
        self.numerators[n * self.s + j]
    }

    /// Digit vector of coordinate `j` of point `n`, most significant first.
    pub fn digits(&self, n: usize, j: usize) -> Vec<u32> {
        unpack(self.numerator(n, j), self.base, self.digits)
    }

    pub fn value(&self, n: usize, j: usize) -> f64 {
        to_unit(self.numerator(n, j), self.base, self.digits) + self.offset
    }

    pub fn point_into(&self, n: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.s) {
            *o = self.value(n, j);
        }
    }

    pub fn point(&self, n: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.s];
        self.point_into(n, &mut p);
        p
    }

    /// Projection onto the first `s` coordinates.
    pub fn truncate(&self, s: usize) -> Result<PointSet> {
        if s == 0 || s > self.s {
            return Err(Error::Input(format!("cannot project {}-dimensional points to {s}", self.s)));
        }
        let numerators = (0..self.len)
            .flat_map(|n| self.numerators[n * self.s..n * self.s + s].iter().copied())
            .collect();
        Ok(PointSet {
            s,
            numerators,
            provenance: format!("{} projected to s={s}", self.provenance),
            ..self.clone()
        })
    }

    /// CSV, one point per row, shortest round-trip decimal representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for n in 0..self.len {
            let row: Vec<String> = self.point(n).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// All `b^m` points of the interlaced rule, in index order.
pub fn generate_points(rule: &LatticeRule) -> PointSet {
    let (b, m, alpha, s) = (rule.b, rule.m, rule.alpha, rule.s);
    let n_pts = rule.num_points();
    let raw: Vec<Vec<u64>> = rule
        .gen
        .par_iter()
        .map(|g| raw_numerators(b, m, &rule.modulus, g))
        .collect();
    let mut numerators = vec![0u64; n_pts * s];
    numerators
        .par_chunks_mut(s)
        .enumerate()
        .for_each(|(n, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = (0..alpha)
                    .map(|i| spread(raw[j * alpha + i][n], i, alpha, m, b))
                    .fold(0, |acc, v| if b == 2 { acc | v } else { acc + v });
            }
        });
    PointSet {
        base: b,
        digits: alpha * m,
        len: n_pts,
        s,
        numerators,
        offset: 0.0,
        provenance: rule.describe(),
    }
}

/// Moves the points from `[0,1)^s` to the prior box `[-1/2, 1/2)^s`.
pub fn shift_to_prior(points: &PointSet) -> PointSet {
    PointSet {
        offset: points.offset - 0.5,
        provenance: format!("{} shifted by -1/2", points.provenance),
        ..points.clone()
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}

/// Equal-weight mean of already evaluated integrand values, in index order.
pub fn mean_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("empty point set".into()));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Sample {
            index,
            reason: format!("integrand returned {}", values[index]),
        });
    }
    Ok(values.iter().copied().collect::<CompensatedSum>().total() / values.len() as f64)
}

/// `Q(F) = (1/N) sum_n F(y_n)`; evaluation is parallel, the sum is taken in
/// index order.
pub fn quadrature<F>(points: &PointSet, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; points.dim()],
            |buf, n| {
                points.point_into(n, buf);
                f(buf)
            },
        )
        .collect();
    mean_of(&values)
}

/// `prod_j (1 + gamma_j B2(u_j))` with `B2(u) = (u - 1/2)^2 - 1/12`; integrates to one.
pub fn product_test_integrand(u: &[f64], gamma: &[f64]) -> f64 {
    u.iter()
        .zip(gamma)
        .map(|(&x, g)| 1.0 + g * ((x - 0.5).powi(2) - 1.0 / 12.0))
        .product()
}

/// `gamma_j = j^-2`.
pub fn inverse_square_weights(s: usize) -> Vec<f64> {
    (1..=s).map(|j| 1.0 / (j * j) as f64).collect()
}
