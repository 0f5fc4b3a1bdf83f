//! Parametric Young's modulus given by a truncated Karhunen–Loève expansion,
//! and the map to Lamé parameters.
//!
//! The modulus is affine in the parameters,
//! `E(x, y) = E0(x) + sum_j y_j psi_j(x)`, with `y_j` in `[-1/2, 1/2)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A family of expansion functions `psi_j` (1-based) together with a mean field.
pub trait BasisFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn mean(&self, x: [f64; 2]) -> f64;

    /// Value of `psi_j` at `x`, `j >= 1`.
    fn term(&self, j: usize, x: [f64; 2]) -> f64;

    /// `sup_x |psi_j(x)|`.
    fn amplitude(&self, j: usize) -> f64;

    /// Lower bound of the mean field over the domain.
    fn mean_min(&self) -> f64;

    fn mean_max(&self) -> f64;
}

/// `E0 = 1`, `psi_j(x) = j^-2 sin(2 pi j x1) sin(2 pi (j+1) x2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineProduct;

impl BasisFamily for SineProduct {
    fn name(&self) -> &str {
        "sine-product"
    }

    fn mean(&self, _x: [f64; 2]) -> f64 {
        1.0
    }

    fn term(&self, j: usize, x: [f64; 2]) -> f64 {
        let jf = j as f64;
        (2.0 * PI * jf * x[0]).sin() * (2.0 * PI * (jf + 1.0) * x[1]).sin() / (jf * jf)
    }

    fn amplitude(&self, j: usize) -> f64 {
        let jf = j as f64;
        1.0 / (jf * jf)
    }

    fn mean_min(&self) -> f64 {
        1.0
    }

    fn mean_max(&self) -> f64 {
        1.0
    }
}

/// Looks up a built-in basis family by name.
pub fn family_by_name(name: &str) -> Result<Arc<dyn BasisFamily>> {
    match name {
        "sine-product" => Ok(Arc::new(SineProduct)),
        other => Err(Error::Config(format!("unknown basis family `{other}`"))),
    }
}

/// A point of the parameter box `[-1/2, 1/2)^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(-0.5..0.5).contains(*v))
        {
            return Err(Error::Input(format!(
                "parameter y_{} = {v} lies outside [-1/2, 1/2)",
                j + 1
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(s: usize) -> Self {
        ParamVector(vec![0.0; s])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct KLField {
    s: usize,
    nu: f64,
    family: Arc<dyn BasisFamily>,
}

impl KLField {
    pub fn new(s: usize, nu: f64, family: Arc<dyn BasisFamily>) -> Result<Self> {
        if s == 0 {
            return Err(Error::Config("truncation dimension s must be positive".into()));
        }
        check_poisson(nu)?;
        Ok(KLField { s, nu, family })
    }

    /// The built-in sine-product family.
    pub fn sine_product(s: usize, nu: f64) -> Result<Self> {
        Self::new(s, nu, Arc::new(SineProduct))
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn family(&self) -> &dyn BasisFamily {
        self.family.as_ref()
    }

    /// Same family and Poisson ratio, truncated at a different dimension.
    pub fn with_dimension(&self, s: usize) -> Result<Self> {
        Self::new(s, self.nu, Arc::clone(&self.family))
    }

    fn check_dim(&self, y: &ParamVector) -> Result<()> {
        if y.len() != self.s {
            return Err(Error::Input(format!(
                "parameter vector has length {}, field expects {}",
                y.len(),
                self.s
            )));
        }
        Ok(())
    }

    pub fn evaluate_e(&self, y: &ParamVector, x: [f64; 2]) -> Result<f64> {
        self.check_dim(y)?;
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::Input(format!(
                "point ({}, {}) lies outside the unit square",
                x[0], x[1]
            )));
        }
        Ok(self.e_unchecked(y.values(), x))
    }

    pub(crate) fn e_unchecked(&self, y: &[f64], x: [f64; 2]) -> f64 {
        let mut e = self.family.mean(x);
        for (j, &yj) in y.iter().enumerate() {
            e += yj * self.family.term(j + 1, x);
        }
        e
    }

    /// Values `psi_1(x) .. psi_s(x)`, used to cache the expansion at quadrature points.
    pub(crate) fn terms_at(&self, x: [f64; 2]) -> Vec<f64> {
        (1..=self.s).map(|j| self.family.term(j, x)).collect()
    }

    /// Lamé parameters `(mu, lambda)` for a given modulus.
    pub fn lame(&self, e: f64) -> (f64, f64) {
        lame(e, self.nu)
    }

    /// Sum of `||psi_j||_inf` over `s_low < j <= s`.
    pub fn truncation_tail(&self, s_low: usize) -> Result<f64> {
        if s_low > self.s {
            return Err(Error::Input(format!(
                "s_low = {s_low} exceeds the field dimension {}",
                self.s
            )));
        }
        // smallest terms first
        Ok((s_low + 1..=self.s)
            .rev()
            .map(|j| self.family.amplitude(j))
            .sum())
    }

    /// Analytic bracket `[E_min, E_max]` valid for every admissible parameter.
    pub fn bounds(&self) -> (f64, f64) {
        let half_sum: f64 = 0.5 * self.truncation_tail(0).unwrap_or(0.0);
        (
            self.family.mean_min() - half_sum,
            self.family.mean_max() + half_sum,
        )
    }
}

fn check_poisson(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::Config(format!(
            "Poisson ratio {nu} must lie in (0, 1/2)"
        )));
    }
    Ok(())
}

/// `mu = E / (2(1+nu))`, `lambda = E nu / ((1+nu)(1-2nu))`.
pub fn lame(e: f64, nu: f64) -> (f64, f64) {
    (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
}

/// Checked variant of [`lame`] for arbitrary configuration input.
pub fn lame_checked(e: f64, nu: f64) -> Result<(f64, f64)> {
    check_poisson(nu)?;
    if e <= 0.0 {
        return Err(Error::Input(format!("Young's modulus {e} must be positive")));
    }
    Ok(lame(e, nu))
}
