//! Manufactured-solution convergence harness.
//!
//! With `E = 1` the exact field `u* = (sin(pi x) sin(pi y), x(1-x) y(1-y))`
//! solves `-div sigma(u*) = f` for the load computed in [`body_force`].

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::field::{KLField, ParamVector};

use super::{ForwardModel, P2Space, SolverOptions};

fn p(t: f64) -> f64 {
    t * (1.0 - t)
}

fn dp(t: f64) -> f64 {
    1.0 - 2.0 * t
}

pub fn exact(x: [f64; 2]) -> [f64; 2] {
    [(PI * x[0]).sin() * (PI * x[1]).sin(), p(x[0]) * p(x[1])]
}

/// `-mu lap u - (mu + lambda) grad div u` for [`exact`] at modulus one.
pub fn body_force(nu: f64) -> impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + Copy {
    let (mu, lam) = crate::field::lame(1.0, nu);
    move |x: [f64; 2]| {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
        let pi2 = PI * PI;
        let f1 = 2.0 * mu * pi2 * sx * sy + (mu + lam) * (pi2 * sx * sy - dp(x[0]) * dp(x[1]));
        let f2 = 2.0 * mu * (p(x[0]) + p(x[1])) - (mu + lam) * (pi2 * cx * cy - 2.0 * p(x[0]));
        [f1, f2]
    }
}

/// `int (u1* + u2*) dx = 4 / pi^2 + 1 / 36`.
pub fn exact_qoi() -> f64 {
    4.0 / (PI * PI) + 1.0 / 36.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemRow {
    pub n: usize,
    pub h: f64,
    pub l2_error: f64,
    pub qoi_error: f64,
    pub l2_eoc: Option<f64>,
    pub qoi_eoc: Option<f64>,
}

/// Solves the manufactured problem on each uniform mesh and reports errors
/// with the observed order between successive meshes.
pub fn convergence_study(ns: &[usize], nu: f64) -> Result<Vec<FemRow>> {
    study_with(ns, nu, exact, Arc::new(body_force(nu)), exact_qoi())
}

pub(crate) fn study_with(
    ns: &[usize],
    nu: f64,
    solution: impl Fn([f64; 2]) -> [f64; 2] + Copy,
    force: super::BodyForce,
    qoi: f64,
) -> Result<Vec<FemRow>> {
    let field = KLField::sine_product(1, nu)?;
    let mut rows: Vec<FemRow> = Vec::with_capacity(ns.len());
    for &n in ns {
        let space = P2Space::uniform(n)?;
        let h = space.mesh().h();
        let model = ForwardModel::new(space, field.clone(), Arc::clone(&force), SolverOptions::default());
        let u = model.forward(&ParamVector::zeros(1))?;
        let l2_error = u.l2_error(solution, 6);
        let qoi_error = (u.qoi_integral() - qoi).abs();
        let (l2_eoc, qoi_eoc) = match rows.last() {
            Some(prev) => {
                let r = (prev.h / h).ln();
                (
                    Some((prev.l2_error / l2_error).ln() / r),
                    Some((prev.qoi_error / qoi_error).ln() / r),
                )
            }
            None => (None, None),
        };
        rows.push(FemRow {
            n,
            h,
            l2_error,
            qoi_error,
            l2_eoc,
            qoi_eoc,
        });
    }
    Ok(rows)
}
