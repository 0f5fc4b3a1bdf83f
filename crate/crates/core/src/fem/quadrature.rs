//! Quadrature rules on the reference triangle and on intervals.

/// A rule in barycentric coordinates; weights sum to one, so integrals are
/// `area * sum_q w_q f(x_q)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Seven-point symmetric rule, exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let sq = 15f64.sqrt();
        let a1 = (6.0 - sq) / 21.0;
        let a2 = (6.0 + sq) / 21.0;
        let w1 = (155.0 - sq) / 1200.0;
        let w2 = (155.0 + sq) / 1200.0;
        let third = 1.0 / 3.0;
        let mut points = vec![[third, third, third]];
        let mut weights = vec![9.0 / 40.0];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[a, a, b], [a, b, a], [b, a, a]]);
            weights.extend([w, w, w]);
        }
        TriangleRule { points, weights }
    }

    /// Collapsed (Duffy) tensor Gauss rule with `k^2` points, exact to degree `2k - 2`.
    pub fn collapsed_gauss(k: usize) -> Self {
        let (x, w) = gauss_legendre(k);
        let mut points = Vec::with_capacity(k * k);
        let mut weights = Vec::with_capacity(k * k);
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            for (xj, wj) in x.iter().zip(&w) {
                let v = 0.5 * (xj + 1.0);
                let l1 = u;
                let l2 = (1.0 - u) * v;
                points.push([1.0 - l1 - l2, l1, l2]);
                // reference area 1/2 normalised away
                weights.push(0.5 * wi * wj * (1.0 - u));
            }
        }
        TriangleRule { points, weights }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
