//! Conforming P2 finite elements for parametric plane linear elasticity with
//! homogeneous Dirichlet conditions on the unit square.

pub mod manufactured;
mod mesh;
pub mod quadrature;
pub mod solver;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

pub use mesh::TriMeshP2;
pub use solver::{Pattern, SolveStats, SolverKind, SolverOptions, SparseSpd};

use crate::error::{Error, Result};
use crate::field::{KLField, ParamVector};
use quadrature::TriangleRule;

pub type BodyForce = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// `f(x) = (2 x1 + 10, x2 - 3)`.
pub fn default_body_force() -> BodyForce {
    Arc::new(|x: [f64; 2]| [2.0 * x[0] + 10.0, x[1] - 3.0])
}

/// P2 shape function values at barycentric point `l`, local order
/// `[v0, v1, v2, m01, m12, m20]`.
pub fn shape_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

fn shape_gradients(l: [f64; 3], gl: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * gl[i][d];
        }
    }
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (l[i] * gl[j][d] + l[j] * gl[i][d]);
        }
    }
    g
}

/// Constant gradients of the barycentric coordinates on triangle `t`.
fn barycentric_gradients(mesh: &TriMeshP2, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.corners(t);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
    let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
    [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
}

fn physical_point(mesh: &TriMeshP2, t: usize, l: [f64; 3]) -> [f64; 2] {
    let [a, b, c] = mesh.corners(t);
    [
        l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
        l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
    ]
}

/// Numbering of the free (non-Dirichlet) degrees of freedom.
///
/// Free nodes are ordered by `(x2, x1)` which keeps the matrix envelope
/// narrow on structured meshes; the two components of a node are adjacent.
#[derive(Debug, Clone)]
pub struct DofMap {
    node_dof: Vec<Option<usize>>,
    num_free: usize,
}

impl DofMap {
    pub fn new(mesh: &TriMeshP2) -> Self {
        let mut order: Vec<usize> = (0..mesh.nodes().len())
            .filter(|&k| !mesh.is_boundary(k))
            .collect();
        let nodes = mesh.nodes();
        order.sort_by(|&a, &b| {
            nodes[a][1]
                .total_cmp(&nodes[b][1])
                .then(nodes[a][0].total_cmp(&nodes[b][0]))
        });
        let mut node_dof = vec![None; nodes.len()];
        for (rank, &k) in order.iter().enumerate() {
            node_dof[k] = Some(2 * rank);
        }
        DofMap {
            node_dof,
            num_free: 2 * order.len(),
        }
    }

    /// Global free index of component `comp` at `node`, `None` when constrained.
    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.node_dof[node].map(|b| b + comp)
    }

    pub fn num_free(&self) -> usize {
        self.num_free
    }

    pub fn num_constrained(&self) -> usize {
        2 * self.node_dof.iter().filter(|d| d.is_none()).count()
    }
}

/// Mesh, degree-of-freedom map and matrix pattern; shared by every solve.
#[derive(Debug)]
pub struct P2Space {
    mesh: TriMeshP2,
    dofs: DofMap,
    pattern: Arc<Pattern>,
    // local dof (2a + c) of each element -> free index
    elem_dofs: Vec<[Option<usize>; 12]>,
    // local (row, col) of each element -> value slot in the pattern
    scatter: Vec<Vec<usize>>,
}

impl P2Space {
    pub fn new(mesh: TriMeshP2) -> Arc<Self> {
        let dofs = DofMap::new(&mesh);
        let elem_dofs: Vec<[Option<usize>; 12]> = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut d = [None; 12];
                for (a, &node) in tri.iter().enumerate() {
                    for c in 0..2 {
                        d[2 * a + c] = dofs.dof(node, c);
                    }
                }
                d
            })
            .collect();
        let mut rows = vec![Vec::new(); dofs.num_free()];
        for ed in &elem_dofs {
            for i in ed.iter().flatten() {
                rows[*i].extend(ed.iter().flatten());
            }
        }
        let pattern = Arc::new(Pattern::from_rows(rows));
        let scatter = elem_dofs
            .iter()
            .map(|ed| {
                let mut s = vec![usize::MAX; 144];
                for (r, di) in ed.iter().enumerate() {
                    for (c, dj) in ed.iter().enumerate() {
                        if let (Some(i), Some(j)) = (di, dj) {
                            s[12 * r + c] = pattern.position(*i, *j).expect("pattern covers element");
                        }
                    }
                }
                s
            })
            .collect();
        Arc::new(P2Space {
            mesh,
            dofs,
            pattern,
            elem_dofs,
            scatter,
        })
    }

    pub fn uniform(n: usize) -> Result<Arc<Self>> {
        Ok(Self::new(TriMeshP2::uniform(n)?))
    }

    pub fn mesh(&self) -> &TriMeshP2 {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Coefficients of the P2 interpolant of `w`, over the free dofs.
    pub fn interpolate(&self, w: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.dofs.num_free()];
        for (k, p) in self.mesh.nodes().iter().enumerate() {
            let v = w(*p);
            for (c, vc) in v.into_iter().enumerate() {
                if let Some(i) = self.dofs.dof(k, c) {
                    u[i] = vc;
                }
            }
        }
        u
    }
}

/// Per-solve metadata.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub relative_residual: f64,
    pub iterations: usize,
    pub params: Option<ParamVector>,
}

/// A P2 displacement field stored by its free coefficients; the boundary
/// trace is zero by construction.
#[derive(Debug, Clone)]
pub struct Displacement {
    space: Arc<P2Space>,
    coeffs: Vec<f64>,
    pub info: SolveInfo,
}

impl Displacement {
    pub fn from_coeffs(space: Arc<P2Space>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dofs.num_free() {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, space has {} free dofs",
                coeffs.len(),
                space.dofs.num_free()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("displacement has non-finite coefficients".into()));
        }
        Ok(Displacement {
            space,
            coeffs,
            info: SolveInfo {
                relative_residual: 0.0,
                iterations: 0,
                params: None,
            },
        })
    }

    pub fn zero(space: Arc<P2Space>) -> Self {
        let n = space.dofs.num_free();
        Self::from_coeffs(space, vec![0.0; n]).expect("zero field is valid")
    }

    pub fn space(&self) -> &Arc<P2Space> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at mesh node `k`.
    pub fn nodal(&self, k: usize) -> [f64; 2] {
        let d = &self.space.dofs;
        [0, 1].map(|c| d.dof(k, c).map_or(0.0, |i| self.coeffs[i]))
    }

    fn element_values(&self, t: usize) -> [[f64; 2]; 6] {
        let ed = &self.space.elem_dofs[t];
        let mut v = [[0.0; 2]; 6];
        for (a, va) in v.iter_mut().enumerate() {
            for (c, vc) in va.iter_mut().enumerate() {
                *vc = ed[2 * a + c].map_or(0.0, |i| self.coeffs[i]);
            }
        }
        v
    }

    /// Point value of the interpolant.
    pub fn evaluate_at(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let mesh = &self.space.mesh;
        let t = mesh.locate(x)?;
        let n = shape_values(mesh.barycentric(t, x));
        let v = self.element_values(t);
        let mut out = [0.0; 2];
        for a in 0..6 {
            out[0] += n[a] * v[a][0];
            out[1] += n[a] * v[a][1];
        }
        Ok(out)
    }

    /// `int (u1 + u2) dx`.
    pub fn qoi_integral(&self) -> f64 {
        let rule = TriangleRule::degree5();
        let mesh = &self.space.mesh;
        let mut total = 0.0;
        for t in 0..mesh.triangles().len() {
            let v = self.element_values(t);
            let area = mesh.area(t);
            let mut local = 0.0;
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let n = shape_values(*l);
                local += w * (0..6).map(|a| n[a] * (v[a][0] + v[a][1])).sum::<f64>();
            }
            total += area * local;
        }
        total
    }

    /// `(int |u - w|^2 dx)^(1/2)` with a collapsed Gauss rule of `k^2` points per element.
    pub fn l2_error(&self, w: impl Fn([f64; 2]) -> [f64; 2], k: usize) -> f64 {
        let rule = TriangleRule::collapsed_gauss(k);
        let mesh = &self.space.mesh;
        let mut total = 0.0;
        for t in 0..mesh.triangles().len() {
            let v = self.element_values(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let n = shape_values(*l);
                let exact = w(physical_point(mesh, t, *l));
                let mut e2 = 0.0;
                for c in 0..2 {
                    let uh: f64 = (0..6).map(|a| n[a] * v[a][c]).sum();
                    e2 += (uh - exact[c]).powi(2);
                }
                total += area * wq * e2;
            }
        }
        total.sqrt()
    }

    /// CSV of node coordinates and values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("x,y,u1,u2\n");
        for (k, p) in self.space.mesh.nodes().iter().enumerate() {
            let u = self.nodal(k);
            let _ = writeln!(out, "{:e},{:e},{:e},{:e}", p[0], p[1], u[0], u[1]);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl std::ops::Add for &Displacement {
    type Output = Displacement;

    fn add(self, rhs: &Displacement) -> Displacement {
        assert!(Arc::ptr_eq(&self.space, &rhs.space), "displacements live on different spaces");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        Displacement::from_coeffs(Arc::clone(&self.space), coeffs).expect("sum of finite fields")
    }
}

/// Assembles and solves the elasticity system for parameter vectors on a
/// fixed space, field and body force.
///
/// The modulus enters linearly, so the element matrix is
/// `sum_q E(x_q) U_q` with unit-modulus matrices `U_q` cached per element,
/// and the load vector is computed once.
pub struct ForwardModel {
    space: Arc<P2Space>,
    field: KLField,
    solver: SolverOptions,
    rule: TriangleRule,
    qp_x: Vec<[f64; 2]>,
    qp_mean: Vec<f64>,
    // row-major (qp, j) values of psi_j
    qp_terms: Vec<f64>,
    unit: Vec<[f64; 144]>,
    load: Vec<f64>,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("n", &self.space.mesh.n())
            .field("s", &self.field.s())
            .field("nu", &self.field.nu())
            .finish()
    }
}

impl ForwardModel {
    pub fn new(space: Arc<P2Space>, field: KLField, force: BodyForce, solver: SolverOptions) -> Self {
        let rule = TriangleRule::degree5();
        let mesh = &space.mesh;
        let nq = rule.points.len();
        let ntri = mesh.triangles().len();
        let (cmu, clam) = field.lame(1.0);

        let mut qp_x = Vec::with_capacity(ntri * nq);
        let mut unit = Vec::with_capacity(ntri * nq);
        let mut load = vec![0.0; space.dofs.num_free()];
        for t in 0..ntri {
            let gl = barycentric_gradients(mesh, t);
            let area = mesh.area(t);
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let x = physical_point(mesh, t, *l);
                qp_x.push(x);
                let g = shape_gradients(*l, &gl);
                let wa = w * area;
                let mut m = [0.0; 144];
                for a in 0..6 {
                    for c in 0..2 {
                        for b in 0..6 {
                            for d in 0..2 {
                                let grad_dot = if c == d { g[a][0] * g[b][0] + g[a][1] * g[b][1] } else { 0.0 };
                                let v = cmu * (grad_dot + g[a][d] * g[b][c]) + clam * g[a][c] * g[b][d];
                                m[12 * (2 * a + c) + 2 * b + d] = wa * v;
                            }
                        }
                    }
                }
                unit.push(m);
                let fx = force(x);
                let n = shape_values(*l);
                for a in 0..6 {
                    for c in 0..2 {
                        if let Some(i) = space.elem_dofs[t][2 * a + c] {
                            load[i] += wa * fx[c] * n[a];
                        }
                    }
                }
            }
        }
        let qp_mean = qp_x.iter().map(|&x| field.family().mean(x)).collect();
        let qp_terms = qp_x.iter().flat_map(|&x| field.terms_at(x)).collect();
        ForwardModel {
            space,
            field,
            solver,
            rule,
            qp_x,
            qp_mean,
            qp_terms,
            unit,
            load,
        }
    }

    /// Model with the default body force and solver settings.
    pub fn with_defaults(space: Arc<P2Space>, field: KLField) -> Self {
        Self::new(space, field, default_body_force(), SolverOptions::default())
    }

    pub fn space(&self) -> &Arc<P2Space> {
        &self.space
    }

    pub fn field(&self) -> &KLField {
        &self.field
    }

    fn modulus_at_qps(&self, y: &ParamVector) -> Result<Vec<f64>> {
        let s = self.field.s();
        if y.len() != s {
            return Err(Error::Input(format!(
                "parameter vector has length {}, field expects {s}",
                y.len()
            )));
        }
        let yv = y.values();
        let mut e = Vec::with_capacity(self.qp_mean.len());
        for (q, mean) in self.qp_mean.iter().enumerate() {
            let terms = &self.qp_terms[q * s..(q + 1) * s];
            let v = mean + terms.iter().zip(yv).map(|(p, y)| p * y).sum::<f64>();
            if !(v > 0.0) {
                let x = self.qp_x[q];
                return Err(Error::ModelViolation { value: v, x: x[0], y: x[1] });
            }
            e.push(v);
        }
        Ok(e)
    }

    /// Local 12x12 stiffness (row-major, local dof `2a + c`) of element `t`
    /// before boundary conditions are applied.
    pub fn element_stiffness(&self, t: usize, y: &ParamVector) -> Result<[f64; 144]> {
        let e = self.modulus_at_qps(y)?;
        Ok(self.element_from_moduli(t, &e))
    }

    fn element_from_moduli(&self, t: usize, e: &[f64]) -> [f64; 144] {
        let nq = self.rule.points.len();
        let mut k = [0.0; 144];
        for q in 0..nq {
            let eq = e[t * nq + q];
            for (kv, uv) in k.iter_mut().zip(&self.unit[t * nq + q]) {
                *kv += eq * uv;
            }
        }
        k
    }

    pub fn assemble(&self, y: &ParamVector) -> Result<SparseSpd> {
        let e = self.modulus_at_qps(y)?;
        let mut sys = SparseSpd::zeros(Arc::clone(&self.space.pattern));
        for (t, slots) in self.space.scatter.iter().enumerate() {
            let k = self.element_from_moduli(t, &e);
            for (slot, kv) in slots.iter().zip(&k) {
                if *slot != usize::MAX {
                    sys.values[*slot] += kv;
                }
            }
        }
        sys.rhs.copy_from_slice(&self.load);
        Ok(sys)
    }

    pub fn solve(&self, system: &SparseSpd) -> Result<Displacement> {
        solve(&self.space, system, &self.solver)
    }

    pub fn forward(&self, y: &ParamVector) -> Result<Displacement> {
        let sys = self.assemble(y)?;
        let mut u = self.solve(&sys)?;
        u.info.params = Some(y.clone());
        Ok(u)
    }
}

/// Solves an assembled system on `space`.
pub fn solve(space: &Arc<P2Space>, system: &SparseSpd, opts: &SolverOptions) -> Result<Displacement> {
    let (coeffs, stats) = solver::solve_system(system, opts)?;
    let mut u = Displacement::from_coeffs(Arc::clone(space), coeffs)?;
    u.info.relative_residual = stats.relative_residual;
    u.info.iterations = stats.iterations;
    Ok(u)
}
