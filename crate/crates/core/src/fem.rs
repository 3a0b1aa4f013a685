//! Bilinear finite elements on uniform square meshes of the unit square.
//!
//! Nodes are stored on the full `(n + 1) x (n + 1)` grid including the
//! boundary, which stays zero; the stiffness matrix is kept as nine stencil
//! arrays, so no sparse format is needed.

use crate::error::{Error, Result};
use crate::field::{FieldSpec, GridCoefficient};

/// Offset between the level index and the mesh exponent: `h = 2^-(level + 1)`.
pub const LEVEL_OFFSET: u32 = 1;

/// Default relative residual tolerance of the conjugate gradient solver.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Finest supported level (`h = 2^-13`).
pub const MAX_LEVEL: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshLevel {
    level: u32,
}

impl MeshLevel {
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange { level: level as usize, finest: MAX_LEVEL as usize });
        }
        Ok(MeshLevel { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_per_side(&self) -> usize {
        1 << (self.level + LEVEL_OFFSET)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_per_side() as f64
    }

    pub fn dof_count(&self) -> usize {
        let n = self.n_per_side() - 1;
        n * n
    }
}

/// Element quadrature: Gauss rule with 2 or 3 points per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadOrder {
    Two,
    Three,
}

impl QuadOrder {
    pub fn from_points(points: u32) -> Result<Self> {
        match points {
            2 => Ok(QuadOrder::Two),
            3 => Ok(QuadOrder::Three),
            _ => Err(Error::Config(format!("quadrature order must be 2 or 3, got {points}"))),
        }
    }

    /// Points and weights on `[0, 1]`.
    fn rule(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            QuadOrder::Two => {
                let d = 0.5 / 3f64.sqrt();
                (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5])
            }
            QuadOrder::Three => {
                let d = 0.5 * 0.6f64.sqrt();
                (vec![0.5 - d, 0.5, 0.5 + d], vec![5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub quad: QuadOrder,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: DEFAULT_TOLERANCE, quad: QuadOrder::Two }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subdomain {
    /// `(0, 1/2)^2`, where the observation is taken.
    LowerLeft,
    /// `(1/2, 1)^2`, where the quantity of interest is taken.
    UpperRight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    /// `f(x) = 100 x1`
    Linear,
    Constant(f64),
}

impl Forcing {
    fn eval(self, x1: f64) -> f64 {
        match self {
            Forcing::Linear => 100.0 * x1,
            Forcing::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outputs {
    pub qoi: f64,
    pub observation: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteForwardSolution {
    pub level: MeshLevel,
    /// Nodal values on the full grid, `values[j * (n + 1) + i]` at `(i h, j h)`.
    pub values: Vec<f64>,
    pub qoi: f64,
    pub observation: f64,
    /// `q^T A q`
    pub energy: f64,
    pub iterations: usize,
}

/// Scratch buffers for one solve; reuse across samples on the same level.
#[derive(Debug, Clone)]
pub struct Workspace {
    coefficient: Vec<f64>,
    stencil: [Vec<f64>; 9],
    diag_inv: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    iterations: usize,
}

/// Everything about a level that does not depend on the parameter.
#[derive(Debug, Clone)]
pub struct LevelSolver {
    mesh: MeshLevel,
    options: SolverOptions,
    grid: GridCoefficient,
    weights: Vec<f64>,
    /// local[qx * nq + qy][a][b], weight included
    local: Vec<[[f64; 4]; 4]>,
    load: Vec<f64>,
    qoi_weights: Vec<f64>,
    observation_weights: Vec<f64>,
}

const NODE_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn stencil_slot(a: usize, b: usize) -> usize {
    let (ax, ay) = NODE_OFFSETS[a];
    let (bx, by) = NODE_OFFSETS[b];
    ((by + 1 - ay) * 3) + (bx + 1 - ax)
}

impl LevelSolver {
    pub fn new(spec: &FieldSpec, mesh: MeshLevel, options: SolverOptions) -> Self {
        Self::with_forcing(spec, mesh, options, Forcing::Linear)
    }

    /// Replaces the load `100 x1`. Intended for tests.
    #[doc(hidden)]
    pub fn with_forcing(spec: &FieldSpec, mesh: MeshLevel, options: SolverOptions, forcing: Forcing) -> Self {
        let n = mesh.n_per_side();
        let h = mesh.h();
        let (points, weights) = options.quad.rule();
        let nq = points.len();
        let coords: Vec<f64> = (0..n)
            .flat_map(|e| points.iter().map(move |&p| (e as f64 + p) * h))
            .collect();
        let shape = |a: usize, xi: f64, eta: f64| {
            let (ax, ay) = NODE_OFFSETS[a];
            let fx = if ax == 1 { xi } else { 1.0 - xi };
            let fy = if ay == 1 { eta } else { 1.0 - eta };
            (fx * fy, (2.0 * ax as f64 - 1.0) * fy, fx * (2.0 * ay as f64 - 1.0))
        };
        let mut local = Vec::with_capacity(nq * nq);
        for qx in 0..nq {
            for qy in 0..nq {
                let w = weights[qx] * weights[qy];
                let mut k = [[0.0; 4]; 4];
                for (a, row) in k.iter_mut().enumerate() {
                    let (_, ax, ay) = shape(a, points[qx], points[qy]);
                    for (b, entry) in row.iter_mut().enumerate() {
                        let (_, bx, by) = shape(b, points[qx], points[qy]);
                        *entry = w * (ax * bx + ay * by);
                    }
                }
                local.push(k);
            }
        }
        let side = n + 1;
        let mut load = vec![0.0; side * side];
        for e2 in 0..n {
            for e1 in 0..n {
                for qx in 0..nq {
                    for qy in 0..nq {
                        let x1 = (e1 as f64 + points[qx]) * h;
                        let fw = forcing.eval(x1) * weights[qx] * weights[qy] * h * h;
                        for (a, &(ax, ay)) in NODE_OFFSETS.iter().enumerate() {
                            let (phi, _, _) = shape(a, points[qx], points[qy]);
                            load[(e2 + ay) * side + e1 + ax] += fw * phi;
                        }
                    }
                }
            }
        }
        clear_boundary(&mut load, side);
        let qoi_weights = subdomain_weights(n, Subdomain::UpperRight);
        let observation_weights = subdomain_weights(n, Subdomain::LowerLeft);
        LevelSolver {
            mesh,
            options,
            grid: GridCoefficient::new(spec, coords),
            weights,
            local,
            load,
            qoi_weights,
            observation_weights,
        }
    }

    pub fn mesh(&self) -> MeshLevel {
        self.mesh
    }

    pub fn workspace(&self) -> Workspace {
        let side = self.mesh.n_per_side() + 1;
        let nodes = side * side;
        let ng = self.grid.coords().len();
        Workspace {
            coefficient: vec![0.0; ng * ng],
            stencil: std::array::from_fn(|_| vec![0.0; nodes]),
            diag_inv: vec![0.0; nodes],
            u: vec![0.0; nodes],
            r: vec![0.0; nodes],
            z: vec![0.0; nodes],
            p: vec![0.0; nodes],
            ap: vec![0.0; nodes],
            iterations: 0,
        }
    }

    /// Solves for the parameter `y` and returns both functionals. The nodal
    /// solution stays in the workspace.
    pub fn solve_with(&self, y: &[f64], ws: &mut Workspace) -> Result<Outputs> {
        self.assemble(y, ws)?;
        self.pcg(ws)?;
        Ok(Outputs {
            qoi: dot(&self.qoi_weights, &ws.u),
            observation: dot(&self.observation_weights, &ws.u),
        })
    }

    pub fn solve(&self, y: &[f64]) -> Result<DiscreteForwardSolution> {
        let mut ws = self.workspace();
        let out = self.solve_with(y, &mut ws)?;
        Ok(DiscreteForwardSolution {
            level: self.mesh,
            energy: dot(&self.load, &ws.u),
            iterations: ws.iterations,
            values: ws.u,
            qoi: out.qoi,
            observation: out.observation,
        })
    }

    /// Assembled stencil of the last solve; `stencil[(dj + 1) * 3 + di + 1]`
    /// couples node `(i, j)` to `(i + di, j + dj)`.
    pub fn assembled<'a>(&self, ws: &'a Workspace) -> &'a [Vec<f64>; 9] {
        &ws.stencil
    }

    fn assemble(&self, y: &[f64], ws: &mut Workspace) -> Result<()> {
        self.grid.evaluate(y, &mut ws.coefficient)?;
        let n = self.mesh.n_per_side();
        let side = n + 1;
        let nq = self.weights.len();
        let ng = n * nq;
        for s in ws.stencil.iter_mut() {
            s.fill(0.0);
        }
        for e2 in 0..n {
            for e1 in 0..n {
                let mut k = [[0.0; 4]; 4];
                for qx in 0..nq {
                    for qy in 0..nq {
                        let c = ws.coefficient[(e1 * nq + qx) * ng + e2 * nq + qy];
                        let lk = &self.local[qx * nq + qy];
                        for a in 0..4 {
                            for b in 0..4 {
                                k[a][b] += c * lk[a][b];
                            }
                        }
                    }
                }
                for (a, &(ax, ay)) in NODE_OFFSETS.iter().enumerate() {
                    let node = (e2 + ay) * side + e1 + ax;
                    for (b, &kab) in k[a].iter().enumerate() {
                        ws.stencil[stencil_slot(a, b)][node] += kab;
                    }
                }
            }
        }
        // Dirichlet rows and columns: decouple boundary nodes
        for j in 0..side {
            for i in 0..side {
                let node = j * side + i;
                let interior = i > 0 && i < n && j > 0 && j < n;
                if !interior {
                    for s in ws.stencil.iter_mut() {
                        s[node] = 0.0;
                    }
                    ws.diag_inv[node] = 0.0;
                    continue;
                }
                for dj in 0..3 {
                    for di in 0..3 {
                        let (ni, nj) = (i + di - 1, j + dj - 1);
                        if ni == 0 || ni == n || nj == 0 || nj == n {
                            ws.stencil[dj * 3 + di][node] = 0.0;
                        }
                    }
                }
                ws.diag_inv[node] = 1.0 / ws.stencil[4][node];
            }
        }
        Ok(())
    }

    fn apply(&self, stencil: &[Vec<f64>; 9], x: &[f64], out: &mut [f64]) {
        let n = self.mesh.n_per_side();
        let side = n + 1;
        for j in 1..n {
            for i in 1..n {
                let node = j * side + i;
                let mut acc = 0.0;
                for dj in 0..3 {
                    let row = node + dj * side - side;
                    for di in 0..3 {
                        acc += stencil[dj * 3 + di][node] * x[row + di - 1];
                    }
                }
                out[node] = acc;
            }
        }
    }

    fn pcg(&self, ws: &mut Workspace) -> Result<()> {
        let b = &self.load;
        let b_norm = dot(b, b).sqrt();
        ws.u.fill(0.0);
        ws.iterations = 0;
        if b_norm == 0.0 {
            return Ok(());
        }
        ws.r.copy_from_slice(b);
        for ((z, r), d) in ws.z.iter_mut().zip(&ws.r).zip(&ws.diag_inv) {
            *z = r * d;
        }
        ws.p.copy_from_slice(&ws.z);
        let mut rz = dot(&ws.r, &ws.z);
        let threshold = self.options.tolerance * b_norm;
        let max_iterations = 10 * self.mesh.dof_count() + 50;
        let mut residual = b_norm;
        while ws.iterations < max_iterations {
            self.apply(&ws.stencil, &ws.p, &mut ws.ap);
            let alpha = rz / dot(&ws.p, &ws.ap);
            for k in 0..ws.u.len() {
                ws.u[k] += alpha * ws.p[k];
                ws.r[k] -= alpha * ws.ap[k];
            }
            ws.iterations += 1;
            residual = dot(&ws.r, &ws.r).sqrt();
            if residual <= threshold {
                return Ok(());
            }
            for ((z, r), d) in ws.z.iter_mut().zip(&ws.r).zip(&ws.diag_inv) {
                *z = r * d;
            }
            let rz_new = dot(&ws.r, &ws.z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (p, z) in ws.p.iter_mut().zip(&ws.z) {
                *p = z + beta * *p;
            }
        }
        Err(Error::SolverDiverged { residual: residual / b_norm, iterations: ws.iterations })
    }
}

fn clear_boundary(v: &mut [f64], side: usize) {
    for k in 0..side {
        v[k] = 0.0;
        v[(side - 1) * side + k] = 0.0;
        v[k * side] = 0.0;
        v[k * side + side - 1] = 0.0;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal weights `w` with `sum w_k q_k` the exact integral of the bilinear
/// interpolant over the subdomain.
fn subdomain_weights(n: usize, subdomain: Subdomain) -> Vec<f64> {
    let side = n + 1;
    let h = 1.0 / n as f64;
    let half = n / 2;
    let range = match subdomain {
        Subdomain::LowerLeft => 0..half,
        Subdomain::UpperRight => half..n,
    };
    let mut w = vec![0.0; side * side];
    for e2 in range.clone() {
        for e1 in range.clone() {
            for &(ax, ay) in &NODE_OFFSETS {
                w[(e2 + ay) * side + e1 + ax] += 0.25 * h * h;
            }
        }
    }
    w
}

/// Exact integral of the bilinear interpolant of full-grid nodal values
/// over a subdomain.
pub fn functional(values: &[f64], mesh: MeshLevel, subdomain: Subdomain) -> f64 {
    dot(&subdomain_weights(mesh.n_per_side(), subdomain), values)
}

/// One-shot solve at a level with default options.
pub fn assemble_and_solve(spec: &FieldSpec, y: &[f64], mesh: MeshLevel) -> Result<DiscreteForwardSolution> {
    LevelSolver::new(spec, mesh, SolverOptions::default()).solve(y)
}
