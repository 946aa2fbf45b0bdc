//! Finite-difference solution operator of the Neumann problem
//! `div(k u') − a u = f` on `[0, L]`, its eigenbasis, the spectral
//! projection onto the first `m` eigenfunctions, and the composed map
//! `x ↦ P_m K φ(x)(μ)`.
//!
//! The discrete operator `A ≈ −ℒ` uses the conservative three-point stencil
//! with ghost-node reflection at both ends. Halving the two boundary rows
//! gives the symmetric matrix `S = W A` with `W = diag(½, 1, …, 1, ½)`, and
//! `h W` is the trapezoid mass matrix, so `A` is self-adjoint in the
//! trapezoid inner product.

mod tridiag;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GrkbsError, Result};
use crate::feature::{ConfigurationMap, FeatureMapConfig};
use crate::measure::ParameterBox;

pub use tridiag::{eigen_symmetric, solve_symmetric};

/// Coefficients of the elliptic problem sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticProblem {
    length: f64,
    k_nodes: Vec<f64>,
    /// `k` at the cell midpoints `y_{j+1/2}`.
    k_mid: Vec<f64>,
    a_nodes: Vec<f64>,
}

impl EllipticProblem {
    /// Samples `k` at nodes and midpoints and `a` at nodes.
    pub fn from_fns(
        length: f64,
        grid_points: usize,
        k: impl Fn(f64) -> f64,
        a: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        check_grid(length, grid_points)?;
        let h = length / (grid_points - 1) as f64;
        let k_nodes = (0..grid_points).map(|j| k(j as f64 * h)).collect();
        let k_mid = (0..grid_points - 1)
            .map(|j| k((j as f64 + 0.5) * h))
            .collect();
        let a_nodes = (0..grid_points).map(|j| a(j as f64 * h)).collect();
        Self::validated(length, k_nodes, k_mid, a_nodes)
    }

    pub fn constant(length: f64, grid_points: usize, k: f64, a: f64) -> Result<Self> {
        Self::from_fns(length, grid_points, |_| k, |_| a)
    }

    /// Nodal samples only; midpoint values of `k` are nodal averages.
    pub fn from_samples(length: f64, k_nodes: Vec<f64>, a_nodes: Vec<f64>) -> Result<Self> {
        check_grid(length, k_nodes.len())?;
        if a_nodes.len() != k_nodes.len() {
            return Err(GrkbsError::Dimension {
                what: "a(y) samples",
                expected: k_nodes.len(),
                got: a_nodes.len(),
            });
        }
        let k_mid = k_nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::validated(length, k_nodes, k_mid, a_nodes)
    }

    fn validated(
        length: f64,
        k_nodes: Vec<f64>,
        k_mid: Vec<f64>,
        a_nodes: Vec<f64>,
    ) -> Result<Self> {
        for (what, values) in [("k", &k_nodes), ("k", &k_mid), ("a", &a_nodes)] {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(GrkbsError::InvalidArgument(format!(
                    "coefficient {what} must be positive, got sample {v}"
                )));
            }
        }
        Ok(Self {
            length,
            k_nodes,
            k_mid,
            a_nodes,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn grid_points(&self) -> usize {
        self.a_nodes.len()
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.grid_points() - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.grid_points()).map(|j| j as f64 * h).collect()
    }

    pub fn k_nodes(&self) -> &[f64] {
        &self.k_nodes
    }

    pub fn a_nodes(&self) -> &[f64] {
        &self.a_nodes
    }
}

fn check_grid(length: f64, grid_points: usize) -> Result<()> {
    if grid_points < 3 {
        return Err(GrkbsError::InvalidArgument(format!(
            "need at least 3 grid points, got {grid_points}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(GrkbsError::InvalidArgument(format!(
            "domain length must be positive, got {length}"
        )));
    }
    Ok(())
}

/// Symmetric tridiagonal discretization of `−ℒ` with Neumann closure.
#[derive(Debug, Clone)]
pub struct DiscreteEllipticOperator {
    problem: EllipticProblem,
    diag: Vec<f64>,
    off: Vec<f64>,
    mass_weights: Vec<f64>,
}

impl DiscreteEllipticOperator {
    pub fn assemble(problem: EllipticProblem) -> Self {
        let n = problem.grid_points();
        let h = problem.spacing();
        let h2 = h * h;
        let off: Vec<f64> = problem.k_mid.iter().map(|k| -k / h2).collect();
        let mut diag = vec![0.0; n];
        for (j, w) in problem.k_mid.windows(2).enumerate() {
            diag[j + 1] = (w[0] + w[1]) / h2 + problem.a_nodes[j + 1];
        }
        // reflected ghost node doubles the boundary flux; half-weighting undoes it
        diag[0] = problem.k_mid[0] / h2 + 0.5 * problem.a_nodes[0];
        diag[n - 1] = problem.k_mid[n - 2] / h2 + 0.5 * problem.a_nodes[n - 1];
        let mut mass_weights = vec![h; n];
        mass_weights[0] = 0.5 * h;
        mass_weights[n - 1] = 0.5 * h;
        Self {
            problem,
            diag,
            off,
            mass_weights,
        }
    }

    pub fn problem(&self) -> &EllipticProblem {
        &self.problem
    }

    pub fn grid_points(&self) -> usize {
        self.diag.len()
    }

    /// Diagonal of the symmetric matrix `S`.
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal of `S`.
    pub fn off_diagonal(&self) -> &[f64] {
        &self.off
    }

    pub fn mass_weights(&self) -> &[f64] {
        &self.mass_weights
    }

    /// Dense copy of `S`, for inspection.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.grid_points();
        let mut s = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = self.diag[i];
            if i + 1 < n {
                s[(i, i + 1)] = self.off[i];
                s[(i + 1, i)] = self.off[i];
            }
        }
        s
    }

    fn row_weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.grid_points() {
            0.5
        } else {
            1.0
        }
    }

    /// `(−ℒ_h) u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid_points();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j] * u[j];
                if j > 0 {
                    s += self.off[j - 1] * u[j - 1];
                }
                if j + 1 < n {
                    s += self.off[j] * u[j + 1];
                }
                s / self.row_weight(j)
            })
            .collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid_points() {
            return Err(GrkbsError::Dimension {
                what: "grid function",
                expected: self.grid_points(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Discrete solution operator: returns `u` with `ℒ_h u = f`, that is
    /// `(−ℒ_h) u = −f`.
    pub fn solve_k(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let rhs: Vec<f64> = f
            .iter()
            .enumerate()
            .map(|(j, fj)| -fj * self.row_weight(j))
            .collect();
        solve_symmetric(&self.diag, &self.off, &rhs)
    }

    /// Max-norm residual `‖ℒ_h u − f‖_∞`.
    pub fn residual(&self, u: &[f64], f: &[f64]) -> f64 {
        self.apply(u)
            .iter()
            .zip(f)
            .map(|(au, fj)| (au + fj).abs())
            .fold(0.0, f64::max)
    }

    /// Trapezoid inner product `⟨u, v⟩_h`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.mass_weights, u, v)
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Discrete `H¹` norm: trapezoid `L²` part plus squared forward
    /// differences.
    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        let h = self.problem.spacing();
        let grad2: f64 = u.windows(2).map(|w| (w[1] - w[0]).powi(2) / h).sum();
        (self.inner(u, u) + grad2).sqrt()
    }

    /// Measured stability ratio `‖K f‖_{H¹} / ‖f‖_{L²}` for one forcing.
    pub fn stability_ratio(&self, f: &[f64]) -> Result<f64> {
        let u = self.solve_k(f)?;
        let denom = self.l2_norm(f);
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(self.h1_norm(&u) / denom)
    }

    /// The `count` smallest eigenpairs of `−ℒ_h`.
    pub fn eigenbasis(&self, count: usize) -> Result<EigenBasis> {
        let n = self.grid_points();
        if count == 0 || count > n {
            return Err(GrkbsError::InvalidArgument(format!(
                "eigenbasis size must lie in 1..={n}, got {count}"
            )));
        }
        // T = W^{-1/2} S W^{-1/2} has the spectrum of A = W^{-1} S
        let root: Vec<f64> = (0..n).map(|j| self.row_weight(j).sqrt()).collect();
        let t_diag: Vec<f64> = (0..n).map(|j| self.diag[j] / (root[j] * root[j])).collect();
        let t_off: Vec<f64> = (0..n - 1)
            .map(|j| self.off[j] / (root[j] * root[j + 1]))
            .collect();
        let (values, vectors) = eigen_symmetric(&t_diag, &t_off)?;
        let h_root = self.problem.spacing().sqrt();
        let vectors = vectors
            .into_iter()
            .take(count)
            .map(|z| {
                let mut psi: Vec<f64> = z
                    .iter()
                    .zip(&root)
                    .map(|(zj, r)| zj / (r * h_root))
                    .collect();
                if psi[0] < 0.0 {
                    psi.iter_mut().for_each(|p| *p = -*p);
                }
                psi
            })
            .collect();
        Ok(EigenBasis {
            values: values.into_iter().take(count).collect(),
            vectors,
            mass_weights: self.mass_weights.clone(),
        })
    }
}

fn weighted_inner(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    w.iter()
        .zip(u)
        .zip(v)
        .map(|((wi, ui), vi)| wi * ui * vi)
        .sum()
}

/// First `m` eigenpairs of `−ℒ_h`, orthonormal in the trapezoid inner
/// product. Each `ψⱼ` is signed so that `ψⱼ(0) ≥ 0`.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    mass_weights: Vec<f64>,
}

impl EigenBasis {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.mass_weights, u, v)
    }

    /// Coefficients `(⟨u, ψᵢ⟩)ᵢ`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.mass_weights.len() {
            return Err(GrkbsError::Dimension {
                what: "grid function",
                expected: self.mass_weights.len(),
                got: u.len(),
            });
        }
        Ok(self.vectors.iter().map(|psi| self.inner(u, psi)).collect())
    }

    /// `Σ cᵢ ψᵢ` as a grid function.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.mass_weights.len()];
        for (c, psi) in coefficients.iter().zip(&self.vectors) {
            for (uj, pj) in u.iter_mut().zip(psi) {
                *uj += c * pj;
            }
        }
        u
    }

    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|a| self.vectors.iter().map(|b| self.inner(a, b)).collect())
            .collect()
    }
}

/// Default charge profile `cos(π y / L)`.
pub fn default_profile(problem: &EllipticProblem) -> Vec<f64> {
    cosine_profile(problem, 1)
}

/// `cos(j π y / L)` sampled on the grid.
pub fn cosine_profile(problem: &EllipticProblem, j: usize) -> Vec<f64> {
    let l = problem.length();
    problem
        .nodes()
        .iter()
        .map(|y| (j as f64 * std::f64::consts::PI * y / l).cos())
        .collect()
}

/// The composed configuration map `x ↦ P_m K (φ(x)(μ) as a grid function)`.
///
/// The feature vector `φ(x)(μ) ∈ ℝʳ` becomes the forcing `Σ_k e_k g_k(y)`
/// through fixed grid profiles `g_k`. Since the chain is linear, each atom
/// contributes `ρ(x,θ)β(θ) · q` with the precomputed response
/// `q = P_m K (Σ_k e_k g_k)`, where `e` is the feature map's embedding.
#[derive(Debug, Clone)]
pub struct PmannMap {
    feature: FeatureMapConfig,
    operator: DiscreteEllipticOperator,
    basis: EigenBasis,
    profiles: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl PmannMap {
    /// Uses profiles `cos((k+1) π y / L)` for feature output `k`.
    pub fn new(
        feature: FeatureMapConfig,
        operator: DiscreteEllipticOperator,
        basis: EigenBasis,
    ) -> Result<Self> {
        let profiles = (0..feature.output_dim())
            .map(|k| cosine_profile(operator.problem(), k + 1))
            .collect();
        Self::with_profiles(feature, operator, basis, profiles)
    }

    pub fn with_profiles(
        feature: FeatureMapConfig,
        operator: DiscreteEllipticOperator,
        basis: EigenBasis,
        profiles: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if profiles.len() != feature.output_dim() {
            return Err(GrkbsError::Dimension {
                what: "profile count",
                expected: feature.output_dim(),
                got: profiles.len(),
            });
        }
        for p in &profiles {
            operator.check_len(p)?;
        }
        if basis.mass_weights.len() != operator.grid_points() {
            return Err(GrkbsError::Dimension {
                what: "eigenbasis grid",
                expected: operator.grid_points(),
                got: basis.mass_weights.len(),
            });
        }
        let mut map = Self {
            feature,
            operator,
            basis,
            profiles,
            response: Vec::new(),
        };
        let forcing = map.grid_forcing(&map.feature.embedding());
        map.response = map.basis.project(&map.operator.solve_k(&forcing)?)?;
        Ok(map)
    }

    pub fn feature(&self) -> &FeatureMapConfig {
        &self.feature
    }

    pub fn operator(&self) -> &DiscreteEllipticOperator {
        &self.operator
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.profiles
    }

    /// `P_m K` applied to the unit feature embedding.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Grid forcing `Σ_k e_k g_k` for a feature vector `e`.
    pub fn grid_forcing(&self, e: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.operator.grid_points()];
        for (ek, g) in e.iter().zip(&self.profiles) {
            for (fj, gj) in f.iter_mut().zip(g) {
                *fj += ek * gj;
            }
        }
        f
    }
}

impl ConfigurationMap for PmannMap {
    fn input_dim(&self) -> usize {
        self.feature.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.basis.count()
    }

    fn param_box(&self) -> &ParameterBox {
        self.feature.param_box()
    }

    fn atom_feature_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let s = self.feature.scalar_feature(x, theta);
        for (o, q) in out.iter_mut().zip(&self.response) {
            *o = s * q;
        }
    }

    fn atom_feature_grad(&self, x: &[f64], theta: &[f64], value: &mut [f64], jac: &mut [f64]) {
        let dim = self.param_box().dim();
        let mut grad = vec![0.0; dim];
        let s = self.feature.scalar_feature_grad(x, theta, &mut grad);
        for (k, q) in self.response.iter().enumerate() {
            value[k] = s * q;
            for j in 0..dim {
                jac[k * dim + j] = grad[j] * q;
            }
        }
    }
}

/// One row of a grid-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub grid_points: usize,
    pub h: f64,
    pub max_error: f64,
    /// Error of the previous (coarser) row divided by this row's error.
    pub ratio: Option<f64>,
}

/// Max-norm error of the discrete solution against `u = cos(π y / L)` for
/// constant coefficients, whose forcing is `f = −(k π²/L² + a) cos(π y / L)`.
pub fn manufactured_cosine_error(length: f64, grid_points: usize, k: f64, a: f64) -> Result<f64> {
    let problem = EllipticProblem::constant(length, grid_points, k, a)?;
    let omega = std::f64::consts::PI / length;
    let exact: Vec<f64> = problem.nodes().iter().map(|y| (omega * y).cos()).collect();
    let f: Vec<f64> = exact.iter().map(|u| -(k * omega * omega + a) * u).collect();
    let op = DiscreteEllipticOperator::assemble(problem);
    let u = op.solve_k(&f)?;
    Ok(u.iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn convergence_study(
    length: f64,
    k: f64,
    a: f64,
    grids: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grids.len());
    for &m in grids {
        let max_error = manufactured_cosine_error(length, m, k, a)?;
        let ratio = rows.last().map(|prev| prev.max_error / max_error);
        rows.push(ConvergenceRow {
            grid_points: m,
            h: length / (m - 1) as f64,
            max_error,
            ratio,
        });
    }
    Ok(rows)
}

/// Writes `y,value` rows.
pub fn write_grid_csv(path: &Path, nodes: &[f64], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "value"])?;
    for (y, v) in nodes.iter().zip(values) {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `y,psi_1,…,psi_m` rows.
pub fn write_basis_csv(path: &Path, nodes: &[f64], basis: &EigenBasis) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=basis.count()).map(|i| format!("psi_{i}")));
    w.write_record(&header)?;
    for (j, y) in nodes.iter().enumerate() {
        let mut row = vec![y.to_string()];
        row.extend(basis.vectors().iter().map(|psi| psi[j].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
