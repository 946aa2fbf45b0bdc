//! Finite-dimensional checks on configuration maps.
//!
//! A [`FiniteConfig`] realizes `φ(xᵢ) : ℝᵏ → ℝᵐ` as matrices `A(xᵢ)` on a
//! finite input sample. On such a configuration the kernel `𝒩_φ = ⋂ ker A(xᵢ)`,
//! the quotient norm on `ℝᵏ / 𝒩_φ`, the minimal-norm RKBS norm, the kernel
//! evaluation and configuration equivalence all reduce to linear algebra.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrkbsError, Result};

/// Relative singular-value threshold below which a direction is null.
pub const NULL_THRESHOLD: f64 = 1e-10;
/// Consistency tolerance for targets in [`rkbs_norm`].
pub const RANGE_TOL: f64 = 1e-8;
/// Largest principal angle accepted as subspace equality.
pub const ANGLE_TOL: f64 = 1e-8;
/// Tolerance for norm preservation, coset invariance and commuting diagrams.
pub const IDENTITY_TOL: f64 = 1e-10;

const L1_STARTS: usize = 20;
const L1_STEPS: usize = 500;
const L1_SEED: u64 = 0x5eed_0001;
const EQUIVALENCE_TRIALS: usize = 100;
const EQUIVALENCE_SEED: u64 = 0x5eed_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Euclidean,
    L1,
}

impl NormKind {
    pub fn norm(self, v: &DVector<f64>) -> f64 {
        match self {
            NormKind::Euclidean => v.norm(),
            NormKind::L1 => v.lp_norm(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FiniteConfig {
    dim_f: usize,
    inputs: Vec<Vec<f64>>,
    maps: Vec<DMatrix<f64>>,
    norm_kind: NormKind,
}

impl FiniteConfig {
    pub fn new(
        dim_f: usize,
        inputs: Vec<Vec<f64>>,
        maps: Vec<DMatrix<f64>>,
        norm_kind: NormKind,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(GrkbsError::InvalidArgument(
                "configuration needs at least one input".into(),
            ));
        }
        if inputs.len() != maps.len() {
            return Err(GrkbsError::Dimension {
                what: "inputs vs maps",
                expected: maps.len(),
                got: inputs.len(),
            });
        }
        let m = maps[0].nrows();
        for a in &maps {
            if a.ncols() != dim_f || a.nrows() != m {
                return Err(GrkbsError::InvalidArgument(format!(
                    "every map must be {m}x{dim_f}, got {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        Ok(Self {
            dim_f,
            inputs,
            maps,
            norm_kind,
        })
    }

    /// Builds a configuration by evaluating `map` at every input.
    pub fn from_fn(
        dim_f: usize,
        inputs: Vec<Vec<f64>>,
        norm_kind: NormKind,
        map: impl Fn(&[f64]) -> DMatrix<f64>,
    ) -> Result<Self> {
        let maps = inputs.iter().map(|x| map(x)).collect();
        Self::new(dim_f, inputs, maps, norm_kind)
    }

    pub fn dim_f(&self) -> usize {
        self.dim_f
    }

    pub fn output_dim(&self) -> usize {
        self.maps[0].nrows()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    /// The `(s·m) × k` matrix of the sampling operator `μ ↦ (A(xᵢ) μ)ᵢ`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.output_dim();
        let mut out = DMatrix::zeros(m * self.maps.len(), self.dim_f);
        for (i, a) in self.maps.iter().enumerate() {
            out.view_mut((i * m, 0), (m, self.dim_f)).copy_from(a);
        }
        out
    }

    pub fn with_norm(mut self, norm_kind: NormKind) -> Self {
        self.norm_kind = norm_kind;
        self
    }
}

/// Orthonormal basis of `𝒩_φ` as the columns of `basis`.
#[derive(Debug, Clone)]
pub struct NullspaceBasis {
    pub basis: DMatrix<f64>,
}

impl NullspaceBasis {
    pub fn rank_deficiency(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projection of `v` onto the nullspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }
}

/// Right singular vectors of `a` whose singular values are at most
/// `NULL_THRESHOLD · σ_max` (with `σ_max = 1` when every value vanishes).
pub fn null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.ncols();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad so the thin SVD returns a full set of right singular vectors
    let padded = if a.nrows() < k {
        let mut p = DMatrix::zeros(k, k);
        p.view_mut((0, 0), (a.nrows(), k)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let scale = if sigma_max > 0.0 { sigma_max } else { 1.0 };
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= NULL_THRESHOLD * scale)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(k, null_rows.len());
    for (c, &r) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(r).transpose());
    }
    basis
}

/// Orthonormal basis of the column space of `a`, same rank convention as
/// [`null_basis`].
pub fn range_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| sigma_max > 0.0 && **s > NULL_THRESHOLD * sigma_max)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    basis
}

pub fn nullspace(cfg: &FiniteConfig) -> NullspaceBasis {
    NullspaceBasis {
        basis: null_basis(&cfg.stacked()),
    }
}

/// Principal angles between the column spans of two orthonormal bases, in
/// ascending order.
///
/// Computed from the singular values of `(I − Q₁Q₁ᵀ) Q₂`, which are the
/// sines of the angles; this keeps small angles accurate. When the
/// dimensions differ, the missing directions count as right angles.
pub fn principal_angles(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Vec<f64> {
    let (small, large) = if q1.ncols() <= q2.ncols() {
        (q1, q2)
    } else {
        (q2, q1)
    };
    let mut angles = Vec::with_capacity(large.ncols());
    if small.ncols() > 0 {
        let residual = small - large * (large.transpose() * small);
        let sv = residual.singular_values();
        angles.extend(sv.iter().map(|s| s.clamp(0.0, 1.0).asin()));
    }
    angles.extend(std::iter::repeat_n(
        std::f64::consts::FRAC_PI_2,
        large.ncols() - small.ncols(),
    ));
    angles.sort_by(f64::total_cmp);
    angles
}

pub fn max_principal_angle(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    principal_angles(q1, q2).into_iter().fold(0.0, f64::max)
}

/// `inf { ‖μ + ν‖ : ν ∈ 𝒩_φ }` in the configuration's norm.
///
/// Euclidean norms use the orthogonal complement directly. For `ℓ¹` the
/// minimization over nullspace coordinates runs multi-start subgradient
/// descent with step `1/t`, then tries the vertices of the piecewise-linear
/// objective adjacent to the best iterate.
pub fn quotient_norm(cfg: &FiniteConfig, mu: &DVector<f64>, ns: &NullspaceBasis) -> f64 {
    match cfg.norm_kind {
        NormKind::Euclidean => (mu - ns.project(mu)).norm(),
        NormKind::L1 => l1_quotient(mu, &ns.basis),
    }
}

fn l1_quotient(mu: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let r = basis.ncols();
    let base = mu.lp_norm(1);
    if r == 0 {
        return base;
    }
    let objective = |z: &DVector<f64>| (mu + basis * z).lp_norm(1);
    let mut rng = ChaCha8Rng::seed_from_u64(L1_SEED);
    let spread = base.max(1.0);
    let mut best_z = DVector::zeros(r);
    let mut best = base;
    for start in 0..L1_STARTS {
        let mut z = if start == 0 {
            DVector::zeros(r)
        } else {
            DVector::from_fn(r, |_, _| rng.random_range(-spread..=spread))
        };
        for t in 1..=L1_STEPS {
            let v = mu + basis * &z;
            let val = v.lp_norm(1);
            if val < best {
                best = val;
                best_z = z.clone();
            }
            let sign = v.map(|x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            let g = basis.transpose() * sign;
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            z -= g * (spread / (t as f64 * gn));
        }
    }
    // an ℓ¹ minimizer zeroes r coordinates of μ + Nz; try the r smallest
    let v = mu + basis * &best_z;
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    for window in 0..=(v.len().saturating_sub(r)).min(3) {
        let rows = &order[window..window + r];
        let sub = DMatrix::from_fn(r, r, |i, j| basis[(rows[i], j)]);
        let rhs = DVector::from_fn(r, |i, _| -mu[rows[i]]);
        if let Some(z) = sub.lu().solve(&rhs) {
            let val = objective(&z);
            if val < best {
                best = val;
            }
        }
    }
    best
}

fn stacked_target(cfg: &FiniteConfig, target: &[DVector<f64>]) -> Result<DVector<f64>> {
    if target.len() != cfg.maps.len() {
        return Err(GrkbsError::Dimension {
            what: "target count",
            expected: cfg.maps.len(),
            got: target.len(),
        });
    }
    let m = cfg.output_dim();
    let mut b = DVector::zeros(m * target.len());
    for (i, t) in target.iter().enumerate() {
        if t.len() != m {
            return Err(GrkbsError::Dimension {
                what: "target vector",
                expected: m,
                got: t.len(),
            });
        }
        b.rows_mut(i * m, m).copy_from(t);
    }
    Ok(b)
}

/// Minimum-Euclidean-norm `μ` with `A(xᵢ) μ = targetᵢ` for all `i`.
pub fn min_norm_preimage(cfg: &FiniteConfig, target: &[DVector<f64>]) -> Result<DVector<f64>> {
    let a = cfg.stacked();
    let b = stacked_target(cfg, target)?;
    let pinv = a
        .clone()
        .pseudo_inverse(NULL_THRESHOLD * a.norm().max(f64::MIN_POSITIVE))
        .map_err(|e| GrkbsError::Singular(e.to_string()))?;
    let mu = pinv * &b;
    let residual = (&a * &mu - &b).norm();
    if residual > RANGE_TOL * b.norm().max(1.0) {
        return Err(GrkbsError::NotInRange { residual });
    }
    Ok(mu)
}

/// `‖f‖_ℬ = inf { ‖μ‖ : f = f_μ }` for the function given by its values on
/// the input sample.
pub fn rkbs_norm(cfg: &FiniteConfig, target: &[DVector<f64>]) -> Result<f64> {
    let mu = min_norm_preimage(cfg, target)?;
    Ok(match cfg.norm_kind {
        NormKind::Euclidean => mu.norm(),
        NormKind::L1 => quotient_norm(cfg, &mu, &nullspace(cfg)),
    })
}

/// `A(x_index) μ`, the kernel applied to any representative of `μ + 𝒩_φ`.
pub fn kernel_eval(cfg: &FiniteConfig, x_index: usize, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let a = cfg.maps.get(x_index).ok_or(GrkbsError::IndexOutOfRange {
        index: x_index,
        len: cfg.maps.len(),
    })?;
    if mu.len() != cfg.dim_f {
        return Err(GrkbsError::Dimension {
            what: "measure coordinates",
            expected: cfg.dim_f,
            got: mu.len(),
        });
    }
    Ok(a * mu)
}

/// Outcome of one named verification, serialized as
/// `{"check": …, "pass": …, "max_violation": …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub max_violation: f64,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, max_violation: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            pass: max_violation <= tol,
            max_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub norm_preserving: bool,
    pub nullspace_match: bool,
    pub diagram_commutes: bool,
    pub max_norm_defect: f64,
    pub max_angle: f64,
    pub max_diagram_defect: f64,
}

impl EquivalenceReport {
    pub fn all(&self) -> bool {
        self.norm_preserving && self.nullspace_match && self.diagram_commutes
    }
}

/// Tests whether `J` carries `(ℝᵏ, φ₁)` onto `(ℝᵏ, φ₂)`: `J` is an isometry,
/// `J 𝒩_{φ₁} = 𝒩_{φ₂}`, and `A₂(xᵢ) J = A₁(xᵢ)` for every input.
///
/// Norm and diagram defects are relative to `max(1, ‖μ‖)` over
/// deterministic random `μ`.
pub fn check_equivalence(
    cfg1: &FiniteConfig,
    cfg2: &FiniteConfig,
    j: &DMatrix<f64>,
) -> Result<EquivalenceReport> {
    let k = cfg1.dim_f;
    if cfg2.dim_f != k || j.nrows() != k || j.ncols() != k {
        return Err(GrkbsError::InvalidArgument(format!(
            "need k x k map with k = {k}, got {}x{} and dim_F {}",
            j.nrows(),
            j.ncols(),
            cfg2.dim_f
        )));
    }
    if cfg1.maps.len() != cfg2.maps.len() || cfg1.output_dim() != cfg2.output_dim() {
        return Err(GrkbsError::InvalidArgument(
            "configurations must share inputs and output dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(EQUIVALENCE_SEED);
    let mut max_norm_defect: f64 = 0.0;
    let mut max_diagram_defect: f64 = 0.0;
    for _ in 0..EQUIVALENCE_TRIALS {
        let mu = DVector::from_fn(k, |_, _| rng.random_range(-1.0..=1.0));
        let jmu = j * &mu;
        let scale = cfg1.norm_kind.norm(&mu).max(1.0);
        let defect = (cfg1.norm_kind.norm(&jmu) - cfg1.norm_kind.norm(&mu)).abs() / scale;
        max_norm_defect = max_norm_defect.max(defect);
        for (a1, a2) in cfg1.maps.iter().zip(&cfg2.maps) {
            let d = (a2 * &jmu - a1 * &mu).norm() / scale;
            max_diagram_defect = max_diagram_defect.max(d);
        }
    }
    let ns1 = nullspace(cfg1).basis;
    let ns2 = nullspace(cfg2).basis;
    let mapped = range_basis(&(j * &ns1));
    let max_angle = if mapped.ncols() == 0 && ns2.ncols() == 0 {
        0.0
    } else {
        max_principal_angle(&mapped, &ns2)
    };
    Ok(EquivalenceReport {
        norm_preserving: max_norm_defect <= IDENTITY_TOL,
        nullspace_match: max_angle <= ANGLE_TOL,
        diagram_commutes: max_diagram_defect <= IDENTITY_TOL,
        max_norm_defect,
        max_angle,
        max_diagram_defect,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedReport {
    pub composed_dim: usize,
    pub restricted_dim: usize,
    /// Distinct points of `{φ₀(xᵢ)(μ₀)}`.
    pub image_points: usize,
    pub max_angle: f64,
    pub pass: bool,
}

/// Compares the kernel of the composed map `x ↦ φ₁(φ₀(x)(μ₀))` with the
/// kernel of `φ₁` restricted to the image set `{φ₀(xᵢ)(μ₀)}`.
///
/// The first is built per input point, the second from the deduplicated image
/// set, each with its own SVD.
pub fn nested_nullspace_check(
    cfg0: &FiniteConfig,
    layer1: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    mu0: &DVector<f64>,
) -> Result<NestedReport> {
    let images: Vec<DVector<f64>> = (0..cfg0.maps.len())
        .map(|i| kernel_eval(cfg0, i, mu0))
        .collect::<Result<_>>()?;

    let composed: Vec<DMatrix<f64>> = images.iter().map(&layer1).collect();
    let composed_basis = null_basis(&stack_rows(&composed)?);

    let mut distinct: Vec<DVector<f64>> = Vec::new();
    for e in &images {
        if !distinct.iter().any(|d| d == e) {
            distinct.push(e.clone());
        }
    }
    distinct.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let restricted: Vec<DMatrix<f64>> = distinct.iter().map(&layer1).collect();
    let restricted_basis = null_basis(&stack_rows(&restricted)?);

    let max_angle = max_principal_angle(&composed_basis, &restricted_basis);
    Ok(NestedReport {
        composed_dim: composed_basis.ncols(),
        restricted_dim: restricted_basis.ncols(),
        image_points: distinct.len(),
        max_angle,
        pass: max_angle <= ANGLE_TOL,
    })
}

fn stack_rows(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.ncols() != cols {
            return Err(GrkbsError::Dimension {
                what: "layer map columns",
                expected: cols,
                got: b.ncols(),
            });
        }
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

pub(crate) fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn random_orthogonal(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    random_matrix(rng, k, k).qr().q()
}

/// A random configuration whose maps share a `(k − inner)`-dimensional kernel:
/// `A(xᵢ) = Bᵢ C` with `C` of size `inner × k`.
pub fn random_rank_deficient(
    rng: &mut impl Rng,
    k: usize,
    m: usize,
    inputs: usize,
    inner: usize,
    norm_kind: NormKind,
) -> Result<FiniteConfig> {
    let c = random_matrix(rng, inner, k);
    let xs: Vec<Vec<f64>> = (0..inputs)
        .map(|_| vec![rng.random_range(-1.0..=1.0)])
        .collect();
    let maps = xs
        .iter()
        .map(|_| random_matrix(rng, m, inner) * &c)
        .collect();
    FiniteConfig::new(k, xs, maps, norm_kind)
}

/// Runs every quotient/kernel/equivalence check on `instances` seeded random
/// configurations and aggregates the worst violation per check.
pub fn verification_suite(seed: u64, instances: usize) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut isometry: f64 = 0.0;
    let mut coset: f64 = 0.0;
    let mut reproducing: f64 = 0.0;
    let mut constructed_fail = 0usize;
    let mut negative_fail = 0usize;
    let mut worst_constructed: f64 = 0.0;
    let mut nested: f64 = 0.0;
    let mut trivial: f64 = 0.0;

    for _ in 0..instances {
        let k = rng.random_range(3..=7);
        let m = rng.random_range(1..=3);
        let s = rng.random_range(1..=4);
        let inner = rng.random_range(1..k);
        let cfg = random_rank_deficient(&mut rng, k, m, s, inner, NormKind::Euclidean)?;
        let ns = nullspace(&cfg);

        // ℬ ≅ ℱ/𝒩_φ: minimal-norm preimage vs quotient norm of another preimage
        let mu = DVector::from_fn(k, |_, _| rng.random_range(-2.0..=2.0));
        let target: Vec<DVector<f64>> = (0..s)
            .map(|i| kernel_eval(&cfg, i, &mu))
            .collect::<Result<_>>()?;
        let b_norm = rkbs_norm(&cfg, &target)?;
        let q_norm = quotient_norm(&cfg, &least_squares_preimage(&cfg, &target)?, &ns);
        isometry = isometry.max((b_norm - q_norm).abs() / b_norm.max(1.0));

        let z = DVector::from_fn(ns.rank_deficiency(), |_, _| rng.random_range(-3.0..=3.0));
        let shifted = &mu + &ns.basis * z;
        for i in 0..s {
            let a = kernel_eval(&cfg, i, &mu)?;
            let b = kernel_eval(&cfg, i, &shifted)?;
            coset = coset.max((a - b).norm() / mu.norm().max(1.0));
            let direct = cfg.stacked() * &mu;
            let row = direct.rows(i * m, m).into_owned();
            reproducing = reproducing.max((kernel_eval(&cfg, i, &mu)? - row).norm());
        }

        let j = random_orthogonal(&mut rng, k);
        let j_inv = j.transpose();
        let maps2: Vec<DMatrix<f64>> = cfg.maps().iter().map(|a| a * &j_inv).collect();
        let cfg2 = FiniteConfig::new(k, cfg.inputs().to_vec(), maps2.clone(), NormKind::Euclidean)?;
        let rep = check_equivalence(&cfg, &cfg2, &j)?;
        let back = check_equivalence(&cfg2, &cfg, &j_inv)?;
        if !(rep.all() && back.all()) {
            constructed_fail += 1;
        }
        worst_constructed = worst_constructed
            .max(rep.max_angle)
            .max(rep.max_norm_defect)
            .max(rep.max_diagram_defect);

        let mut perturbed = maps2;
        let slot = rng.random_range(0..s);
        perturbed[slot] = random_matrix(&mut rng, m, k);
        let cfg3 = FiniteConfig::new(k, cfg.inputs().to_vec(), perturbed, NormKind::Euclidean)?;
        if check_equivalence(&cfg, &cfg3, &j)?.nullspace_match {
            negative_fail += 1;
        }

        let report = random_nested_instance(&mut rng)?;
        nested = nested.max(report.max_angle);

        let full = random_rank_deficient(&mut rng, k, k, 1, k, NormKind::Euclidean)?;
        let ns_full = nullspace(&full);
        let v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..=1.0));
        trivial = trivial.max((quotient_norm(&full, &v, &ns_full) - v.norm()).abs());
    }

    Ok(vec![
        CheckReport::new("rkbs_quotient_isometry", isometry, IDENTITY_TOL),
        CheckReport::new("kernel_coset_invariance", coset, IDENTITY_TOL),
        CheckReport::new("kernel_reproducing", reproducing, IDENTITY_TOL),
        CheckReport {
            check: "equivalence_constructed".into(),
            pass: constructed_fail == 0,
            max_violation: worst_constructed,
        },
        CheckReport {
            check: "equivalence_perturbed_rejected".into(),
            pass: negative_fail == 0,
            max_violation: negative_fail as f64,
        },
        CheckReport::new("nested_nullspace", nested, ANGLE_TOL),
        CheckReport::new("trivial_configuration", trivial, IDENTITY_TOL),
    ])
}

/// A preimage of `target` other than the minimal-norm one: the SVD
/// least-squares solution shifted by a fixed nullspace vector.
pub fn least_squares_preimage(cfg: &FiniteConfig, target: &[DVector<f64>]) -> Result<DVector<f64>> {
    let a = cfg.stacked();
    let b = stacked_target(cfg, target)?;
    let svd = a.clone().svd(true, true);
    let particular = svd
        .solve(&b, NULL_THRESHOLD * a.norm().max(f64::MIN_POSITIVE))
        .map_err(|e| GrkbsError::Singular(e.to_string()))?;
    let ns = null_basis(&a);
    let shift = DVector::from_fn(ns.ncols(), |i, _| 1.0 + i as f64);
    Ok(particular + ns * shift)
}

/// A random two-layer instance: layer 0 is linear in `μ₀`, layer 1 maps a
/// point `e` to `D(e) C₁` with a shared factor `C₁`.
pub fn random_nested_instance(rng: &mut impl Rng) -> Result<NestedReport> {
    let k0 = rng.random_range(2..=4);
    let m0 = rng.random_range(1..=3);
    let k1 = rng.random_range(3..=6);
    let inner = rng.random_range(1..k1);
    let m1 = rng.random_range(1..=2);
    let s = 3;
    let xs: Vec<Vec<f64>> = (0..s).map(|_| vec![rng.random_range(-1.0..=1.0)]).collect();
    let maps0 = (0..s).map(|_| random_matrix(rng, m0, k0)).collect();
    let cfg0 = FiniteConfig::new(k0, xs, maps0, NormKind::Euclidean)?;
    let mu0 = DVector::from_fn(k0, |_, _| rng.random_range(-1.0..=1.0));
    let c1 = random_matrix(rng, inner, k1);
    let blocks: Vec<DMatrix<f64>> = (0..=m0).map(|_| random_matrix(rng, m1, inner)).collect();
    let layer1 = move |e: &DVector<f64>| {
        let mut d = blocks[0].clone();
        for (j, ej) in e.iter().enumerate() {
            d += &blocks[j + 1] * ej.tanh();
        }
        d * &c1
    };
    nested_nullspace_check(&cfg0, layer1, &mu0)
}
