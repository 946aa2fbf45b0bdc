//! Weight optimization over a fixed atom set.

use nalgebra::{DMatrix, DVector};

use crate::error::{GrkbsError, Result};
use crate::feature::ConfigurationMap;
use crate::measure::{Atom, AtomicMeasure, DEFAULT_MERGE_TOL};
use crate::quotient::null_basis;

use super::{
    feature_column, objective, objective_from_predictions, residual_gradient, tv_of,
    SamplingOperator, SolverOptions, SparseSolution, TrainingSet,
};

/// Relative KKT residual accepted as exact optimality.
const KKT_TOL: f64 = 1e-12;
const CD_TOL: f64 = 1e-10;
const FC_CD_SWEEPS: usize = 20_000;
const CD_MAX_SWEEPS: usize = 1_000_000;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `(1/N) Σᵢ ‖yᵢ − Σⱼ cⱼ v(xᵢ,θⱼ)‖² + λ Σⱼ |cⱼ|` over the weights
/// of the given atoms, starting from zero.
pub fn fully_corrective(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    atoms: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if atoms.is_empty() {
        return Err(GrkbsError::NoAtoms);
    }
    data.check_against(cfg)?;
    for theta in atoms {
        cfg.param_box().check_point(theta)?;
    }
    let op = SamplingOperator::build(cfg, data, atoms);
    Ok(Corrector::new(&op, data, opts).run(vec![0.0; atoms.len()]))
}

/// ℓ¹-regularized least squares on a fixed dictionary. Proximal gradient
/// with step `1/L̂`, `L̂` the largest eigenvalue of `(2/N) VᵀV`, runs until
/// the relative decrease drops below `tol_objective`; a feature-sign search
/// then finishes at the exact minimizer. Neither phase raises the objective.
struct Corrector<'a> {
    op: &'a SamplingOperator,
    data: &'a TrainingSet,
    opts: &'a SolverOptions,
    matrix: DMatrix<f64>,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    lipschitz: f64,
}

impl<'a> Corrector<'a> {
    fn new(op: &'a SamplingOperator, data: &'a TrainingSet, opts: &'a SolverOptions) -> Self {
        let v = op.to_matrix();
        let scale = 2.0 / data.len() as f64;
        let hessian = v.transpose() * &v * scale;
        let linear = v.transpose() * DVector::from_vec(data.stacked_targets()) * scale;
        let lipschitz = if hessian.nrows() == 0 {
            0.0
        } else {
            hessian.clone().symmetric_eigen().eigenvalues.max().max(0.0)
        };
        Self {
            op,
            data,
            opts,
            matrix: v,
            hessian,
            linear,
            lipschitz,
        }
    }

    fn value(&self, c: &[f64]) -> f64 {
        objective_from_predictions(self.data, &self.op.apply(c), tv_of(c), self.opts)
    }

    fn smooth_gradient(&self, c: &[f64]) -> DVector<f64> {
        &self.hessian * DVector::from_column_slice(c) - &self.linear
    }

    fn run(&self, start: Vec<f64>) -> Vec<f64> {
        let p = start.len();
        if p == 0 || self.lipschitz <= 0.0 {
            return vec![0.0; p];
        }
        let lambda = self.opts.lambda;
        let step = 1.0 / self.lipschitz;
        let mut c = start;
        let mut value = self.value(&c);
        for _ in 0..self.opts.fc_iters {
            let grad = self.smooth_gradient(&c);
            let next: Vec<f64> = c
                .iter()
                .zip(grad.iter())
                .map(|(ci, gi)| soft_threshold(ci - step * gi, step * lambda))
                .collect();
            let next_value = self.value(&next);
            if next_value > value {
                break;
            }
            let decrease = value - next_value;
            c = next;
            value = next_value;
            if decrease <= self.opts.tol_objective * value.abs() {
                break;
            }
        }
        if self.is_stationary(&c) {
            return c;
        }
        let finished = self.feature_sign(c.clone());
        let finished_value = self.value(&finished);
        if finished_value <= value {
            c = finished;
            value = finished_value;
        }
        if self.is_stationary(&c) {
            return c;
        }
        // badly conditioned faces: coordinate descent, then one more search
        let descended = self.feature_sign(self.coordinate_descent(c.clone()));
        if self.value(&descended) <= value {
            descended
        } else {
            c
        }
    }

    fn coordinate_descent(&self, mut c: Vec<f64>) -> Vec<f64> {
        let lambda = self.opts.lambda;
        let mut grad: Vec<f64> = self.smooth_gradient(&c).iter().copied().collect();
        for _ in 0..FC_CD_SWEEPS {
            let mut change: f64 = 0.0;
            let mut size: f64 = 0.0;
            for j in 0..c.len() {
                let hjj = self.hessian[(j, j)];
                if hjj <= 0.0 {
                    continue;
                }
                let updated = soft_threshold(hjj * c[j] - grad[j], lambda) / hjj;
                let delta = updated - c[j];
                if delta != 0.0 {
                    for (i, g) in grad.iter_mut().enumerate() {
                        *g += self.hessian[(i, j)] * delta;
                    }
                    c[j] = updated;
                    change = change.max(delta.abs());
                }
                size = size.max(c[j].abs());
            }
            if change <= f64::EPSILON * size {
                break;
            }
        }
        c
    }

    /// `½ cᵀHc − bᵀc + λ‖c‖₁`, the objective up to a constant.
    fn reduced_value(&self, c: &[f64]) -> f64 {
        let cv = DVector::from_column_slice(c);
        0.5 * cv.dot(&(&self.hessian * &cv)) - self.linear.dot(&cv) + self.opts.lambda * tv_of(c)
    }

    /// Feature-sign search: guess a sign pattern, minimize the quadratic on
    /// that orthant face, and line-search back to the first sign change.
    /// When the face columns are dependent, mass is first shifted along a
    /// null direction that lowers `‖c‖₁` at fixed predictions. Every
    /// accepted step strictly decreases the objective.
    fn feature_sign(&self, mut c: Vec<f64>) -> Vec<f64> {
        let p = c.len();
        let lambda = self.opts.lambda;
        let tol = KKT_TOL * lambda.max(self.linear.amax());
        let mut value = self.reduced_value(&c);
        for _ in 0..(50 * p + 100) {
            let grad = self.smooth_gradient(&c);
            let nonzero_ok = (0..p)
                .filter(|&j| c[j] != 0.0)
                .all(|j| (grad[j] + lambda * c[j].signum()).abs() <= tol);
            let mut entering = None;
            let mut worst = lambda + tol;
            for j in (0..p).filter(|&j| c[j] == 0.0) {
                if grad[j].abs() > worst {
                    worst = grad[j].abs();
                    entering = Some(j);
                }
            }
            if nonzero_ok && entering.is_none() {
                break;
            }
            let mut signs: Vec<f64> = c
                .iter()
                .map(|x| if *x == 0.0 { 0.0 } else { x.signum() })
                .collect();
            if let Some(j) = entering {
                signs[j] = -grad[j].signum();
            }
            let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
            let k = active.len();
            let h = DMatrix::from_fn(k, k, |a, b| self.hessian[(active[a], active[b])]);
            let rhs =
                DVector::from_fn(k, |a, _| self.linear[active[a]] - lambda * signs[active[a]]);
            let columns =
                DMatrix::from_fn(self.matrix.nrows(), k, |i, a| self.matrix[(i, active[a])]);
            let null = null_basis(&columns);
            if null.ncols() > 0 {
                if let Some(moved) = null_move(&c, &active, &null) {
                    let v = self.reduced_value(&moved);
                    if v < value {
                        c = moved;
                        value = v;
                        continue;
                    }
                }
            }
            // solve for the correction from the current point; near the
            // optimum this keeps accuracy on badly conditioned faces
            let current = DVector::from_fn(k, |a, _| c[active[a]]);
            let defect = rhs - &h * &current;
            let correction = match (null.ncols(), h.clone().cholesky()) {
                (0, Some(chol)) => chol.solve(&defect),
                _ => {
                    let eps = 1e-13 * h.amax();
                    match h.pseudo_inverse(eps) {
                        Ok(pinv) => pinv * defect,
                        Err(_) => break,
                    }
                }
            };
            let target = current + correction;
            if target.iter().any(|t| !t.is_finite()) {
                break;
            }

            // candidates: the face minimizer and every zero crossing before it
            let mut best = c.clone();
            let mut best_value = value;
            let mut try_point = |t: f64, zero: Option<usize>| {
                let mut trial = c.clone();
                for (a, &j) in active.iter().enumerate() {
                    trial[j] = c[j] + t * (target[a] - c[j]);
                }
                if let Some(j) = zero {
                    trial[j] = 0.0;
                }
                let v = self.reduced_value(&trial);
                if v < best_value {
                    best_value = v;
                    best = trial;
                }
            };
            try_point(1.0, None);
            for (a, &j) in active.iter().enumerate() {
                if c[j] != 0.0 && target[a].signum() != c[j].signum() {
                    let t = c[j] / (c[j] - target[a]);
                    if t > 0.0 && t < 1.0 {
                        try_point(t, Some(j));
                    }
                }
            }
            if best_value >= value {
                break;
            }
            c = best;
            value = best_value;
        }
        c
    }

    fn is_stationary(&self, c: &[f64]) -> bool {
        let lambda = self.opts.lambda;
        let grad = self.smooth_gradient(c);
        let scale = lambda.max(self.linear.amax());
        c.iter().zip(grad.iter()).all(|(ci, gi)| {
            if *ci != 0.0 {
                (gi + lambda * ci.signum()).abs() <= KKT_TOL * scale
            } else {
                gi.abs() <= lambda + KKT_TOL * scale
            }
        })
    }
}

/// A step along a null direction `n` of the active columns (so `V c` is
/// unchanged) that lowers `‖c‖₁`, taken up to the first weight reaching
/// zero. Coordinates of `active` whose weight is zero may enter.
fn null_move(c: &[f64], active: &[usize], null: &DMatrix<f64>) -> Option<Vec<f64>> {
    let slope = |d: &[f64]| -> f64 {
        active
            .iter()
            .zip(d)
            .map(|(&j, dj)| {
                if c[j] != 0.0 {
                    c[j].signum() * dj
                } else {
                    dj.abs()
                }
            })
            .sum()
    };
    for col in null.column_iter() {
        let n: Vec<f64> = col.iter().copied().collect();
        let neg: Vec<f64> = n.iter().map(|x| -x).collect();
        let scale: f64 = n.iter().map(|x| x.abs()).sum();
        let (d, rate) = [n, neg]
            .into_iter()
            .map(|d| {
                let r = slope(&d);
                (d, r)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if rate >= -1e-12 * scale {
            continue;
        }
        let mut step = f64::INFINITY;
        let mut hit = None;
        for (a, &j) in active.iter().enumerate() {
            if c[j] != 0.0 && c[j] * d[a] < 0.0 {
                let t = -c[j] / d[a];
                if t < step {
                    step = t;
                    hit = Some(j);
                }
            }
        }
        let hit = hit?;
        let mut out = c.to_vec();
        for (a, &j) in active.iter().enumerate() {
            out[j] = c[j] + step * d[a];
        }
        out[hit] = 0.0;
        return Some(out);
    }
    None
}

/// Moves the weights along null directions of the active feature columns
/// until the active columns are linearly independent.
///
/// Each move keeps `V c` fixed, does not increase `Σ|cⱼ|`, and sets one
/// weight exactly to zero, so the result has at most `rank(V) ≤ m·N`
/// nonzero weights.
pub fn reduce_support(op: &SamplingOperator, weights: &[f64]) -> Vec<f64> {
    let mut w = weights.to_vec();
    for _ in 0..weights.len() {
        let active: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        if active.is_empty() {
            break;
        }
        let a = DMatrix::from_fn(op.rows(), active.len(), |i, j| op.columns()[active[j]][i]);
        let null = null_basis(&a);
        if null.ncols() == 0 {
            break;
        }
        let mut d: Vec<f64> = null.column(0).iter().copied().collect();
        let slope: f64 = active
            .iter()
            .zip(&d)
            .map(|(&j, dj)| w[j].signum() * dj)
            .sum();
        if slope < 0.0 {
            d.iter_mut().for_each(|x| *x = -*x);
        }
        // w − t d keeps every sign until the first ratio w/d > 0 is reached
        let mut step = f64::INFINITY;
        let mut hit = None;
        for (a_idx, &j) in active.iter().enumerate() {
            let ratio = w[j] / d[a_idx];
            if d[a_idx] != 0.0 && ratio > 0.0 && ratio < step {
                step = ratio;
                hit = Some(j);
            }
        }
        let Some(hit) = hit else { break };
        for (a_idx, &j) in active.iter().enumerate() {
            w[j] -= step * d[a_idx];
        }
        w[hit] = 0.0;
    }
    w
}

/// Atoms, weights and feature columns of the current iterate.
#[derive(Debug, Clone)]
pub(crate) struct ActiveSet {
    thetas: Vec<Vec<f64>>,
    weights: Vec<f64>,
    op: SamplingOperator,
}

impl ActiveSet {
    pub(crate) fn new(cfg: &impl ConfigurationMap, data: &TrainingSet) -> Self {
        Self {
            thetas: Vec::new(),
            weights: Vec::new(),
            op: SamplingOperator::build(cfg, data, &[]),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.thetas.len()
    }

    pub(crate) fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn predictions(&self) -> Vec<f64> {
        self.op.apply(&self.weights)
    }

    pub(crate) fn objective(&self, data: &TrainingSet, opts: &SolverOptions) -> f64 {
        objective_from_predictions(data, &self.predictions(), tv_of(&self.weights), opts)
    }

    pub(crate) fn push(
        &mut self,
        cfg: &impl ConfigurationMap,
        data: &TrainingSet,
        theta: Vec<f64>,
    ) {
        self.op.push(feature_column(cfg, data, &theta));
        self.thetas.push(theta);
        self.weights.push(0.0);
    }

    pub(crate) fn correct(&mut self, data: &TrainingSet, opts: &SolverOptions) {
        let start = std::mem::take(&mut self.weights);
        self.weights = Corrector::new(&self.op, data, opts).run(start);
    }

    /// Zeroes weights below `prune_tol` unless that raises the objective.
    pub(crate) fn prune(&mut self, data: &TrainingSet, opts: &SolverOptions) {
        let before = self.objective(data, opts);
        let saved = self.weights.clone();
        for w in &mut self.weights {
            if w.abs() < opts.prune_tol {
                *w = 0.0;
            }
        }
        if self.objective(data, opts) > before {
            self.weights = saved;
        }
        self.drop_zeros();
    }

    /// Reduces to linearly independent atoms, re-optimizes, and keeps the
    /// result only if the objective did not increase.
    pub(crate) fn reduce(&mut self, data: &TrainingSet, opts: &SolverOptions) {
        let before = self.objective(data, opts);
        let reduced = reduce_support(&self.op, &self.weights);
        if reduced.iter().filter(|w| **w != 0.0).count()
            == self.weights.iter().filter(|w| **w != 0.0).count()
        {
            return;
        }
        let saved = self.clone();
        self.weights = reduced;
        self.drop_zeros();
        self.correct(data, opts);
        self.drop_zeros();
        if self.objective(data, opts) > before {
            *self = saved;
        }
    }

    pub(crate) fn drop_zeros(&mut self) {
        let mut j = 0;
        while j < self.weights.len() {
            if self.weights[j] == 0.0 {
                self.weights.remove(j);
                self.thetas.remove(j);
                self.op.remove(j);
            } else {
                j += 1;
            }
        }
    }
}

/// Exact minimizer over measures supported on a fixed finite grid, by cyclic
/// coordinate descent with soft-thresholding run until no weight moves by
/// more than `1e-10`.
pub fn grid_restricted_oracle(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    grid: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<SparseSolution> {
    opts.validate()?;
    data.check_against(cfg)?;
    if grid.is_empty() {
        return Err(GrkbsError::InvalidArgument("oracle grid is empty".into()));
    }
    for theta in grid {
        cfg.param_box().check_point(theta)?;
    }
    let op = SamplingOperator::build(cfg, data, grid);
    let y = data.stacked_targets();
    let norms2: Vec<f64> = op
        .columns()
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let threshold = opts.lambda * data.len() as f64 / 2.0;
    let mut c = vec![0.0; grid.len()];
    let mut converged = false;
    for _ in 0..CD_MAX_SWEEPS {
        let mut residual: Vec<f64> = y.iter().zip(op.apply(&c)).map(|(a, b)| a - b).collect();
        let mut max_change: f64 = 0.0;
        for (j, col) in op.columns().iter().enumerate() {
            if norms2[j] == 0.0 {
                continue;
            }
            let rho: f64 =
                col.iter().zip(&residual).map(|(v, r)| v * r).sum::<f64>() + norms2[j] * c[j];
            let updated = soft_threshold(rho, threshold) / norms2[j];
            let delta = updated - c[j];
            if delta != 0.0 {
                for (r, v) in residual.iter_mut().zip(col) {
                    *r -= delta * v;
                }
                c[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= CD_TOL {
            converged = true;
            break;
        }
    }

    let grad = residual_gradient(data, &op.apply(&c));
    let certificate_sup = op
        .adjoint(&grad)
        .iter()
        .map(|p| p.abs() / opts.lambda)
        .fold(0.0, f64::max);
    let atoms: Vec<Atom> = grid
        .iter()
        .zip(&c)
        .filter(|(_, w)| **w != 0.0)
        .map(|(t, w)| Atom::new(t.clone(), *w))
        .collect();
    let measure = AtomicMeasure::with_tolerances(
        cfg.param_box().clone(),
        atoms,
        DEFAULT_MERGE_TOL,
        opts.prune_tol,
    )?;
    let value = objective(cfg, data, &measure, opts)?;
    Ok(SparseSolution {
        atom_count: measure.len(),
        measure,
        objective: value,
        bound_mn: data.len() * cfg.output_dim(),
        certificate_sup,
        history: vec![value],
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::{ActivationKind, FeatureMapConfig};
    use crate::measure::ParameterBox;

    fn unit_feature() -> (FeatureMapConfig, TrainingSet, Vec<f64>) {
        let cfg = FeatureMapConfig::scalar(
            ActivationKind::Relu,
            ParameterBox::cube(2, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let data = TrainingSet::new(vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        (cfg, data, vec![0.5, 0.5])
    }

    #[test]
    fn scalar_instance_weight_one_half() {
        let (cfg, data, theta) = unit_feature();
        let opts = SolverOptions::default();
        let c = fully_corrective(&cfg, &data, std::slice::from_ref(&theta), &opts).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12);
        let m = AtomicMeasure::single(cfg.param_box().clone(), theta, c[0]).unwrap();
        assert!((objective(&cfg, &data, &m, &opts).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_zero_weights() {
        let (cfg, _, _) = unit_feature();
        let data =
            TrainingSet::new(vec![vec![0.5], vec![1.0]], vec![vec![0.0], vec![0.0]]).unwrap();
        let c = fully_corrective(
            &cfg,
            &data,
            &[vec![0.5, 0.5], vec![1.0, 0.0]],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_atom_list_is_an_error() {
        let (cfg, data, _) = unit_feature();
        assert!(matches!(
            fully_corrective(&cfg, &data, &[], &SolverOptions::default()),
            Err(GrkbsError::NoAtoms)
        ));
    }

    #[test]
    fn oracle_single_point_grid() {
        let (cfg, data, theta) = unit_feature();
        let sol = grid_restricted_oracle(&cfg, &data, &[theta], &SolverOptions::default()).unwrap();
        assert!((sol.measure.atoms()[0].weight - 0.5).abs() < 1e-10);
        assert!((sol.objective - 0.75).abs() < 1e-10);
        assert!(sol.converged);
    }

    #[test]
    fn oracle_above_lambda_max_is_empty() {
        let (cfg, _, _) = unit_feature();
        let data =
            TrainingSet::new(vec![vec![0.2], vec![0.9]], vec![vec![0.4], vec![-0.3]]).unwrap();
        let grid = cfg.param_box().grid(5);
        let probe = grid_restricted_oracle(&cfg, &data, &grid, &SolverOptions::default()).unwrap();
        let empty = AtomicMeasure::empty(cfg.param_box().clone());
        let lambda_max = grid
            .iter()
            .map(|t| {
                super::super::certificate(&cfg, &data, &empty, t, &SolverOptions::default())
                    .unwrap()
            })
            .fold(0.0, f64::max);
        let _ = probe;
        let opts = SolverOptions {
            lambda: lambda_max,
            ..Default::default()
        };
        let sol = grid_restricted_oracle(&cfg, &data, &grid, &opts).unwrap();
        assert!(sol.measure.is_empty());
    }

    #[test]
    fn reduce_support_removes_duplicate_columns() {
        let op = SamplingOperator {
            columns: vec![
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
            rows: 2,
        };
        let w = vec![0.5, 0.25, 1.0, 0.3];
        let reduced = reduce_support(&op, &w);
        let nnz = reduced.iter().filter(|x| **x != 0.0).count();
        assert!(nnz <= 2, "{reduced:?}");
        let before = op.apply(&w);
        let after = op.apply(&reduced);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(tv_of(&reduced) <= tv_of(&w) + 1e-12);
    }
}
