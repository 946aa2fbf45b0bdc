//! Training over atomic measures.
//!
//! The problem is
//!
//! ```text
//! min_μ  (1/N) Σᵢ ‖yᵢ − φ(xᵢ)(μ)‖²  +  λ ‖μ‖_TV
//! ```
//!
//! solved by a conditional-gradient loop whose iterates are finite atomic
//! measures: find the parameter point with the largest dual certificate,
//! add it as an atom, re-optimize every weight, prune, reduce the support to
//! linearly independent feature columns, and repeat until the certificate is
//! at most `1 + tol`.

mod corrective;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{GrkbsError, Result};
use crate::feature::ConfigurationMap;
use crate::measure::{Atom, AtomicMeasure, DEFAULT_MERGE_TOL};

pub use corrective::{fully_corrective, grid_restricted_oracle, reduce_support};
pub use search::{insert_atom, Insertion};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() {
            return Err(GrkbsError::InvalidArgument("training set is empty".into()));
        }
        if xs.len() != ys.len() {
            return Err(GrkbsError::Dimension {
                what: "targets",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let (n, m) = (xs[0].len(), ys[0].len());
        if n == 0 || m == 0 {
            return Err(GrkbsError::InvalidArgument(
                "inputs and targets need positive dimension".into(),
            ));
        }
        for (x, y) in xs.iter().zip(&ys) {
            if x.len() != n {
                return Err(GrkbsError::Dimension {
                    what: "input vector",
                    expected: n,
                    got: x.len(),
                });
            }
            if y.len() != m {
                return Err(GrkbsError::Dimension {
                    what: "target vector",
                    expected: m,
                    got: y.len(),
                });
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.ys[0].len()
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[Vec<f64>] {
        &self.ys
    }

    /// Targets concatenated into one vector of length `N·m`.
    pub fn stacked_targets(&self) -> Vec<f64> {
        self.ys.iter().flatten().copied().collect()
    }

    fn check_against(&self, cfg: &impl ConfigurationMap) -> Result<()> {
        if self.input_dim() != cfg.input_dim() {
            return Err(GrkbsError::Dimension {
                what: "training inputs",
                expected: cfg.input_dim(),
                got: self.input_dim(),
            });
        }
        if self.output_dim() != cfg.output_dim() {
            return Err(GrkbsError::Dimension {
                what: "training targets",
                expected: cfg.output_dim(),
                got: self.output_dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `L(y, w) = ‖y − w‖²`.
    #[default]
    Squared,
}

impl LossKind {
    pub fn value(self, y: &[f64], w: &[f64]) -> f64 {
        match self {
            LossKind::Squared => y.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub lambda: f64,
    pub loss: LossKind,
    pub max_atoms: usize,
    pub max_iters: usize,
    /// Points per parameter coordinate in the insertion grid.
    pub certificate_grid: usize,
    pub local_ascent_steps: usize,
    pub fc_iters: usize,
    pub tol_objective: f64,
    pub prune_tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            loss: LossKind::Squared,
            max_atoms: 200,
            max_iters: 100,
            certificate_grid: 24,
            local_ascent_steps: 200,
            fc_iters: 20_000,
            tol_objective: 1e-6,
            prune_tol: 1e-10,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(GrkbsError::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol_objective > 0.0 && self.prune_tol > 0.0) {
            return Err(GrkbsError::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_atoms == 0 || self.certificate_grid == 0 {
            return Err(GrkbsError::InvalidArgument(
                "max_atoms and certificate_grid must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Where the insertion step looks for new atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchSpace {
    /// Tensor grid over the parameter box refined by local ascent.
    Box,
    /// A fixed finite candidate set, no refinement.
    Candidates(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    pub measure: AtomicMeasure,
    pub objective: f64,
    pub atom_count: usize,
    #[serde(rename = "bound_mN")]
    pub bound_mn: usize,
    pub certificate_sup: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

impl SparseSolution {
    /// `atom_count ≤ m·N`; only meaningful when `converged`.
    pub fn within_bound(&self) -> bool {
        self.atom_count <= self.bound_mn
    }
}

/// Feature columns `(v(x₁,θⱼ), …, v(x_N,θⱼ))` for a set of atoms.
#[derive(Debug, Clone)]
pub struct SamplingOperator {
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl SamplingOperator {
    pub fn build(cfg: &impl ConfigurationMap, data: &TrainingSet, thetas: &[Vec<f64>]) -> Self {
        let rows = data.len() * cfg.output_dim();
        let columns = thetas
            .iter()
            .map(|theta| feature_column(cfg, data, theta))
            .collect();
        Self { columns, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn push(&mut self, column: Vec<f64>) {
        self.columns.push(column);
    }

    pub fn remove(&mut self, j: usize) {
        self.columns.remove(j);
    }

    /// `Σⱼ cⱼ vⱼ`, accumulated in atom order.
    pub fn apply(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (c, col) in weights.iter().zip(&self.columns) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        out
    }

    pub fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.columns.len(), |i, j| self.columns[j][i])
    }
}

pub(crate) fn feature_column(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    theta: &[f64],
) -> Vec<f64> {
    let m = cfg.output_dim();
    let mut col = vec![0.0; data.len() * m];
    for (i, x) in data.xs().iter().enumerate() {
        cfg.atom_feature_into(x, theta, &mut col[i * m..(i + 1) * m]);
    }
    col
}

/// `(1/N) Σᵢ L(yᵢ, predᵢ) + λ tv` for stacked predictions.
pub(crate) fn objective_from_predictions(
    data: &TrainingSet,
    predictions: &[f64],
    tv: f64,
    opts: &SolverOptions,
) -> f64 {
    let m = data.output_dim();
    let loss: f64 = data
        .ys()
        .iter()
        .enumerate()
        .map(|(i, y)| opts.loss.value(y, &predictions[i * m..(i + 1) * m]))
        .sum();
    loss / data.len() as f64 + opts.lambda * tv
}

pub(crate) fn tv_of(weights: &[f64]) -> f64 {
    weights.iter().map(|c| c.abs()).sum()
}

/// Stacked data-term gradient `gᵢ = −(2/N)(yᵢ − predᵢ)`.
pub(crate) fn residual_gradient(data: &TrainingSet, predictions: &[f64]) -> Vec<f64> {
    let scale = 2.0 / data.len() as f64;
    data.stacked_targets()
        .iter()
        .zip(predictions)
        .map(|(y, p)| -scale * (y - p))
        .collect()
}

fn predictions(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    measure: &AtomicMeasure,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len() * cfg.output_dim());
    for x in data.xs() {
        out.extend(cfg.evaluate(x, measure)?);
    }
    Ok(out)
}

pub fn objective(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    measure: &AtomicMeasure,
    opts: &SolverOptions,
) -> Result<f64> {
    data.check_against(cfg)?;
    let pred = predictions(cfg, data, measure)?;
    Ok(objective_from_predictions(
        data,
        &pred,
        measure.tv_norm(),
        opts,
    ))
}

/// `|Σᵢ ⟨gᵢ, v(xᵢ, θ)⟩| / λ` at the current measure. Values above one mark
/// a descent direction for adding mass at `θ`.
pub fn certificate(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    measure: &AtomicMeasure,
    theta: &[f64],
    opts: &SolverOptions,
) -> Result<f64> {
    data.check_against(cfg)?;
    cfg.param_box().check_point(theta)?;
    let grad = residual_gradient(data, &predictions(cfg, data, measure)?);
    let col = feature_column(cfg, data, theta);
    let pairing: f64 = grad.iter().zip(&col).map(|(g, v)| g * v).sum();
    Ok(pairing.abs() / opts.lambda)
}

/// Runs the conditional-gradient loop over the whole parameter box.
pub fn solve_atp(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    opts: &SolverOptions,
) -> Result<SparseSolution> {
    solve_atp_in(cfg, data, opts, &SearchSpace::Box)
}

/// Per-iteration progress passed to [`solve_atp_observed`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub step: usize,
    pub objective: f64,
    pub atom_count: usize,
    pub certificate_sup: f64,
}

pub fn solve_atp_in(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    opts: &SolverOptions,
    search: &SearchSpace,
) -> Result<SparseSolution> {
    solve_atp_observed(cfg, data, opts, search, |_| {})
}

/// [`solve_atp_in`] with a callback after every accepted iteration.
pub fn solve_atp_observed(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    opts: &SolverOptions,
    search: &SearchSpace,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<SparseSolution> {
    opts.validate()?;
    data.check_against(cfg)?;
    if let SearchSpace::Candidates(points) = search {
        if points.is_empty() {
            return Err(GrkbsError::InvalidArgument("candidate set is empty".into()));
        }
        for p in points {
            cfg.param_box().check_point(p)?;
        }
    }

    let mut state = corrective::ActiveSet::new(cfg, data);
    let mut current = state.objective(data, opts);
    let mut history = Vec::new();
    let mut converged = false;
    let mut certificate_sup;
    let mut iteration = 0;

    loop {
        let grad = residual_gradient(data, &state.predictions());
        let found = search::best_atom(cfg, data, &grad, opts, search);
        certificate_sup = found.certificate;
        if certificate_sup <= 1.0 + opts.tol_objective {
            converged = true;
            break;
        }
        if iteration >= opts.max_iters {
            break;
        }
        iteration += 1;

        let existing = state
            .thetas()
            .iter()
            .position(|t| crate::measure::max_distance(t, &found.theta) <= DEFAULT_MERGE_TOL);
        if existing.is_none() {
            if state.len() >= opts.max_atoms {
                break;
            }
            state.push(cfg, data, found.theta.clone());
        }

        let snapshot = state.clone();
        state.correct(data, opts);
        state.prune(data, opts);
        state.reduce(data, opts);
        let value = state.objective(data, opts);
        if !value.is_finite() {
            return Err(GrkbsError::NonFinite { theta: found.theta });
        }
        if value > current {
            // numerical noise only; keep the previous iterate
            state = snapshot;
            state.drop_zeros();
            break;
        }
        let stalled = existing.is_some() && value >= current;
        current = value;
        history.push(value);
        observe(&IterationRecord {
            step: iteration,
            objective: value,
            atom_count: state.len(),
            certificate_sup,
        });
        if stalled {
            let grad = residual_gradient(data, &state.predictions());
            certificate_sup = search::best_atom(cfg, data, &grad, opts, search).certificate;
            converged = certificate_sup <= 1.0 + opts.tol_objective;
            break;
        }
    }

    let atoms: Vec<Atom> = state
        .thetas()
        .iter()
        .zip(state.weights())
        .map(|(t, c)| Atom::new(t.clone(), *c))
        .collect();
    let measure = AtomicMeasure::with_tolerances(
        cfg.param_box().clone(),
        atoms,
        DEFAULT_MERGE_TOL,
        opts.prune_tol,
    )?;
    let objective = objective(cfg, data, &measure, opts)?;
    Ok(SparseSolution {
        atom_count: measure.len(),
        measure,
        objective,
        bound_mn: data.len() * cfg.output_dim(),
        certificate_sup,
        history,
        converged,
    })
}
