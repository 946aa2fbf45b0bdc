//! Atom insertion: maximize the dual certificate over the parameter box.

use crate::error::Result;
use crate::feature::{golden_max, ConfigurationMap};
use crate::measure::{max_distance, AtomicMeasure};

use super::{feature_column, residual_gradient, SearchSpace, SolverOptions, TrainingSet};

/// Refined maxima whose values agree to this relative tolerance are ties.
const TIE_TOL: f64 = 1e-12;
/// Grid points used as starting points for local ascent.
const ASCENT_STARTS: usize = 6;
const GOLDEN_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub theta: Vec<f64>,
    pub certificate: f64,
    /// Index of the grid point (or candidate) the search started from.
    pub grid_index: usize,
}

/// Maximizer of the certificate at `measure` over the insertion grid,
/// refined by local ascent.
pub fn insert_atom(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    measure: &AtomicMeasure,
    opts: &SolverOptions,
) -> Result<Insertion> {
    data.check_against(cfg)?;
    let mut pred = Vec::with_capacity(data.len() * cfg.output_dim());
    for x in data.xs() {
        pred.extend(cfg.evaluate(x, measure)?);
    }
    let grad = residual_gradient(data, &pred);
    Ok(best_atom(cfg, data, &grad, opts, &SearchSpace::Box))
}

pub(crate) fn best_atom(
    cfg: &impl ConfigurationMap,
    data: &TrainingSet,
    grad: &[f64],
    opts: &SolverOptions,
    search: &SearchSpace,
) -> Insertion {
    let eval = Certificate {
        cfg,
        data,
        grad,
        lambda: opts.lambda,
    };
    match search {
        SearchSpace::Candidates(points) => {
            let mut best = Insertion {
                theta: points[0].clone(),
                certificate: eval.value(&points[0]),
                grid_index: 0,
            };
            for (i, p) in points.iter().enumerate().skip(1) {
                let v = eval.value(p);
                if v > best.certificate {
                    best = Insertion {
                        theta: p.clone(),
                        certificate: v,
                        grid_index: i,
                    };
                }
            }
            best
        }
        SearchSpace::Box => box_search(&eval, opts),
    }
}

fn box_search<C: ConfigurationMap>(eval: &Certificate<'_, C>, opts: &SolverOptions) -> Insertion {
    let pbox = eval.cfg.param_box();
    let grid = pbox.grid(opts.certificate_grid);
    let values: Vec<f64> = grid.iter().map(|t| eval.value(t)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let cells: Vec<f64> = (0..pbox.dim())
        .map(|k| {
            if opts.certificate_grid > 1 {
                pbox.width(k) / (opts.certificate_grid - 1) as f64
            } else {
                pbox.width(k)
            }
        })
        .collect();
    let cell = cells.iter().copied().fold(0.0, f64::max);

    let mut starts: Vec<usize> = Vec::with_capacity(ASCENT_STARTS);
    for &i in &order {
        if starts.len() == ASCENT_STARTS {
            break;
        }
        if starts
            .iter()
            .all(|&s| max_distance(&grid[s], &grid[i]) > 1.5 * cell)
        {
            starts.push(i);
        }
    }

    let mut results: Vec<Insertion> = starts
        .iter()
        .map(|&i| {
            let (theta, certificate) = if opts.local_ascent_steps == 0 {
                (grid[i].clone(), values[i])
            } else {
                ascend(
                    eval,
                    grid[i].clone(),
                    values[i],
                    &cells,
                    opts.local_ascent_steps,
                )
            };
            Insertion {
                theta,
                certificate,
                grid_index: i,
            }
        })
        .collect();
    let top = results
        .iter()
        .map(|r| r.certificate)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = top - TIE_TOL * top.abs().max(1.0);
    results.retain(|r| r.certificate >= cutoff);
    results
        .into_iter()
        .min_by_key(|r| r.grid_index)
        .expect("grid is never empty")
}

/// Projected gradient ascent with an adaptive step radius. When no gradient
/// step improves (kinks of relu, flat regions) a coordinate-wise
/// golden-section sweep over one grid cell is tried before giving up.
fn ascend<C: ConfigurationMap>(
    eval: &Certificate<'_, C>,
    start: Vec<f64>,
    start_value: f64,
    cells: &[f64],
    steps: usize,
) -> (Vec<f64>, f64) {
    let pbox = eval.cfg.param_box();
    let diameter = (0..pbox.dim()).map(|k| pbox.width(k)).fold(0.0, f64::max);
    let cell = cells.iter().copied().fold(0.0, f64::max);
    let mut theta = start;
    let mut value = start_value;
    let mut radius = cell;
    let mut grad = vec![0.0; pbox.dim()];
    for _ in 0..steps {
        value = eval.value_and_grad(&theta, &mut grad);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut moved = false;
        if gnorm > 0.0 {
            let mut r = radius;
            for _ in 0..50 {
                let mut trial: Vec<f64> = theta
                    .iter()
                    .zip(&grad)
                    .map(|(t, g)| t + r * g / gnorm)
                    .collect();
                pbox.project(&mut trial);
                let v = eval.value(&trial);
                if v > value {
                    theta = trial;
                    value = v;
                    radius = (2.0 * r).min(diameter);
                    moved = true;
                    break;
                }
                r *= 0.5;
                if r < 1e-15 * diameter {
                    break;
                }
            }
        }
        if !moved {
            let before = value;
            for k in 0..pbox.dim() {
                let lo = (theta[k] - cells[k]).max(pbox.lower()[k]);
                let hi = (theta[k] + cells[k]).min(pbox.upper()[k]);
                let mut probe = theta.clone();
                let (t, v) = golden_max(lo, hi, GOLDEN_STEPS, |t| {
                    probe[k] = t;
                    eval.value(&probe)
                });
                if v > value {
                    theta[k] = t;
                    value = v;
                }
            }
            if value <= before {
                break;
            }
            radius = cell;
        }
    }
    (theta, value)
}

struct Certificate<'a, C> {
    cfg: &'a C,
    data: &'a TrainingSet,
    grad: &'a [f64],
    lambda: f64,
}

impl<C: ConfigurationMap> Certificate<'_, C> {
    fn pairing(&self, theta: &[f64]) -> f64 {
        let col = feature_column(self.cfg, self.data, theta);
        self.grad.iter().zip(&col).map(|(g, v)| g * v).sum()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        self.pairing(theta).abs() / self.lambda
    }

    /// Certificate value and its θ-gradient.
    fn value_and_grad(&self, theta: &[f64], out: &mut [f64]) -> f64 {
        let m = self.cfg.output_dim();
        let dim = theta.len();
        let mut v = vec![0.0; m];
        let mut jac = vec![0.0; m * dim];
        let mut pairing = 0.0;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, x) in self.data.xs().iter().enumerate() {
            self.cfg.atom_feature_grad(x, theta, &mut v, &mut jac);
            let g = &self.grad[i * m..(i + 1) * m];
            for k in 0..m {
                pairing += g[k] * v[k];
                for j in 0..dim {
                    out[j] += g[k] * jac[k * dim + j];
                }
            }
        }
        let sign = if pairing < 0.0 { -1.0 } else { 1.0 };
        out.iter_mut().for_each(|o| *o *= sign / self.lambda);
        pairing.abs() / self.lambda
    }
}
