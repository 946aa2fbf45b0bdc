//! Integral feature maps `φ(x)(μ) = ∫ ρ(x,θ) β(θ) dμ(θ) · e` over atomic measures.
//!
//! A parameter point is `θ = (w, b)` with `w ∈ ℝⁿ`, and the unit response is
//! `ρ(x,θ) = σ(w·x + b)`. Vector outputs use a fixed embedding `e ∈ ℝᵐ`, so
//! every atom contributes along the same direction of `E`.

use serde::{Deserialize, Serialize};

use crate::error::{GrkbsError, Result};
use crate::measure::{AtomicMeasure, ParameterBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Tanh,
    Gaussian,
}

impl ActivationKind {
    pub fn value(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Gaussian => (-z * z).exp(),
        }
    }

    /// Value and derivative. The relu derivative at 0 is taken as 0.
    pub fn value_and_slope(self, z: f64) -> (f64, f64) {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            ActivationKind::Gaussian => {
                let g = (-z * z).exp();
                (g, -2.0 * z * g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    ConstantOne,
    /// `Π_k cos(π (θ_k − c_k) / width_k)`, zero on the box boundary.
    CosineBump,
}

/// Anything that maps an input `x` and a parameter point `θ` to a vector of
/// `E`, linearly extended to atomic measures.
///
/// The solver and the verification code are generic over this trait so the
/// plain neural map and the PDE-composed map are interchangeable.
pub trait ConfigurationMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn param_box(&self) -> &ParameterBox;

    /// Writes `v(x, θ)` into `out`. Dimensions are not checked.
    fn atom_feature_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// Writes `v(x, θ)` into `value` and `∂v/∂θ` into `jac`, stored row-major
    /// as `output_dim × theta_dim`.
    fn atom_feature_grad(&self, x: &[f64], theta: &[f64], value: &mut [f64], jac: &mut [f64]);

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(GrkbsError::Dimension {
                what: "input vector",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn atom_feature(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.param_box().check_point(theta)?;
        let mut out = vec![0.0; self.output_dim()];
        self.atom_feature_into(x, theta, &mut out);
        Ok(out)
    }

    /// `φ(x)(μ) = Σ cᵢ v(x, θᵢ)`.
    fn evaluate(&self, x: &[f64], measure: &AtomicMeasure) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if measure.param_box() != self.param_box() {
            return Err(GrkbsError::BoxMismatch);
        }
        let mut out = vec![0.0; self.output_dim()];
        let mut v = vec![0.0; self.output_dim()];
        for atom in measure.atoms() {
            self.atom_feature_into(x, &atom.theta, &mut v);
            for (o, vi) in out.iter_mut().zip(&v) {
                *o += atom.weight * vi;
            }
        }
        Ok(out)
    }

    /// Approximates `sup_θ ‖v(x, θ)‖`, the operator norm of `φ(x)` from the
    /// TV-normed measure space into `E`.
    ///
    /// A 32-point-per-axis grid is followed by coordinate-wise golden-section
    /// sweeps (20 steps each) around the best grid point.
    fn operator_norm_bound(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let pbox = self.param_box();
        let mut v = vec![0.0; self.output_dim()];
        let mut norm_at = |theta: &[f64]| {
            self.atom_feature_into(x, theta, &mut v);
            norm2(&v)
        };
        let (mut best, mut best_val) = (None, f64::NEG_INFINITY);
        for theta in pbox.grid(NORM_GRID_PER_AXIS) {
            let val = norm_at(&theta);
            if val > best_val {
                best_val = val;
                best = Some(theta);
            }
        }
        let mut theta = best.expect("grid is never empty");
        let cells: Vec<f64> = (0..pbox.dim())
            .map(|k| pbox.width(k) / (NORM_GRID_PER_AXIS - 1) as f64)
            .collect();
        for _ in 0..NORM_REFINE_SWEEPS {
            let before = best_val;
            for k in 0..pbox.dim() {
                let lo = (theta[k] - cells[k]).max(pbox.lower()[k]);
                let hi = (theta[k] + cells[k]).min(pbox.upper()[k]);
                let mut probe = theta.clone();
                let (t, val) = golden_max(lo, hi, NORM_GOLDEN_STEPS, |t| {
                    probe[k] = t;
                    norm_at(&probe)
                });
                if val > best_val {
                    best_val = val;
                    theta[k] = t;
                }
            }
            if best_val <= before {
                break;
            }
        }
        Ok(best_val)
    }
}

const NORM_GRID_PER_AXIS: usize = 32;
const NORM_GOLDEN_STEPS: usize = 20;
const NORM_REFINE_SWEEPS: usize = 8;

/// Golden-section search for a maximum of `f` on `[lo, hi]`. Returns the best
/// point seen, including both endpoints.
pub(crate) fn golden_max(
    lo: f64,
    hi: f64,
    steps: usize,
    mut f: impl FnMut(f64) -> f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut best = (lo, f(lo));
    let f_hi = f(hi);
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..steps {
        if fc > best.1 {
            best = (c, fc);
        }
        if fd > best.1 {
            best = (d, fd);
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Single-layer integral feature map with activation, envelope and output
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMap")]
pub struct FeatureMapConfig {
    pub activation: ActivationKind,
    pub envelope: Envelope,
    #[serde(rename = "box")]
    param_box: ParameterBox,
    input_dim: usize,
    output_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_weights: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawFeatureMap {
    activation: ActivationKind,
    #[serde(default)]
    envelope: Envelope,
    #[serde(rename = "box")]
    param_box: ParameterBox,
    input_dim: usize,
    output_dim: usize,
    #[serde(default)]
    output_weights: Option<Vec<f64>>,
}

impl TryFrom<RawFeatureMap> for FeatureMapConfig {
    type Error = GrkbsError;

    fn try_from(raw: RawFeatureMap) -> Result<Self> {
        let mut cfg = FeatureMapConfig::new(
            raw.activation,
            raw.envelope,
            raw.param_box,
            raw.input_dim,
            raw.output_dim,
        )?;
        if let Some(w) = raw.output_weights {
            cfg = cfg.with_output_weights(w)?;
        }
        Ok(cfg)
    }
}

impl FeatureMapConfig {
    pub fn new(
        activation: ActivationKind,
        envelope: Envelope,
        param_box: ParameterBox,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(GrkbsError::InvalidArgument(
                "input_dim must be positive".into(),
            ));
        }
        if output_dim == 0 {
            return Err(GrkbsError::InvalidArgument(
                "output_dim must be positive".into(),
            ));
        }
        if param_box.dim() != input_dim + 1 {
            return Err(GrkbsError::Dimension {
                what: "parameter box (input_dim + 1)",
                expected: input_dim + 1,
                got: param_box.dim(),
            });
        }
        Ok(Self {
            activation,
            envelope,
            param_box,
            input_dim,
            output_dim,
            output_weights: None,
        })
    }

    /// Scalar-output map with `β ≡ 1` on the given box.
    pub fn scalar(activation: ActivationKind, param_box: ParameterBox) -> Result<Self> {
        let n = param_box.dim().saturating_sub(1);
        Self::new(activation, Envelope::ConstantOne, param_box, n, 1)
    }

    pub fn with_output_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.output_dim {
            return Err(GrkbsError::Dimension {
                what: "output_weights",
                expected: self.output_dim,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(GrkbsError::InvalidArgument(
                "output_weights must be finite".into(),
            ));
        }
        self.output_weights = Some(weights);
        Ok(self)
    }

    pub fn output_weights(&self) -> Option<&[f64]> {
        self.output_weights.as_deref()
    }

    /// The embedding `e`; all ones when no weights are configured.
    pub fn embedding(&self) -> Vec<f64> {
        self.output_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.output_dim])
    }

    fn embed(&self, k: usize) -> f64 {
        self.output_weights.as_ref().map_or(1.0, |w| w[k])
    }

    /// `ρ(x,θ) β(θ)`.
    pub fn scalar_feature(&self, x: &[f64], theta: &[f64]) -> f64 {
        let z = pre_activation(x, theta);
        self.activation.value(z) * self.envelope_value(theta)
    }

    /// `ρ(x,θ) β(θ)` and its gradient in θ written to `grad`.
    pub fn scalar_feature_grad(&self, x: &[f64], theta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.input_dim;
        let z = pre_activation(x, theta);
        let (s, ds) = self.activation.value_and_slope(z);
        match self.envelope {
            Envelope::ConstantOne => {
                for k in 0..n {
                    grad[k] = ds * x[k];
                }
                grad[n] = ds;
                s
            }
            Envelope::CosineBump => {
                let dim = self.param_box.dim();
                let mut cosines = vec![0.0; dim];
                let mut sines = vec![0.0; dim];
                let mut scale = vec![0.0; dim];
                for k in 0..dim {
                    let center = 0.5 * (self.param_box.lower()[k] + self.param_box.upper()[k]);
                    scale[k] = std::f64::consts::PI / self.param_box.width(k);
                    let arg = scale[k] * (theta[k] - center);
                    cosines[k] = arg.cos();
                    sines[k] = arg.sin();
                }
                let beta: f64 = cosines.iter().product();
                for k in 0..dim {
                    let others: f64 = (0..dim).filter(|&j| j != k).map(|j| cosines[j]).product();
                    let dbeta = -scale[k] * sines[k] * others;
                    let drho = if k < n { ds * x[k] } else { ds };
                    grad[k] = drho * beta + s * dbeta;
                }
                s * beta
            }
        }
    }

    fn envelope_value(&self, theta: &[f64]) -> f64 {
        match self.envelope {
            Envelope::ConstantOne => 1.0,
            Envelope::CosineBump => theta
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let center = 0.5 * (self.param_box.lower()[k] + self.param_box.upper()[k]);
                    (std::f64::consts::PI * (t - center) / self.param_box.width(k)).cos()
                })
                .product(),
        }
    }
}

fn pre_activation(x: &[f64], theta: &[f64]) -> f64 {
    let n = x.len();
    x.iter().zip(&theta[..n]).map(|(a, w)| a * w).sum::<f64>() + theta[n]
}

impl ConfigurationMap for FeatureMapConfig {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn param_box(&self) -> &ParameterBox {
        &self.param_box
    }

    fn atom_feature_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let s = self.scalar_feature(x, theta);
        for (k, o) in out.iter_mut().enumerate() {
            *o = s * self.embed(k);
        }
    }

    fn atom_feature_grad(&self, x: &[f64], theta: &[f64], value: &mut [f64], jac: &mut [f64]) {
        let dim = self.param_box.dim();
        let mut grad = vec![0.0; dim];
        let s = self.scalar_feature_grad(x, theta, &mut grad);
        for k in 0..self.output_dim {
            let e = self.embed(k);
            value[k] = s * e;
            for j in 0..dim {
                jac[k * dim + j] = grad[j] * e;
            }
        }
    }
}

/// Nested single-layer maps with fixed hidden-layer measures.
///
/// Layer `i` consumes the output of layer `i − 1`; the last layer is left
/// free so that the stack is linear in its measure.
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<FeatureMapConfig>,
    parameters: Vec<AtomicMeasure>,
}

impl LayerStack {
    pub fn new(layers: Vec<FeatureMapConfig>, parameters: Vec<AtomicMeasure>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GrkbsError::InvalidArgument(
                "stack needs at least one layer".into(),
            ));
        }
        if parameters.len() + 1 != layers.len() {
            return Err(GrkbsError::InvalidArgument(format!(
                "{} layers need {} hidden measures, got {}",
                layers.len(),
                layers.len() - 1,
                parameters.len()
            )));
        }
        for i in 1..layers.len() {
            if layers[i - 1].output_dim != layers[i].input_dim {
                return Err(GrkbsError::ChainMismatch {
                    layer: i,
                    expected: layers[i - 1].output_dim,
                    got: layers[i].input_dim,
                });
            }
        }
        for (i, (layer, mu)) in layers.iter().zip(&parameters).enumerate() {
            if layer.param_box() != mu.param_box() {
                return Err(GrkbsError::InvalidArgument(format!(
                    "hidden measure {i} lives on a different box than layer {i}"
                )));
            }
        }
        Ok(Self { layers, parameters })
    }

    pub fn layers(&self) -> &[FeatureMapConfig] {
        &self.layers
    }

    pub fn last(&self) -> &FeatureMapConfig {
        self.layers.last().expect("non-empty by construction")
    }

    /// Output of the hidden layers, i.e. the point fed to the last layer.
    pub fn hidden_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut e = x.to_vec();
        for (layer, mu) in self.layers.iter().zip(&self.parameters) {
            e = layer.evaluate(&e, mu)?;
        }
        Ok(e)
    }

    pub fn compose_forward(&self, x: &[f64], final_measure: &AtomicMeasure) -> Result<Vec<f64>> {
        let e = self.hidden_output(x)?;
        self.last().evaluate(&e, final_measure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_1d() -> FeatureMapConfig {
        FeatureMapConfig::scalar(
            ActivationKind::Relu,
            ParameterBox::cube(2, -2.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn relu_atom_feature() {
        let cfg = relu_1d();
        assert_eq!(cfg.atom_feature(&[3.0], &[1.0, 0.0]).unwrap(), vec![3.0]);
        assert_eq!(cfg.atom_feature(&[-2.0], &[1.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn tanh_zero_preactivation() {
        let cfg = FeatureMapConfig::scalar(
            ActivationKind::Tanh,
            ParameterBox::cube(2, -2.0, 2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(cfg.atom_feature(&[0.5], &[2.0, -1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = relu_1d();
        assert!(matches!(
            cfg.atom_feature(&[1.0, 2.0], &[1.0, 0.0]),
            Err(GrkbsError::Dimension { .. })
        ));
    }

    #[test]
    fn evaluate_single_atom_and_empty() {
        let cfg = relu_1d();
        let m = AtomicMeasure::single(cfg.param_box().clone(), vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(cfg.evaluate(&[3.0], &m).unwrap(), vec![6.0]);
        let empty = AtomicMeasure::empty(cfg.param_box().clone());
        assert_eq!(cfg.evaluate(&[3.0], &empty).unwrap(), vec![0.0]);
    }

    #[test]
    fn evaluate_rejects_foreign_box() {
        let cfg = relu_1d();
        let m = AtomicMeasure::empty(ParameterBox::cube(2, -1.0, 1.0).unwrap());
        assert!(matches!(
            cfg.evaluate(&[0.0], &m),
            Err(GrkbsError::BoxMismatch)
        ));
    }

    #[test]
    fn vector_output_uses_embedding() {
        let cfg = FeatureMapConfig::new(
            ActivationKind::Relu,
            Envelope::ConstantOne,
            ParameterBox::cube(2, -1.0, 1.0).unwrap(),
            1,
            2,
        )
        .unwrap();
        assert_eq!(
            cfg.atom_feature(&[1.0], &[1.0, 0.0]).unwrap(),
            vec![1.0, 1.0]
        );
        let cfg = cfg.with_output_weights(vec![2.0, -1.0]).unwrap();
        assert_eq!(
            cfg.atom_feature(&[1.0], &[1.0, 0.0]).unwrap(),
            vec![2.0, -1.0]
        );
    }

    #[test]
    fn cosine_bump_vanishes_on_boundary() {
        let cfg = FeatureMapConfig::new(
            ActivationKind::Gaussian,
            Envelope::CosineBump,
            ParameterBox::cube(2, -1.0, 1.0).unwrap(),
            1,
            1,
        )
        .unwrap();
        let v = cfg.atom_feature(&[0.3], &[1.0, 0.2]).unwrap()[0];
        assert!(v.abs() < 1e-15);
        let v = cfg.atom_feature(&[0.0], &[0.0, 0.0]).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theta_gradient_matches_central_differences() {
        let bx = ParameterBox::new(vec![-1.5, -2.0, -1.0], vec![2.0, 1.0, 1.0]).unwrap();
        let x = [0.7, -0.4];
        let theta = [0.3, 0.45, -0.2];
        for act in [
            ActivationKind::Relu,
            ActivationKind::Tanh,
            ActivationKind::Gaussian,
        ] {
            for env in [Envelope::ConstantOne, Envelope::CosineBump] {
                let cfg = FeatureMapConfig::new(act, env, bx.clone(), 2, 1).unwrap();
                let mut grad = [0.0; 3];
                let s = cfg.scalar_feature_grad(&x, &theta, &mut grad);
                assert!((s - cfg.scalar_feature(&x, &theta)).abs() < 1e-15);
                let h = 1e-6;
                for k in 0..3 {
                    let mut tp = theta;
                    let mut tm = theta;
                    tp[k] += h;
                    tm[k] -= h;
                    let fd =
                        (cfg.scalar_feature(&x, &tp) - cfg.scalar_feature(&x, &tm)) / (2.0 * h);
                    assert!(
                        (fd - grad[k]).abs() < 1e-7,
                        "{act:?} {env:?} k={k}: {fd} vs {}",
                        grad[k]
                    );
                }
            }
        }
    }

    #[test]
    fn golden_max_finds_parabola_peak() {
        let (t, v) = golden_max(-1.0, 2.0, 60, |t| -(t - 0.3) * (t - 0.3));
        assert!((t - 0.3).abs() < 1e-6);
        assert!(v <= 0.0 && v > -1e-12);
    }

    #[test]
    fn stack_rejects_bad_chaining() {
        let l0 = FeatureMapConfig::new(
            ActivationKind::Tanh,
            Envelope::ConstantOne,
            ParameterBox::cube(2, -1.0, 1.0).unwrap(),
            1,
            2,
        )
        .unwrap();
        let l1 = relu_1d();
        let mu0 = AtomicMeasure::empty(l0.param_box().clone());
        assert!(matches!(
            LayerStack::new(vec![l0, l1], vec![mu0]),
            Err(GrkbsError::ChainMismatch { layer: 1, .. })
        ));
    }

    #[test]
    fn json_keys() {
        let cfg = relu_1d();
        let v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        let obj = v.as_object().unwrap();
        for key in ["activation", "envelope", "box", "input_dim", "output_dim"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(obj["activation"], "relu");
        assert_eq!(obj["envelope"], "constant_one");
        let back: FeatureMapConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
    }
}
