//! Finite signed atomic measures on a compact parameter box.
//!
//! An [`AtomicMeasure`] is a finite sum `Σ cᵢ δ_{θᵢ}`. Its total-variation
//! norm is `Σ |cᵢ|` and the extreme points of the TV unit ball are the
//! signed unit point masses `±δ_θ`, which is what
//! [`AtomicMeasure::canonical_decomposition`] exposes.

use serde::{Deserialize, Serialize};

use crate::error::{GrkbsError, Result};

/// Default max-norm distance under which two atom locations are merged.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Default threshold on `|weight|` under which atoms are dropped.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for ParameterBox {
    type Error = GrkbsError;

    fn try_from(raw: RawBox) -> Result<Self> {
        ParameterBox::new(raw.lower, raw.upper)
    }
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(GrkbsError::InvalidBox("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(GrkbsError::InvalidBox(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GrkbsError::InvalidBox(format!(
                    "coordinate {k}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (lo, hi))| *lo <= *p && *p <= *hi)
    }

    /// Clamps `point` into the box in place.
    pub fn project(&self, point: &mut [f64]) {
        for (k, p) in point.iter_mut().enumerate() {
            *p = p.clamp(self.lower[k], self.upper[k]);
        }
    }

    pub fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(GrkbsError::Dimension {
                what: "parameter point",
                expected: self.dim(),
                got: point.len(),
            });
        }
        if !self.contains(point) {
            return Err(GrkbsError::OutsideBox {
                point: point.to_vec(),
            });
        }
        Ok(())
    }

    /// Tensor grid with `per_axis` points per coordinate, endpoints included.
    ///
    /// Points are ordered lexicographically with the last coordinate varying
    /// fastest; this order defines the grid index used for tie-breaking.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let dim = self.dim();
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                if per_axis == 1 {
                    vec![0.5 * (self.lower[k] + self.upper[k])]
                } else {
                    (0..per_axis)
                        .map(|i| {
                            let t = i as f64 / (per_axis - 1) as f64;
                            self.lower[k] + t * self.width(k)
                        })
                        .collect()
                }
            })
            .collect();
        let total = per_axis.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            points.push((0..dim).map(|k| axes[k][idx[k]]).collect());
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(theta: Vec<f64>, weight: f64) -> Self {
        Self { theta, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn of(value: f64) -> Self {
        if value < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// One term `γ · (±δ_θ)` of a measure written over extreme points of the
/// TV unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAtom {
    pub gamma: f64,
    pub sign: Sign,
    pub theta: Vec<f64>,
}

/// A finite signed sum of point masses on a [`ParameterBox`].
///
/// Construction validates every location and merges coincident atoms, so no
/// two atoms of a constructed measure share a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct AtomicMeasure {
    #[serde(rename = "box")]
    param_box: ParameterBox,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawMeasure {
    #[serde(rename = "box")]
    param_box: ParameterBox,
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for AtomicMeasure {
    type Error = GrkbsError;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        AtomicMeasure::new(raw.param_box, raw.atoms)
    }
}

impl AtomicMeasure {
    pub fn empty(param_box: ParameterBox) -> Self {
        Self {
            param_box,
            atoms: Vec::new(),
        }
    }

    /// Validates the atoms and merges them with the default tolerances.
    pub fn new(param_box: ParameterBox, atoms: Vec<Atom>) -> Result<Self> {
        Self::with_tolerances(param_box, atoms, DEFAULT_MERGE_TOL, DEFAULT_PRUNE_TOL)
    }

    /// Like [`new`](Self::new) with explicit merge and prune tolerances.
    pub fn with_tolerances(
        param_box: ParameterBox,
        atoms: Vec<Atom>,
        location_tol: f64,
        prune_tol: f64,
    ) -> Result<Self> {
        let checked = Self::new_unmerged(param_box, atoms)?;
        Ok(checked.merge_with(location_tol, prune_tol))
    }

    fn new_unmerged(param_box: ParameterBox, atoms: Vec<Atom>) -> Result<Self> {
        for atom in &atoms {
            param_box.check_point(&atom.theta)?;
            if !atom.weight.is_finite() {
                return Err(GrkbsError::InvalidArgument(format!(
                    "atom at {:?} has non-finite weight",
                    atom.theta
                )));
            }
        }
        Ok(Self { param_box, atoms })
    }

    pub fn single(param_box: ParameterBox, theta: Vec<f64>, weight: f64) -> Result<Self> {
        Self::new(param_box, vec![Atom::new(theta, weight)])
    }

    pub fn param_box(&self) -> &ParameterBox {
        &self.param_box
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    /// Merges atoms closer than `location_tol` in max-norm and drops atoms
    /// whose merged weight is below [`DEFAULT_PRUNE_TOL`].
    ///
    /// Each atom joins the first earlier cluster whose representative lies
    /// within tolerance; the representative keeps the location of the first
    /// atom in that cluster.
    pub fn merge_atoms(&self, location_tol: f64) -> Self {
        self.merge_with(location_tol, DEFAULT_PRUNE_TOL)
    }

    pub fn merge_with(&self, location_tol: f64, prune_tol: f64) -> Self {
        let location_tol = location_tol.max(0.0);
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for atom in &self.atoms {
            match merged
                .iter_mut()
                .find(|m| max_distance(&m.theta, &atom.theta) <= location_tol)
            {
                Some(m) => m.weight += atom.weight,
                None => merged.push(atom.clone()),
            }
        }
        merged.retain(|a| a.weight.abs() >= prune_tol);
        Self {
            param_box: self.param_box.clone(),
            atoms: merged,
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.theta.clone(), alpha * a.weight))
            .collect();
        Self {
            param_box: self.param_box.clone(),
            atoms,
        }
        .merge_atoms(DEFAULT_MERGE_TOL)
    }

    /// Concatenates the atom lists, then merges.
    pub fn add(&self, other: &AtomicMeasure) -> Result<Self> {
        if self.param_box != other.param_box {
            return Err(GrkbsError::BoxMismatch);
        }
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        Ok(Self {
            param_box: self.param_box.clone(),
            atoms,
        }
        .merge_atoms(DEFAULT_MERGE_TOL))
    }

    pub fn canonical_decomposition(&self) -> Result<Vec<SignedAtom>> {
        if self.atoms.is_empty() {
            return Err(GrkbsError::NoAtoms);
        }
        Ok(self
            .atoms
            .iter()
            .map(|a| SignedAtom {
                gamma: a.weight.abs(),
                sign: Sign::of(a.weight),
                theta: a.theta.clone(),
            })
            .collect())
    }

    /// Inverse of [`canonical_decomposition`](Self::canonical_decomposition).
    pub fn from_decomposition(param_box: ParameterBox, terms: &[SignedAtom]) -> Result<Self> {
        let atoms = terms
            .iter()
            .map(|t| Atom::new(t.theta.clone(), t.sign.as_f64() * t.gamma))
            .collect();
        Self::new(param_box, atoms)
    }
}

pub(crate) fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ParameterBox {
        ParameterBox::cube(1, -1.0, 1.0).unwrap()
    }

    #[test]
    fn tv_norm_sums_absolute_weights() {
        let m = AtomicMeasure::new(
            unit_box(),
            vec![Atom::new(vec![0.1], 2.0), Atom::new(vec![0.2], -3.0)],
        )
        .unwrap();
        assert_eq!(m.tv_norm(), 5.0);
        assert_eq!(AtomicMeasure::empty(unit_box()).tv_norm(), 0.0);
    }

    #[test]
    fn opposite_weights_cancel() {
        let m = AtomicMeasure::new(
            unit_box(),
            vec![Atom::new(vec![0.3], 1.0), Atom::new(vec![0.3], -1.0)],
        )
        .unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn nearby_atoms_merge() {
        let raw = AtomicMeasure {
            param_box: unit_box(),
            atoms: vec![Atom::new(vec![0.3], 0.5), Atom::new(vec![0.3 + 1e-6], 0.5)],
        };
        let merged = raw.merge_atoms(1e-5);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.atoms()[0].weight, 1.0);
        assert_eq!(merged.atoms()[0].theta, vec![0.3]);
    }

    #[test]
    fn decomposition_of_negative_atom() {
        let m = AtomicMeasure::single(unit_box(), vec![0.3], -2.0).unwrap();
        let d = m.canonical_decomposition().unwrap();
        assert_eq!(
            d,
            vec![SignedAtom {
                gamma: 2.0,
                sign: Sign::Negative,
                theta: vec![0.3]
            }]
        );
    }

    #[test]
    fn decomposition_mass_matches_tv() {
        let m = AtomicMeasure::new(
            unit_box(),
            vec![
                Atom::new(vec![-0.5], 1.0),
                Atom::new(vec![0.0], -1.0),
                Atom::new(vec![0.5], 2.0),
            ],
        )
        .unwrap();
        let d = m.canonical_decomposition().unwrap();
        assert_eq!(d.iter().map(|t| t.gamma).sum::<f64>(), 4.0);
        assert_eq!(m.tv_norm(), 4.0);
    }

    #[test]
    fn empty_decomposition_is_an_error() {
        let err = AtomicMeasure::empty(unit_box())
            .canonical_decomposition()
            .unwrap_err();
        assert_eq!(err.to_string(), "no atoms");
    }

    #[test]
    fn rejects_atoms_outside_box() {
        assert!(AtomicMeasure::single(unit_box(), vec![1.5], 1.0).is_err());
        assert!(AtomicMeasure::single(unit_box(), vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn box_validation() {
        assert!(ParameterBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(ParameterBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(ParameterBox::new(vec![], vec![]).is_err());
    }

    #[test]
    fn grid_includes_corners_in_lexicographic_order() {
        let b = ParameterBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[1], vec![0.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }

    #[test]
    fn json_field_names() {
        let m = AtomicMeasure::single(unit_box(), vec![0.25], 1.5).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"box":{"lower":[-1.0],"upper":[1.0]},"atoms":[{"theta":[0.25],"weight":1.5}]}"#
        );
        let back: AtomicMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"box":{"lower":[1.0],"upper":[0.0]},"atoms":[]}"#;
        assert!(serde_json::from_str::<AtomicMeasure>(bad).is_err());
    }
}
