//! Latent-space geometry: edit directions, hyperplanes, and the closed-form
//! editing strength that moves a latent onto the example's hyperplane.
//!
//! A hyperplane `{w : w·n + b = 0}` is stored with a unit normal, so the
//! signed distance of a point is a plain dot product. The strength that
//! lands `w` on the plane through a target state `t` is `(t − w)·n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_scaled, dot, norm, sub};

/// Norm below which a displacement cannot be normalized.
pub const ZERO_DIRECTION_EPS: f64 = 1e-12;

/// A point in the latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("latent coordinate {i} is {}", values[i])));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        check_dim(expected, self.dim())
    }
}

impl TryFrom<Vec<f64>> for LatentCode {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LatentCode> for Vec<f64> {
    fn from(w: LatentCode) -> Self {
        w.0
    }
}

impl AsRef<[f64]> for LatentCode {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// A raw displacement together with its unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct EditDirection {
    delta: Vec<f64>,
    unit: Vec<f64>,
}

impl EditDirection {
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn unit(&self) -> &[f64] {
        &self.unit
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    /// `‖delta‖`
    pub fn magnitude(&self) -> f64 {
        norm(&self.delta)
    }
}

impl Serialize for EditDirection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            delta: &'a [f64],
        }
        Repr { delta: &self.delta }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EditDirection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            delta: Vec<f64>,
        }
        let repr = Repr::deserialize(d)?;
        normalize(repr.delta).map_err(serde::de::Error::custom)
    }
}

/// Normalize a displacement into an [`EditDirection`]. The raw delta is kept
/// verbatim.
pub fn normalize(delta: Vec<f64>) -> Result<EditDirection> {
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("direction has non-finite entries".into()));
    }
    let n = norm(&delta);
    if n <= ZERO_DIRECTION_EPS {
        return Err(Error::ZeroDirection);
    }
    let unit = delta.iter().map(|v| v / n).collect();
    Ok(EditDirection { delta, unit })
}

/// `{w : w·normal + offset = 0}` with a unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

/// The hyperplane with normal `dir.unit` passing through `anchor`.
pub fn hyperplane_through(anchor: &LatentCode, dir: &EditDirection) -> Result<Hyperplane> {
    check_dim(dir.dim(), anchor.dim())?;
    Ok(Hyperplane {
        normal: dir.unit.clone(),
        offset: -dot(anchor.as_slice(), &dir.unit),
    })
}

pub fn signed_distance(w: &LatentCode, h: &Hyperplane) -> Result<f64> {
    check_dim(h.normal.len(), w.dim())?;
    Ok(dot(w.as_slice(), &h.normal) + h.offset)
}

/// Editing strength `(target_state − w_test)·n` that moves `w_test` onto the
/// hyperplane through `target_state`.
pub fn compute_alpha(target_state: &LatentCode, w_test: &LatentCode, dir: &EditDirection) -> Result<f64> {
    check_dim(dir.dim(), target_state.dim())?;
    check_dim(dir.dim(), w_test.dim())?;
    Ok(projected_gap(target_state.as_slice(), w_test.as_slice(), &dir.unit))
}

#[inline]
fn projected_gap(target: &[f64], w: &[f64], unit: &[f64]) -> f64 {
    target.iter().zip(w).zip(unit).map(|((t, x), n)| (t - x) * n).sum()
}

/// `w + alpha · n`
pub fn apply_edit(w: &LatentCode, alpha: f64, dir: &EditDirection) -> Result<LatentCode> {
    check_dim(dir.dim(), w.dim())?;
    if !alpha.is_finite() {
        return Err(Error::NonFiniteInput(format!("alpha is {alpha}")));
    }
    Ok(LatentCode(add_scaled(w.as_slice(), alpha, &dir.unit)))
}

/// Per-item editing strengths, one per test latent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaAssignment {
    pub alphas: Vec<f64>,
}

impl AlphaAssignment {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }
}

/// [`compute_alpha`] for every test latent. The target's projection is
/// computed once so the whole batch is a single pass of dot products.
pub fn batch_alphas(target_state: &LatentCode, tests: &[LatentCode], dir: &EditDirection) -> Result<AlphaAssignment> {
    let d = dir.dim();
    check_dim(d, target_state.dim())?;
    if let Some((index, w)) = tests.iter().enumerate().find(|(_, w)| w.dim() != d) {
        return Err(Error::DimensionMismatchAt {
            index,
            expected: d,
            found: w.dim(),
        });
    }
    let alphas = tests
        .iter()
        .map(|w| projected_gap(target_state.as_slice(), w.as_slice(), &dir.unit))
        .collect();
    Ok(AlphaAssignment { alphas })
}

/// The point `start + s · delta`, used as the shared final state.
pub fn target_state(start: &LatentCode, dir: &EditDirection, s: f64) -> Result<LatentCode> {
    check_dim(dir.dim(), start.dim())?;
    LatentCode::new(add_scaled(start.as_slice(), s, &dir.delta))
}

/// An example edit `start → end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairRepr")]
pub struct EditPair {
    pub start: LatentCode,
    pub end: LatentCode,
}

#[derive(Deserialize)]
struct PairRepr {
    start: LatentCode,
    end: LatentCode,
}

impl TryFrom<PairRepr> for EditPair {
    type Error = Error;

    fn try_from(r: PairRepr) -> Result<Self> {
        EditPair::new(r.start, r.end)
    }
}

impl EditPair {
    pub fn new(start: LatentCode, end: LatentCode) -> Result<Self> {
        check_dim(start.dim(), end.dim())?;
        Ok(Self { start, end })
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    /// The naive direction `end − start`.
    pub fn displacement(&self) -> Vec<f64> {
        sub(self.end.as_slice(), self.start.as_slice())
    }
}
