//! Shannon entropy primitives over explicit finite probability tables.
//!
//! All computations run in nats; [`EntropyUnit`] only matters at the
//! boundary, when an [`EntropyValue`] is produced.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, xlogx};

/// Tolerance on `Σ p = 1` for tables handed to this module.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Entropy differences in `[-NEGATIVE_CLAMP, 0)` are rounding noise and are
/// reported as zero; anything more negative is an error.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnit {
    Nats,
    #[default]
    Bits,
}

impl EntropyUnit {
    /// Converts a value in nats into this unit.
    #[inline]
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            EntropyUnit::Nats => nats,
            EntropyUnit::Bits => nats / std::f64::consts::LN_2,
        }
    }

    #[inline]
    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            EntropyUnit::Nats => value,
            EntropyUnit::Bits => value * std::f64::consts::LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntropyUnit::Nats => "nats",
            EntropyUnit::Bits => "bits",
        }
    }
}

/// A nonnegative entropy tagged with its unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub unit: EntropyUnit,
}

impl EntropyValue {
    pub fn from_nats(nats: f64, unit: EntropyUnit) -> Self {
        EntropyValue {
            value: unit.from_nats(nats),
            unit,
        }
    }

    pub fn nats(&self) -> f64 {
        self.unit.to_nats(self.value)
    }

    pub fn bits(&self) -> f64 {
        EntropyUnit::Bits.from_nats(self.nats())
    }

    pub fn to(&self, unit: EntropyUnit) -> EntropyValue {
        if unit == self.unit {
            *self
        } else {
            EntropyValue::from_nats(self.nats(), unit)
        }
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit.name())
    }
}

/// Maps a computed entropy difference to a nonnegative value.
pub(crate) fn clamp_nonnegative(x: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x >= -NEGATIVE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeEntropy(x))
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    if let Some((i, &p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
    {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} is {p}, expected a finite nonnegative number"
        )));
    }
    let total = pairwise_sum(probs);
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {total}, off by {:e}",
            total - 1.0
        )));
    }
    Ok(())
}

/// Entropy in nats of an unchecked probability vector.
pub(crate) fn entropy_nats(probs: &[f64]) -> f64 {
    let terms: Vec<f64> = probs.iter().map(|&p| -xlogx(p)).collect();
    pairwise_sum(&terms)
}

/// Binary entropy `h(p)` in nats, without domain checks.
#[inline]
pub(crate) fn binary_entropy_nats(p: f64) -> f64 {
    -xlogx(p) - xlogx(1.0 - p)
}

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Dist { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Dist {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Dense joint law of several finite-valued coordinates, row-major with the
/// last coordinate varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    shape: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(shape: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidDistribution(format!(
                "shape {shape:?} must be nonempty with positive sizes"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "shape {shape:?} needs {expected} entries, got {}",
                probs.len()
            )));
        }
        validate_probs(&probs)?;
        Ok(JointTable { shape, probs })
    }

    /// Builds a table without the normalization check; callers guarantee it.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), probs.len());
        JointTable { shape, probs }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    fn check_coords(&self, coords: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.dims()];
        for &c in coords {
            if c >= self.dims() {
                return Err(Error::InvalidCoordinates(format!(
                    "coordinate {c} out of range for {} coordinates",
                    self.dims()
                )));
            }
            if seen[c] {
                return Err(Error::InvalidCoordinates(format!(
                    "coordinate {c} repeated"
                )));
            }
            seen[c] = true;
        }
        Ok(())
    }

    /// Marginal law of `keep`, in the order given. An empty `keep` yields the
    /// trivial one-point table.
    pub fn marginal(&self, keep: &[usize]) -> Result<JointTable> {
        self.check_coords(keep)?;
        if keep.is_empty() {
            return Ok(JointTable::from_parts_unchecked(vec![1], vec![1.0]));
        }
        let dims = self.dims();
        let mut strides = vec![1usize; dims];
        for d in (0..dims.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.shape[d + 1];
        }
        let out_shape: Vec<usize> = keep.iter().map(|&c| self.shape[c]).collect();
        let mut out_strides = vec![1usize; keep.len()];
        for d in (0..keep.len().saturating_sub(1)).rev() {
            out_strides[d] = out_strides[d + 1] * out_shape[d + 1];
        }
        let mut out = vec![0.0; out_shape.iter().product()];
        for (flat, &p) in self.probs.iter().enumerate() {
            let mut target = 0;
            for (k, &c) in keep.iter().enumerate() {
                let digit = (flat / strides[c]) % self.shape[c];
                target += digit * out_strides[k];
            }
            out[target] += p;
        }
        Ok(JointTable::from_parts_unchecked(out_shape, out))
    }

    pub(crate) fn entropy_nats(&self) -> f64 {
        entropy_nats(&self.probs)
    }

    /// `H(targets | rest)` in nats.
    pub(crate) fn conditional_entropy_nats(&self, targets: &[usize]) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::InvalidCoordinates("empty target set".into()));
        }
        self.check_coords(targets)?;
        let rest: Vec<usize> = (0..self.dims()).filter(|c| !targets.contains(c)).collect();
        let h_rest = self.marginal(&rest)?.entropy_nats();
        clamp_nonnegative(self.entropy_nats() - h_rest)
    }
}

pub fn binary_entropy(p: f64, unit: EntropyUnit) -> Result<EntropyValue> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(EntropyValue::from_nats(binary_entropy_nats(p), unit))
}

pub fn shannon_entropy(d: &Dist, unit: EntropyUnit) -> EntropyValue {
    EntropyValue::from_nats(entropy_nats(d.probs()), unit)
}

/// `H(X_targets | X_rest) = H(X) - H(X_rest)`.
pub fn conditional_entropy(
    j: &JointTable,
    targets: &[usize],
    unit: EntropyUnit,
) -> Result<EntropyValue> {
    Ok(EntropyValue::from_nats(
        j.conditional_entropy_nats(targets)?,
        unit,
    ))
}

/// Block erasure entropy `Σ_i H(X_i | X_{\i})`.
pub fn erasure_entropy_block(j: &JointTable, unit: EntropyUnit) -> Result<EntropyValue> {
    let h_all = j.entropy_nats();
    let mut total = 0.0;
    for i in 0..j.dims() {
        let rest: Vec<usize> = (0..j.dims()).filter(|&c| c != i).collect();
        total += clamp_nonnegative(h_all - j.marginal(&rest)?.entropy_nats())?;
    }
    Ok(EntropyValue::from_nats(total, unit))
}
