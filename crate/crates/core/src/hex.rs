//! Honeycomb-lattice erasure entropy from the exact pressure.
//!
//! The pressure is a periodic double integral evaluated with the trapezoid
//! rule, its β-derivative gives the nearest-neighbour correlation, and the
//! correlation fixes the two boundary-class probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{binary_entropy_nats, clamp_nonnegative, EntropyUnit, EntropyValue};
use crate::error::{Error, Result};
use crate::gibbs::TorusMeasure;
use crate::lattice::{honeycomb_class, single_site_conditional, LatticeKind};
use crate::numerics::pairwise_sum;

/// Smallest admissible value of the logarithm's argument.
pub const CRITICAL_GUARD: f64 = 1e-8;
const NEGATIVE_PROB_TOL: f64 = 1e-9;
/// Below this coupling the class probabilities are returned as uniform.
pub const DEGENERATE_COUPLING: f64 = 1e-6;

/// `βJ` at which the integrand first touches zero, `acosh(2) / 2`.
pub fn critical_coupling() -> f64 {
    2f64.acosh() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Initial points per axis, a power of two >= 16.
    pub points: usize,
    pub tolerance: f64,
    pub max_levels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            points: 16,
            tolerance: 1e-13,
            max_levels: 8,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 16 || !self.points.is_power_of_two() {
            return Err(Error::Domain(format!("grid size {} must be a power of two >= 16", self.points)));
        }
        if !(self.tolerance >= 1e-13) {
            return Err(Error::Domain(format!("tolerance {} below 1e-13", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeConfig {
    pub step: f64,
    /// Number of halvings combined by Richardson extrapolation; 2 gives
    /// fourth order.
    pub levels: usize,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        DerivativeConfig { step: 1e-3, levels: 2 }
    }
}

impl DerivativeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1e-6..=1e-2).contains(&self.step) {
            return Err(Error::Domain(format!("step {} outside [1e-6, 1e-2]", self.step)));
        }
        if self.levels == 0 || self.levels > 6 {
            return Err(Error::Domain(format!("levels {} outside 1..=6", self.levels)));
        }
        Ok(())
    }
}

fn check_guard(beta: f64, coupling: f64) -> Result<()> {
    let c = (2.0 * beta * coupling).cosh();
    let min_argument = (c - 2.0).powi(2) * (c + 1.0);
    if !min_argument.is_finite() || min_argument < CRITICAL_GUARD {
        return Err(Error::NearCritical { min_argument });
    }
    Ok(())
}

/// Trapezoid value on a fixed `n x n` periodic grid.
fn pressure_on_grid(beta: f64, coupling: f64, n: usize) -> f64 {
    let k = 2.0 * beta * coupling;
    let a = k.cosh().powi(3) + 1.0;
    let s2 = k.sinh().powi(2);
    let step = std::f64::consts::TAU / n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t1 = i as f64 * step;
            let row: Vec<f64> = (0..n)
                .map(|j| {
                    let t2 = j as f64 * step;
                    (a - s2 * ((t1 - t2).cos() + t1.cos() + t2.cos())).ln()
                })
                .collect();
            pairwise_sum(&row)
        })
        .collect();
    let mean = pairwise_sum(&rows) / (n * n) as f64;
    0.75 * std::f64::consts::LN_2 + 0.25 * mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureValue {
    pub value: f64,
    pub points: usize,
    /// Change in the last grid doubling.
    pub last_change: f64,
}

/// Doubles the grid from `cfg.points` until successive values agree within
/// `cfg.tolerance`.
pub fn pressure_hex_detailed(beta: f64, coupling: f64, cfg: &QuadratureConfig) -> Result<PressureValue> {
    cfg.validate()?;
    if !(beta.is_finite() && coupling.is_finite()) {
        return Err(Error::Domain(format!("beta {beta}, J {coupling}")));
    }
    check_guard(beta, coupling)?;
    let mut n = cfg.points;
    let mut prev = pressure_on_grid(beta, coupling, n);
    for _ in 0..cfg.max_levels {
        n *= 2;
        let next = pressure_on_grid(beta, coupling, n);
        let change = (next - prev).abs();
        if change <= cfg.tolerance {
            return Ok(PressureValue {
                value: next,
                points: n,
                last_change: change,
            });
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!(
        "pressure quadrature not within {} at {n} points per axis",
        cfg.tolerance
    )))
}

pub fn pressure_hex(beta: f64, coupling: f64, cfg: &QuadratureConfig) -> Result<f64> {
    pressure_hex_detailed(beta, coupling, cfg).map(|p| p.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub beta: f64,
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureDerivative {
    /// `p'(1)`.
    pub value: f64,
    /// Difference between the last two Richardson columns.
    pub error_estimate: f64,
    pub samples: Vec<PressureSample>,
    pub points: usize,
}

/// `dp/dβ` at β = 1 by Richardson-extrapolated central differences. The
/// grid is chosen once (the finest needed at β = 1 and at the outermost
/// samples) and reused for every β, so the differences see a single smooth
/// discretization.
pub fn pressure_derivative(coupling: f64, qcfg: &QuadratureConfig, dcfg: &DerivativeConfig) -> Result<PressureDerivative> {
    dcfg.validate()?;
    let h = dcfg.step;
    let points = [1.0 - h, 1.0, 1.0 + h]
        .iter()
        .map(|&b| pressure_hex_detailed(b, coupling, qcfg).map(|p| p.points))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(qcfg.points);
    let mut samples = Vec::new();
    let mut table: Vec<Vec<f64>> = Vec::new();
    for level in 0..dcfg.levels {
        let hl = h / (1 << level) as f64;
        let lo = pressure_on_grid(1.0 - hl, coupling, points);
        let hi = pressure_on_grid(1.0 + hl, coupling, points);
        samples.push(PressureSample { beta: 1.0 - hl, pressure: lo });
        samples.push(PressureSample { beta: 1.0 + hl, pressure: hi });
        let mut row = vec![(hi - lo) / (2.0 * hl)];
        for m in 1..=level {
            let f = 4f64.powi(m as i32);
            let prev = &table[level - 1];
            row.push((f * row[m - 1] - prev[m - 1]) / (f - 1.0));
        }
        table.push(row);
    }
    samples.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let last = table.last().expect("at least one level");
    let value = *last.last().expect("nonempty row");
    let error_estimate = if last.len() >= 2 {
        (value - last[last.len() - 2]).abs()
    } else {
        f64::NAN
    };
    Ok(PressureDerivative {
        value,
        error_estimate,
        samples,
        points,
    })
}

/// `E(σ_I σ_C) = 2 p'(1) / (3J)`, nonnegative for J > 0.
pub fn nn_correlation_hex(coupling: f64, qcfg: &QuadratureConfig, dcfg: &DerivativeConfig) -> Result<f64> {
    if coupling == 0.0 {
        return Ok(0.0);
    }
    let d = pressure_derivative(coupling, qcfg, dcfg)?;
    Ok(2.0 * d.value / (3.0 * coupling))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HexClassSystem {
    /// `E = 2 P1 tanh 3J + 2 P2 tanh J`.
    #[default]
    Corrected,
    /// `E = P1 tanh 3J + P2 tanh J`, kept for comparison.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexClassProbs {
    pub p1: f64,
    pub p2: f64,
}

impl HexClassProbs {
    /// `2 P1 + 6 P2`.
    pub fn total(&self) -> f64 {
        2.0 * self.p1 + 6.0 * self.p2
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [("P1", self.p1), ("P2", self.p2)] {
            if !(p.is_finite() && p >= -NEGATIVE_PROB_TOL) {
                return Err(Error::InconsistentCorrelations(format!("{name} = {p}")));
            }
        }
        if (self.total() - 1.0).abs() > NEGATIVE_PROB_TOL {
            return Err(Error::InconsistentCorrelations(format!("2P1 + 6P2 = {}", self.total())));
        }
        Ok(())
    }
}

pub fn hex_class_probs(coupling: f64, correlation: f64, system: HexClassSystem) -> Result<HexClassProbs> {
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(Error::Domain(format!("J = {coupling} must be finite and nonnegative")));
    }
    if !(correlation.abs() <= 1.0) {
        return Err(Error::InconsistentCorrelations(format!("E = {correlation} outside [-1, 1]")));
    }
    if coupling < DEGENERATE_COUPLING {
        return Ok(HexClassProbs { p1: 0.125, p2: 0.125 });
    }
    let (t1, t3) = (coupling.tanh(), (3.0 * coupling).tanh());
    let den = 6.0 * t3 - 2.0 * t1;
    let probs = match system {
        HexClassSystem::Corrected => {
            let p1 = (3.0 * correlation - t1) / den;
            HexClassProbs {
                p1,
                p2: (1.0 - 2.0 * p1) / 6.0,
            }
        }
        HexClassSystem::AsPrinted => HexClassProbs {
            p1: (6.0 * correlation - t1) / den,
            p2: (t3 - 2.0 * correlation) / den,
        },
    };
    probs.validate()?;
    Ok(probs)
}

/// `2 P1 h(c(3)) + 6 P2 h(c(1))` with `c(S) = e^{JS} / (e^{JS} + e^{-JS})`.
pub fn erasure_entropy_hex(coupling: f64, probs: &HexClassProbs, unit: EntropyUnit) -> Result<EntropyValue> {
    probs.validate()?;
    let nats = 2.0 * probs.p1 * binary_entropy_nats(single_site_conditional(coupling, 3))
        + 6.0 * probs.p2 * binary_entropy_nats(single_site_conditional(coupling, 1));
    Ok(EntropyValue::from_nats(clamp_nonnegative(nats)?, unit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexPipelineResult {
    pub coupling: f64,
    pub pressure: f64,
    pub pressure_points: usize,
    pub pressure_change: f64,
    pub samples: Vec<PressureSample>,
    pub pressure_derivative: f64,
    pub derivative_error: f64,
    pub correlation: f64,
    pub correlation_error: f64,
    pub class_probs: HexClassProbs,
    pub erasure_entropy: EntropyValue,
}

/// Pressure, derivative, correlation, class probabilities and erasure
/// entropy in one pass. The antiferromagnet is mapped to `|J|` by flipping
/// one sublattice, which leaves the erasure entropy unchanged.
pub fn hex_pipeline(
    coupling: f64,
    qcfg: &QuadratureConfig,
    dcfg: &DerivativeConfig,
    unit: EntropyUnit,
) -> Result<HexPipelineResult> {
    let j = coupling.abs();
    let p = pressure_hex_detailed(1.0, j, qcfg).map_err(|e| e.at("pressure"))?;
    let d = if j == 0.0 {
        PressureDerivative {
            value: 0.0,
            error_estimate: 0.0,
            samples: Vec::new(),
            points: p.points,
        }
    } else {
        pressure_derivative(j, qcfg, dcfg).map_err(|e| e.at("derivative"))?
    };
    let scale = if j == 0.0 { 0.0 } else { 2.0 / (3.0 * j) };
    let correlation = scale * d.value;
    let class_probs = hex_class_probs(j, correlation, HexClassSystem::Corrected).map_err(|e| e.at("classes"))?;
    let erasure_entropy = erasure_entropy_hex(j, &class_probs, unit).map_err(|e| e.at("entropy"))?;
    Ok(HexPipelineResult {
        coupling,
        pressure: p.value,
        pressure_points: p.points,
        pressure_change: p.last_change,
        samples: d.samples,
        pressure_derivative: d.value,
        derivative_error: d.error_estimate,
        correlation,
        correlation_error: scale * d.error_estimate,
        class_probs,
        erasure_entropy,
    })
}

fn require_brick(measure: &TorusMeasure, site: usize) -> Result<()> {
    if measure.lattice().kind() != LatticeKind::Honeycomb {
        return Err(Error::InvalidLattice("brick-wall honeycomb lattice required".into()));
    }
    measure.lattice().check_site(site)
}

/// `E(σ σ')` averaged over the three bonds at `site`.
pub fn torus_bond_correlation(measure: &TorusMeasure, site: usize) -> Result<f64> {
    require_brick(measure, site)?;
    let nb = measure.lattice().neighbors(site).to_vec();
    let mut total = 0.0;
    for &n in &nb {
        total += measure.correlation(&[site, n])?;
    }
    Ok(total / nb.len() as f64)
}

/// Class probabilities counted from the neighbour marginal of `site`.
pub fn torus_class_frequencies(measure: &TorusMeasure, site: usize) -> Result<HexClassProbs> {
    require_brick(measure, site)?;
    let nb = measure.lattice().neighbors(site).to_vec();
    let marg = measure.distribution().marginal(&nb)?;
    let mut p = [0.0; 2];
    for (key, &q) in marg.iter().enumerate() {
        let s = |i: usize| if key >> i & 1 == 1 { 1 } else { -1 };
        p[honeycomb_class(s(0), s(1), s(2))] += q;
    }
    Ok(HexClassProbs {
        p1: p[0] / 2.0,
        p2: p[1] / 6.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{enumerate_torus, torus_gibbs_erasure};
    use crate::lattice::Lattice;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::LN_2;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn pressure_trivial_values() {
        assert_abs_diff_eq!(pressure_hex(0.0, 0.7, &q()).unwrap(), LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(pressure_hex(1.3, 0.0, &q()).unwrap(), LN_2, epsilon = 1e-12);
    }

    #[test]
    fn pressure_small_coupling_series() {
        let k: f64 = 0.01;
        // next term of the expansion is O(K^4)
        let series = LN_2 + 0.75 * k * k;
        assert_relative_eq!(pressure_hex(1.0, k, &q()).unwrap(), series, max_relative = 1e-6);
    }

    #[test]
    fn pressure_even_in_coupling_and_increasing_in_beta() {
        for j in [0.1, 0.2, 0.3] {
            assert_eq!(pressure_hex(1.0, j, &q()).unwrap(), pressure_hex(1.0, -j, &q()).unwrap());
            let vals: Vec<f64> = (0..=10).map(|i| pressure_hex(i as f64 / 10.0, j, &q()).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]), "{vals:?}");
        }
    }

    #[test]
    fn trapezoid_converges_fast_away_from_criticality() {
        let exact = pressure_on_grid(1.0, 0.2, 1024);
        let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| (pressure_on_grid(1.0, 0.2, n) - exact).abs()).collect();
        assert!(errs[0] / errs[1] >= 10.0, "{errs:?}");
        assert!(errs[1] / errs[2] >= 10.0 || errs[2] < 1e-15, "{errs:?}");
    }

    #[test]
    fn critical_guard() {
        let kc = critical_coupling();
        assert_abs_diff_eq!(kc, 0.658_478_948_462_408_4, epsilon = 1e-15);
        assert!(matches!(pressure_hex(1.0, kc, &q()), Err(Error::NearCritical { .. })));
        let err = hex_pipeline(kc, &q(), &DerivativeConfig::default(), EntropyUnit::Bits).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "pressure", .. }));
        assert!(matches!(err.root(), Error::NearCritical { .. }));
    }

    #[test]
    fn correlation_small_coupling() {
        let j: f64 = 0.05;
        let e = nn_correlation_hex(j, &q(), &DerivativeConfig::default()).unwrap();
        assert_relative_eq!(e, j.tanh(), max_relative = 1e-3);
        assert_eq!(nn_correlation_hex(0.0, &q(), &DerivativeConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn correlation_in_unit_interval_and_increasing() {
        let vals: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
            .iter()
            .map(|&j| nn_correlation_hex(j, &q(), &DerivativeConfig::default()).unwrap())
            .collect();
        assert!(vals.iter().all(|e| (0.0..=1.0).contains(e)));
        assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
    }

    #[test]
    fn class_limits() {
        assert_eq!(hex_class_probs(0.0, 0.0, HexClassSystem::Corrected).unwrap(), HexClassProbs { p1: 0.125, p2: 0.125 });
        assert_eq!(hex_class_probs(5e-7, 0.3, HexClassSystem::Corrected).unwrap(), HexClassProbs { p1: 0.125, p2: 0.125 });
        let big = hex_class_probs(30.0, 1.0, HexClassSystem::Corrected).unwrap();
        assert_abs_diff_eq!(big.p1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(big.p2, 0.0, epsilon = 1e-12);
        // the uncorrected system does not reach the independent limit
        let j: f64 = 1e-4;
        let printed = hex_class_probs(j, j.tanh(), HexClassSystem::AsPrinted).unwrap();
        assert_abs_diff_eq!(printed.p1, 5.0 / 16.0, epsilon = 1e-6);
        assert!(hex_class_probs(0.3, 1.5, HexClassSystem::Corrected).is_err());
        assert!(hex_class_probs(-0.3, 0.1, HexClassSystem::Corrected).is_err());
    }

    #[test]
    fn class_probs_match_brick_enumeration() {
        for (w, h, j) in [(4, 3, 0.3), (4, 4, 0.3), (4, 5, 0.5)] {
            let m = enumerate_torus(&Lattice::honeycomb(w, h).unwrap(), j).unwrap();
            let e = torus_bond_correlation(&m, 0).unwrap();
            let solved = hex_class_probs(j, e, HexClassSystem::Corrected).unwrap();
            let counted = torus_class_frequencies(&m, 0).unwrap();
            assert_abs_diff_eq!(solved.p1, counted.p1, epsilon = 1e-12);
            assert_abs_diff_eq!(solved.p2, counted.p2, epsilon = 1e-12);
            assert_abs_diff_eq!(solved.total(), 1.0, epsilon = 1e-15);
            let formula = erasure_entropy_hex(j, &solved, EntropyUnit::Nats).unwrap().value;
            let direct = torus_gibbs_erasure(&m, j, &[0], EntropyUnit::Nats).unwrap().entropy.value;
            assert_abs_diff_eq!(formula, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn erasure_limits() {
        let uniform = HexClassProbs { p1: 0.125, p2: 0.125 };
        assert_abs_diff_eq!(erasure_entropy_hex(0.0, &uniform, EntropyUnit::Bits).unwrap().value, 1.0, epsilon = 1e-15);
        let ground = HexClassProbs { p1: 0.5, p2: 0.0 };
        assert!(erasure_entropy_hex(40.0, &ground, EntropyUnit::Bits).unwrap().value < 1e-40);
    }

    #[test]
    fn pipeline_small_coupling_series() {
        let j = 0.05;
        let r = hex_pipeline(j, &q(), &DerivativeConfig::default(), EntropyUnit::Bits).unwrap();
        let series = 1.0 - 1.5 / LN_2 * j * j;
        assert!((r.erasure_entropy.value - series).abs() < 1e-3, "{} vs {series}", r.erasure_entropy.value);
        assert_abs_diff_eq!(r.class_probs.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pipeline_bounded_by_ln2() {
        for j in [0.0, 0.1, 0.3, 0.5, 0.9, 2.0] {
            let r = hex_pipeline(j, &q(), &DerivativeConfig::default(), EntropyUnit::Nats).unwrap();
            assert!((0.0..=LN_2 + 1e-15).contains(&r.erasure_entropy.value), "J={j}: {r:?}");
        }
    }

    #[test]
    fn pipeline_even_in_coupling() {
        let d = DerivativeConfig::default();
        let a = hex_pipeline(0.3, &q(), &d, EntropyUnit::Bits).unwrap();
        let b = hex_pipeline(-0.3, &q(), &d, EntropyUnit::Bits).unwrap();
        assert_eq!(a.erasure_entropy, b.erasure_entropy);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig { points: 8, ..q() }.validate().is_err());
        assert!(QuadratureConfig { points: 24, ..q() }.validate().is_err());
        assert!(QuadratureConfig { tolerance: 1e-14, ..q() }.validate().is_err());
        assert!(DerivativeConfig { step: 0.1, levels: 2 }.validate().is_err());
    }
}
