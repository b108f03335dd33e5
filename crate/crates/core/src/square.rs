//! Single-site erasure entropy of the square-lattice Ising model from three
//! neighbour correlators.
//!
//! The 16 configurations of the (E, N, W, S) neighbours of a site fall into
//! four classes under rotations and the global flip: all equal (2 configs),
//! one odd (8), opposite pair (2), adjacent pair (4). `P_i` is the
//! probability of a single configuration of class i, so
//! `2 P1 + 8 P2 + 2 P3 + 4 P4 = 1`, and the three correlators
//!
//! ```text
//! g4  = E(σE σN σW σS) = 2P1 - 8P2 + 2P3 + 4P4
//! gEW = E(σE σW)       = 2P1 + 2P3 - 4P4
//! gEN = E(σE σN)       = 2P1 - 2P3
//! ```
//!
//! determine the four probabilities.

use serde::{Deserialize, Serialize};

use crate::entropy::{binary_entropy_nats, clamp_nonnegative, EntropyUnit, EntropyValue};
use crate::error::{Error, Result};
use crate::gibbs::{enumerate_torus, TorusMeasure};
use crate::lattice::{single_site_conditional, square_class, Lattice, LatticeKind};
use crate::montecarlo::{run_observables, McConfig, McEstimate};

const NEGATIVE_PROB_TOL: f64 = 1e-9;

pub const MULTIPLICITIES: [usize; 4] = [2, 8, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTriple {
    pub g4: f64,
    pub g_ew: f64,
    pub g_en: f64,
    /// Standard errors of (g4, gEW, gEN) for stochastic providers.
    pub std_errors: Option<[f64; 3]>,
}

impl CorrelationTriple {
    pub fn new(g4: f64, g_ew: f64, g_en: f64) -> Self {
        CorrelationTriple {
            g4,
            g_ew,
            g_en,
            std_errors: None,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.g4, self.g_ew, self.g_en]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassProbs {
    pub p: [f64; 4],
}

impl BoundaryClassProbs {
    /// `2P1 + 8P2 + 2P3 + 4P4`.
    pub fn total(&self) -> f64 {
        self.p.iter().zip(MULTIPLICITIES).map(|(p, m)| p * m as f64).sum()
    }

    /// The correlators implied by these probabilities.
    pub fn correlations(&self) -> CorrelationTriple {
        let [p1, p2, p3, p4] = self.p;
        CorrelationTriple::new(
            2.0 * p1 - 8.0 * p2 + 2.0 * p3 + 4.0 * p4,
            2.0 * p1 + 2.0 * p3 - 4.0 * p4,
            2.0 * p1 - 2.0 * p3,
        )
    }

    fn validate(&self) -> Result<()> {
        if let Some((i, p)) = self.p.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= -NEGATIVE_PROB_TOL)) {
            return Err(Error::InconsistentCorrelations(format!("P{} = {p}", i + 1)));
        }
        if (self.total() - 1.0).abs() > NEGATIVE_PROB_TOL {
            return Err(Error::InconsistentCorrelations(format!(
                "class probabilities weigh {} in total",
                self.total()
            )));
        }
        Ok(())
    }
}

pub fn class_probs_from_correlations(t: &CorrelationTriple) -> Result<BoundaryClassProbs> {
    for (name, g) in [("g4", t.g4), ("gEW", t.g_ew), ("gEN", t.g_en)] {
        if !(-1.0..=1.0).contains(&g) {
            return Err(Error::InconsistentCorrelations(format!("{name} = {g} outside [-1, 1]")));
        }
    }
    let probs = BoundaryClassProbs {
        p: [
            (1.0 + t.g4 + 2.0 * t.g_ew + 4.0 * t.g_en) / 16.0,
            (1.0 - t.g4) / 16.0,
            (1.0 + t.g4 + 2.0 * t.g_ew - 4.0 * t.g_en) / 16.0,
            (1.0 + t.g4 - 2.0 * t.g_ew) / 16.0,
        ],
    };
    probs.validate()?;
    Ok(probs)
}

/// `2P1 h(c(4)) + 8P2 h(c(2)) + (2P3 + 4P4) h(1/2)` with
/// `c(S) = e^{JS} / (e^{JS} + e^{-JS})`.
pub fn erasure_entropy_square(coupling: f64, probs: &BoundaryClassProbs, unit: EntropyUnit) -> Result<EntropyValue> {
    probs.validate()?;
    let [p1, p2, p3, p4] = probs.p;
    let nats = 2.0 * p1 * binary_entropy_nats(single_site_conditional(coupling, 4))
        + 8.0 * p2 * binary_entropy_nats(single_site_conditional(coupling, 2))
        + (2.0 * p3 + 4.0 * p4) * std::f64::consts::LN_2;
    Ok(EntropyValue::from_nats(clamp_nonnegative(nats)?, unit))
}

fn require_square(measure: &TorusMeasure) -> Result<()> {
    if measure.lattice().kind() != LatticeKind::Square {
        return Err(Error::InvalidLattice("square lattice required".into()));
    }
    Ok(())
}

/// Correlators around `site`, averaged over the rotations of the
/// neighbourhood (EW/NS for the pair at distance two, the four adjacent
/// pairs for the diagonal one).
pub fn torus_correlations(measure: &TorusMeasure, site: usize) -> Result<CorrelationTriple> {
    require_square(measure)?;
    measure.lattice().check_site(site)?;
    let nb = measure.lattice().neighbors(site);
    let (e, n, w, s) = (nb[0], nb[1], nb[2], nb[3]);
    let c = |t: &[usize]| measure.correlation(t);
    Ok(CorrelationTriple::new(
        c(&[e, n, w, s])?,
        (c(&[e, w])? + c(&[n, s])?) / 2.0,
        (c(&[e, n])? + c(&[n, w])? + c(&[w, s])? + c(&[s, e])?) / 4.0,
    ))
}

/// Class probabilities counted directly from the neighbour marginal of
/// `site`, divided by the class multiplicities.
pub fn torus_class_frequencies(measure: &TorusMeasure, site: usize) -> Result<BoundaryClassProbs> {
    require_square(measure)?;
    measure.lattice().check_site(site)?;
    let nb = measure.lattice().neighbors(site).to_vec();
    let marg = measure.distribution().marginal(&nb)?;
    Ok(classes_from_neighbor_marginal(&marg))
}

fn classes_from_neighbor_marginal(marg: &[f64]) -> BoundaryClassProbs {
    let mut p = [0.0; 4];
    for (key, &q) in marg.iter().enumerate() {
        let s = |i: usize| if key >> i & 1 == 1 { 1 } else { -1 };
        p[square_class(s(0), s(1), s(2), s(3))] += q;
    }
    for (pi, m) in p.iter_mut().zip(MULTIPLICITIES) {
        *pi /= m as f64;
    }
    BoundaryClassProbs { p }
}

/// Exact correlators on the `n x n` torus.
pub fn correlations_from_torus(n: usize, coupling: f64) -> Result<CorrelationTriple> {
    if !(3..=5).contains(&n) {
        return Err(Error::Budget(format!("torus size {n} outside 3..=5")));
    }
    let measure = enumerate_torus(&Lattice::square(n, n)?, coupling)?;
    torus_correlations(&measure, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripCorrelations {
    pub width: usize,
    pub triple: CorrelationTriple,
    /// Dominant eigenvalue of the symmetric transfer matrix.
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
}

const STRIP_RESIDUAL: f64 = 1e-13;
const STRIP_MAX_ITER: usize = 200_000;

/// Symmetric transfer matrix `D^{1/2} B D^{1/2}` of a periodic ring of
/// `width` spins: `D` carries the in-ring bonds, `B = ⊗ [[e^J, e^-J], [e^-J, e^J]]`
/// the bonds to the next ring.
struct RingTransfer {
    width: usize,
    coupling: f64,
    sqrt_diag: Vec<f64>,
}

impl RingTransfer {
    fn new(width: usize, coupling: f64) -> Self {
        let sqrt_diag = (0..1usize << width)
            .map(|s| {
                let sp = |i: usize| if s >> (i % width) & 1 == 1 { 1.0 } else { -1.0 };
                let ring: f64 = (0..width).map(|i| sp(i) * sp(i + 1)).sum();
                (0.5 * coupling * ring).exp()
            })
            .collect();
        RingTransfer {
            width,
            coupling,
            sqrt_diag,
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = v.iter().zip(&self.sqrt_diag).map(|(a, d)| a * d).collect();
        let (same, diff) = (self.coupling.exp(), (-self.coupling).exp());
        for i in 0..self.width {
            let bit = 1usize << i;
            for s in 0..u.len() {
                if s & bit == 0 {
                    let (a, b) = (u[s], u[s | bit]);
                    u[s] = same * a + diff * b;
                    u[s | bit] = diff * a + same * b;
                }
            }
        }
        u.iter_mut().zip(&self.sqrt_diag).for_each(|(a, d)| *a *= d);
        u
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Correlators on an infinitely long cylinder of circumference `width`,
/// from the dominant eigenvector of the ring transfer matrix.
pub fn correlations_from_strip(width: usize, coupling: f64) -> Result<StripCorrelations> {
    if !(2..=14).contains(&width) {
        return Err(Error::Budget(format!("strip width {width} outside 2..=14")));
    }
    let tm = RingTransfer::new(width, coupling);
    let states = 1usize << width;
    let full = states - 1;
    let mut v = vec![1.0 / (states as f64).sqrt(); states];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < STRIP_MAX_ITER {
        iterations += 1;
        let w = tm.apply(&v);
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        residual = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (b - lambda * a).powi(2))
            .sum::<f64>()
            .sqrt()
            / lambda;
        // stay in the flip-even sector
        let mut next: Vec<f64> = (0..states).map(|s| 0.5 * (w[s] + w[s ^ full])).collect();
        let nn = norm(&next);
        next.iter_mut().for_each(|x| *x /= nn);
        v = next;
        if residual <= STRIP_RESIDUAL {
            break;
        }
    }
    if residual > STRIP_RESIDUAL {
        return Err(Error::NonConvergence(format!(
            "transfer-matrix power iteration residual {residual:e} after {iterations} iterations"
        )));
    }
    let sp = |s: usize, i: usize| if s >> (i % width) & 1 == 1 { 1.0 } else { -1.0 };
    let (c, e, w_) = (0, 1, width - 1);
    let ring_ew: f64 = (0..states).map(|s| v[s] * v[s] * sp(s, e) * sp(s, w_)).sum();
    let centre: Vec<f64> = (0..states).map(|s| sp(s, c) * v[s]).collect();
    let t_centre = tm.apply(&centre);
    let vertical_ns = t_centre.iter().map(|x| x * x).sum::<f64>() / (lambda * lambda);
    let g_en = (0..states).map(|s| sp(s, e) * v[s] * t_centre[s]).sum::<f64>() / lambda;
    let g4 = (0..states)
        .map(|s| t_centre[s] * t_centre[s] * sp(s, e) * sp(s, w_))
        .sum::<f64>()
        / (lambda * lambda);
    Ok(StripCorrelations {
        width,
        triple: CorrelationTriple::new(g4, 0.5 * (ring_ew + vertical_ns), g_en),
        eigenvalue: lambda,
        iterations,
        residual,
    })
}

/// Monte Carlo correlators with batch-means errors, averaged over all sites
/// and neighbourhood rotations.
pub fn correlations_from_mc(cfg: &McConfig) -> Result<CorrelationTriple> {
    if cfg.lattice.kind() != LatticeKind::Square {
        return Err(Error::InvalidLattice("square lattice required".into()));
    }
    let est = run_observables(cfg, 3, |lat, spins, out| {
        let (mut g4, mut gew, mut gen) = (0i64, 0i64, 0i64);
        for site in 0..lat.sites() {
            let nb = lat.neighbors(site);
            let (e, n, w, s) = (spins[nb[0]] as i64, spins[nb[1]] as i64, spins[nb[2]] as i64, spins[nb[3]] as i64);
            g4 += e * n * w * s;
            gew += e * w + n * s;
            gen += e * n + n * w + w * s + s * e;
        }
        let n = lat.sites() as f64;
        out[0] = g4 as f64 / n;
        out[1] = gew as f64 / (2.0 * n);
        out[2] = gen as f64 / (4.0 * n);
    })?;
    Ok(CorrelationTriple {
        g4: est[0].mean,
        g_ew: est[1].mean,
        g_en: est[2].mean,
        std_errors: Some([est[0].std_error, est[1].std_error, est[2].std_error]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMcEstimates {
    /// (g4, gEW, gEN)
    pub correlations: [McEstimate; 3],
    /// `P1..P4` from the closed-form solve applied sweep by sweep.
    pub class_probs: [McEstimate; 4],
    /// The erasure formula applied sweep by sweep. It is linear in the
    /// correlators, so its mean is the formula at the mean correlators.
    pub erasure_formula: McEstimate,
    /// Site average of the heat-bath conditional entropy.
    pub erasure_plugin: McEstimate,
    /// Bond-averaged nearest-neighbour correlation.
    pub nn_correlation: McEstimate,
}

/// All square-lattice Monte Carlo quantities from a single run.
pub fn mc_estimates(cfg: &McConfig, unit: EntropyUnit) -> Result<SquareMcEstimates> {
    if cfg.lattice.kind() != LatticeKind::Square {
        return Err(Error::InvalidLattice("square lattice required".into()));
    }
    let j = cfg.coupling;
    let h4 = unit.from_nats(binary_entropy_nats(single_site_conditional(j, 4)));
    let h2 = unit.from_nats(binary_entropy_nats(single_site_conditional(j, 2)));
    let h0 = unit.from_nats(std::f64::consts::LN_2);
    let plugin: Vec<f64> = (-4..=4)
        .map(|s| unit.from_nats(binary_entropy_nats(single_site_conditional(j, s))))
        .collect();
    let est = run_observables(cfg, 10, |lat, spins, out| {
        let (mut g4, mut gew, mut gen, mut nn, mut hp) = (0i64, 0i64, 0i64, 0i64, 0.0);
        for site in 0..lat.sites() {
            let nb = lat.neighbors(site);
            let (e, n, w, s) = (spins[nb[0]] as i64, spins[nb[1]] as i64, spins[nb[2]] as i64, spins[nb[3]] as i64);
            g4 += e * n * w * s;
            gew += e * w + n * s;
            gen += e * n + n * w + w * s + s * e;
            nn += spins[site] as i64 * (e + n);
            hp += plugin[(e + n + w + s + 4) as usize];
        }
        let n = lat.sites() as f64;
        let (g4, gew, gen) = (g4 as f64 / n, gew as f64 / (2.0 * n), gen as f64 / (4.0 * n));
        let p = [
            (1.0 + g4 + 2.0 * gew + 4.0 * gen) / 16.0,
            (1.0 - g4) / 16.0,
            (1.0 + g4 + 2.0 * gew - 4.0 * gen) / 16.0,
            (1.0 + g4 - 2.0 * gew) / 16.0,
        ];
        out[..3].copy_from_slice(&[g4, gew, gen]);
        out[3..7].copy_from_slice(&p);
        out[7] = 2.0 * p[0] * h4 + 8.0 * p[1] * h2 + (2.0 * p[2] + 4.0 * p[3]) * h0;
        out[8] = hp / n;
        out[9] = nn as f64 / (2.0 * n);
    })?;
    Ok(SquareMcEstimates {
        correlations: [est[0], est[1], est[2]],
        class_probs: [est[3], est[4], est[5], est[6]],
        erasure_formula: est[7],
        erasure_plugin: est[8],
        nn_correlation: est[9],
    })
}
