//! Exact Boltzmann measures on small periodic lattices and the
//! finite-volume erasure entropies computed from them.
//!
//! Configurations are `u64` bit patterns, bit i set meaning site i is +1.
//! Inverse temperature is absorbed into the coupling (β = 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyUnit, EntropyValue, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::lattice::{single_site_conditional, Lattice};
use crate::numerics::{log_sum_exp, pairwise_sum, CompensatedSum};

/// Largest lattice handled by exact enumeration.
pub const MAX_ENUMERATION_SITES: usize = 25;

#[inline]
fn spin(config: u64, site: usize) -> i8 {
    ((config >> site & 1) as i8) * 2 - 1
}

/// Iterates all `c` with `c & mask == 0` among `sites`-bit patterns.
fn for_each_exterior(sites: usize, mask: u64, mut f: impl FnMut(u64)) {
    let full = if sites == 64 { u64::MAX } else { (1u64 << sites) - 1 };
    let free = full & !mask;
    let mut ext = 0u64;
    loop {
        f(ext);
        if ext == free {
            break;
        }
        ext = ((ext | mask | !full) + 1) & free;
    }
}

/// Iterates all submasks of `mask`, including 0 and `mask`.
fn for_each_submask(mask: u64, mut f: impl FnMut(u64)) {
    let mut sub = mask;
    loop {
        f(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
}

fn region_mask(lattice: &Lattice, region: &[usize]) -> Result<u64> {
    if region.is_empty() {
        return Err(Error::Domain("empty region".into()));
    }
    let mut mask = 0u64;
    for &s in region {
        lattice.check_site(s)?;
        if mask >> s & 1 == 1 {
            return Err(Error::Domain(format!("site {s} repeated in region")));
        }
        mask |= 1 << s;
    }
    Ok(mask)
}

/// An arbitrary probability measure on the configurations of a small
/// lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDistribution {
    lattice: Lattice,
    probs: Vec<f64>,
}

impl ConfigDistribution {
    pub fn new(lattice: Lattice, probs: Vec<f64>) -> Result<Self> {
        let n = lattice.sites();
        if n > MAX_ENUMERATION_SITES {
            return Err(Error::Budget(format!("{n} sites exceed {MAX_ENUMERATION_SITES}")));
        }
        if probs.len() != 1usize << n {
            return Err(Error::InvalidDistribution(format!(
                "{} entries for {n} sites",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or non-finite entry".into()));
        }
        let total = pairwise_sum(&probs);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total}")));
        }
        Ok(ConfigDistribution { lattice, probs })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, config: u64) -> f64 {
        self.probs[config as usize]
    }

    /// `E[Π_{i in sites} σ_i]`.
    pub fn correlation(&self, sites: &[usize]) -> Result<f64> {
        if sites.is_empty() {
            return Err(Error::Domain("empty site tuple".into()));
        }
        let mut mask = 0u64;
        for &s in sites {
            self.lattice.check_site(s)?;
            // repeated sites square to one
            mask ^= 1 << s;
        }
        let mut acc = CompensatedSum::default();
        for (c, &p) in self.probs.iter().enumerate() {
            let minus = (!(c as u64) & mask).count_ones();
            acc.add(if minus % 2 == 0 { p } else { -p });
        }
        Ok(acc.value())
    }

    /// Joint law of the spins at `sites`; index bit k is the spin at
    /// `sites[k]` (set = +1).
    pub fn marginal(&self, sites: &[usize]) -> Result<Vec<f64>> {
        for &s in sites {
            self.lattice.check_site(s)?;
        }
        let mut out = vec![0.0; 1 << sites.len()];
        for (c, &p) in self.probs.iter().enumerate() {
            let key = sites
                .iter()
                .enumerate()
                .fold(0usize, |k, (i, &s)| k | ((c >> s) & 1) << i);
            out[key] += p;
        }
        Ok(out)
    }

    /// `H(X_Λ | X_{Λᶜ})` in nats, from the joint table and the exterior
    /// marginal.
    pub fn conditional_entropy_nats(&self, region: &[usize]) -> Result<f64> {
        let mask = region_mask(&self.lattice, region)?;
        let mut acc = CompensatedSum::default();
        for_each_exterior(self.lattice.sites(), mask, |ext| {
            let mut total = 0.0;
            for_each_submask(mask, |sub| total += self.probs[(ext | sub) as usize]);
            if total > 0.0 {
                for_each_submask(mask, |sub| {
                    let p = self.probs[(ext | sub) as usize];
                    if p > 0.0 {
                        acc.add(-p * (p / total).ln());
                    }
                });
            }
        });
        crate::entropy::clamp_nonnegative(acc.value())
    }

    /// Shannon entropy of the whole configuration, in nats.
    pub fn entropy_nats(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for &p in &self.probs {
            if p > 0.0 {
                acc.add(-p * p.ln());
            }
        }
        acc.value()
    }

    /// `E[H_Λ]` for coupling J.
    pub fn mean_window_energy(&self, coupling: f64, region: &[usize]) -> Result<f64> {
        let mask = region_mask(&self.lattice, region)?;
        let touching = touching_bonds(&self.lattice, mask);
        let mut acc = CompensatedSum::default();
        for (c, &p) in self.probs.iter().enumerate() {
            acc.add(p * window_energy(c as u64, &touching, coupling));
        }
        Ok(acc.value())
    }
}

fn touching_bonds(lattice: &Lattice, mask: u64) -> Vec<(usize, usize)> {
    lattice
        .bonds()
        .iter()
        .copied()
        .filter(|&(a, b)| mask >> a & 1 == 1 || mask >> b & 1 == 1)
        .collect()
}

#[inline]
fn window_energy(config: u64, bonds: &[(usize, usize)], coupling: f64) -> f64 {
    let s: i32 = bonds
        .iter()
        .map(|&(a, b)| (spin(config, a) * spin(config, b)) as i32)
        .sum();
    -coupling * s as f64
}

/// Exact Boltzmann measure `∝ exp(J Σ_bonds σσ)` on a small torus.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusMeasure {
    dist: ConfigDistribution,
    coupling: f64,
    log_partition: f64,
}

impl TorusMeasure {
    pub fn lattice(&self) -> &Lattice {
        &self.dist.lattice
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn distribution(&self) -> &ConfigDistribution {
        &self.dist
    }

    pub fn correlation(&self, sites: &[usize]) -> Result<f64> {
        self.dist.correlation(sites)
    }
}

/// Enumerates all `2^N` configurations in Gray-code order, updating the bond
/// sum incrementally, and normalizes with log-sum-exp.
pub fn enumerate_torus(lattice: &Lattice, coupling: f64) -> Result<TorusMeasure> {
    let n = lattice.sites();
    if n > MAX_ENUMERATION_SITES {
        return Err(Error::Budget(format!(
            "2^{n} configurations exceed the 2^{MAX_ENUMERATION_SITES} enumeration budget"
        )));
    }
    if !coupling.is_finite() {
        return Err(Error::Domain(format!("coupling {coupling}")));
    }
    let count = 1usize << n;
    let mut table = vec![0.0f64; count];
    let mut spins = vec![-1i8; n];
    let mut bond_sum = lattice.bonds().len() as i32;
    table[0] = coupling * bond_sum as f64;
    for g in 1..count {
        let j = g.trailing_zeros() as usize;
        let local = lattice.neighbor_sum(&spins, j);
        bond_sum -= 2 * spins[j] as i32 * local;
        spins[j] = -spins[j];
        let gray = g ^ (g >> 1);
        table[gray] = coupling * bond_sum as f64;
    }
    let max = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for w in table.iter_mut() {
        *w = (*w - max).exp();
    }
    let z = pairwise_sum(&table);
    for w in table.iter_mut() {
        *w /= z;
    }
    Ok(TorusMeasure {
        dist: ConfigDistribution {
            lattice: lattice.clone(),
            probs: table,
        },
        coupling,
        log_partition: max + z.ln(),
    })
}

/// A finite-volume erasure entropy, flagged when the region is the whole
/// lattice (nothing left to condition on).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionEntropy {
    pub entropy: EntropyValue,
    pub whole_lattice: bool,
}

/// `H(X_Λ | X_{Λᶜ})` from the exact joint law.
pub fn torus_erasure_entropy(measure: &TorusMeasure, region: &[usize], unit: EntropyUnit) -> Result<RegionEntropy> {
    let nats = measure.dist.conditional_entropy_nats(region)?;
    Ok(RegionEntropy {
        entropy: EntropyValue::from_nats(nats, unit),
        whole_lattice: region.len() == measure.lattice().sites(),
    })
}

/// `-E[ln γ_Λ(X_Λ | X_{∂Λ})]` with the local Gibbs kernel
/// `γ_Λ = exp(-H_Λ) / Z(boundary)` built from window energies.
pub fn torus_gibbs_erasure(
    measure: &TorusMeasure,
    coupling: f64,
    region: &[usize],
    unit: EntropyUnit,
) -> Result<RegionEntropy> {
    let lattice = measure.lattice();
    let mask = region_mask(lattice, region)?;
    let touching = touching_bonds(lattice, mask);
    let probs = measure.dist.probs();
    let mut acc = CompensatedSum::default();
    let mut energies = Vec::with_capacity(1 << region.len());
    let mut neg = Vec::with_capacity(1 << region.len());
    for_each_exterior(lattice.sites(), mask, |ext| {
        energies.clear();
        neg.clear();
        for_each_submask(mask, |sub| {
            let e = window_energy(ext | sub, &touching, coupling);
            energies.push((ext | sub, e));
            neg.push(-e);
        });
        let log_z = log_sum_exp(&neg);
        for &(c, e) in &energies {
            acc.add(probs[c as usize] * (e + log_z));
        }
    });
    let nats = crate::entropy::clamp_nonnegative(acc.value())?;
    Ok(RegionEntropy {
        entropy: EntropyValue::from_nats(nats, unit),
        whole_lattice: region.len() == lattice.sites(),
    })
}

/// `h⁻_Λ / |Λ|` along a nested sequence of regions.
pub fn volume_normalized_erasure(measure: &TorusMeasure, regions: &[Vec<usize>], unit: EntropyUnit) -> Result<Vec<f64>> {
    for w in regions.windows(2) {
        if !w[0].iter().all(|s| w[1].contains(s)) {
            return Err(Error::Domain("regions are not nested".into()));
        }
    }
    regions
        .iter()
        .map(|r| Ok(torus_erasure_entropy(measure, r, unit)?.entropy.value / r.len() as f64))
        .collect()
}

/// Free-energy content `E[H_Λ] - H(X_Λ | X_{Λᶜ})` in nats.
///
/// With this sign the Gibbs measure minimizes the content among all measures
/// that agree with it outside Λ.
pub fn free_energy_content(dist: &ConfigDistribution, coupling: f64, region: &[usize]) -> Result<f64> {
    Ok(dist.mean_window_energy(coupling, region)? - dist.conditional_entropy_nats(region)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsReport {
    pub site: usize,
    pub tilt: f64,
    pub trials: usize,
    /// `F_{site}(P)` of the Gibbs measure itself.
    pub gibbs_content: f64,
    pub min_delta: f64,
    pub max_delta: f64,
}

/// Perturbs the single-site conditional of the Gibbs measure at `site` by
/// `±tilt` (sign drawn independently per exterior configuration, result
/// clamped into the open unit interval) and records the change of the
/// free-energy content of `{site}`.
pub fn lts_check(lattice: &Lattice, coupling: f64, site: usize, tilt: f64, trials: usize, seed: u64) -> Result<LtsReport> {
    if !(tilt.abs() <= 0.5) {
        return Err(Error::Domain(format!("tilt {tilt} outside [-0.5, 0.5]")));
    }
    if trials == 0 {
        return Err(Error::Domain("at least one trial".into()));
    }
    lattice.check_site(site)?;
    let gibbs = enumerate_torus(lattice, coupling)?;
    let base = free_energy_content(&gibbs.dist, coupling, &[site])?;
    let bit = 1u64 << site;
    let n = lattice.sites();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut spins = vec![0i8; n];
    for _ in 0..trials {
        let mut probs = vec![0.0; 1 << n];
        for_each_exterior(n, bit, |ext| {
            for (i, s) in spins.iter_mut().enumerate() {
                *s = spin(ext, i);
            }
            let sum = lattice.neighbor_sum(&spins, site);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let q = (single_site_conditional(coupling, sum) + sign * tilt).clamp(1e-12, 1.0 - 1e-12);
            let outside = gibbs.dist.prob(ext) + gibbs.dist.prob(ext | bit);
            probs[(ext | bit) as usize] = outside * q;
            probs[ext as usize] = outside * (1.0 - q);
        });
        let q = ConfigDistribution::new(lattice.clone(), probs)?;
        let delta = free_energy_content(&q, coupling, &[site])? - base;
        lo = lo.min(delta);
        hi = hi.max(delta);
    }
    Ok(LtsReport {
        site,
        tilt,
        trials,
        gibbs_content: base,
        min_delta: lo,
        max_delta: hi,
    })
}
