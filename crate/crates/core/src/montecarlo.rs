//! Heat-bath Gibbs sampling on square and brick-honeycomb tori.
//!
//! Every chain owns a ChaCha8 stream derived from `(seed, chain index)`, so a
//! run is bit-identical for a fixed seed regardless of how many threads
//! execute the chains. Even-numbered chains start from a random (hot)
//! configuration, odd-numbered ones from all-plus (cold). Errors come from
//! batch means pooled over all chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{binary_entropy_nats, EntropyUnit};
use crate::error::{Error, Result};
use crate::lattice::{single_site_conditional, Lattice, SpinConfig};

/// Hot and cold chains may disagree by at most this many combined standard
/// errors.
pub const MIXING_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub lattice: Lattice,
    pub coupling: f64,
    /// Recorded sweeps per chain, after burn-in.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Batches per chain. Trailing sweeps that do not fill a batch are
    /// discarded.
    pub batches: usize,
    pub seed: u64,
    pub chains: usize,
}

impl McConfig {
    pub fn new(lattice: Lattice, coupling: f64) -> Self {
        McConfig {
            lattice,
            coupling,
            sweeps: 10_000,
            burn_in: 1_000,
            batches: 50,
            seed: 0,
            chains: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coupling.is_finite() {
            return Err(Error::Domain(format!("coupling {}", self.coupling)));
        }
        if self.batches < 8 || self.sweeps < self.batches {
            return Err(Error::Domain(format!(
                "need sweeps >= batches >= 8, got sweeps {} batches {}",
                self.sweeps, self.batches
            )));
        }
        if self.chains == 0 {
            return Err(Error::Domain("at least one chain".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub batches: usize,
    /// Per-sweep variance over squared standard error.
    pub effective_samples: f64,
}

impl McEstimate {
    /// `|mean - exact| <= k σ`, with a 1e-12 floor for zero-variance
    /// observables.
    pub fn within(&self, exact: f64, sigmas: f64) -> bool {
        (self.mean - exact).abs() <= sigmas * self.std_error + 1e-12
    }
}

/// Heat-bath probabilities of `+1` indexed by `neighbour sum + degree`.
struct HeatBath {
    degree: i32,
    p_up: Vec<f64>,
}

impl HeatBath {
    fn new(lattice: &Lattice, coupling: f64) -> Self {
        let degree = lattice.degree() as i32;
        HeatBath {
            degree,
            p_up: (-degree..=degree).map(|s| single_site_conditional(coupling, s)).collect(),
        }
    }

    #[inline]
    fn p_up(&self, sum: i32) -> f64 {
        self.p_up[(sum + self.degree) as usize]
    }

    fn sweep<R: Rng>(&self, lattice: &Lattice, spins: &mut [i8], rng: &mut R) {
        for site in 0..spins.len() {
            let s = lattice.neighbor_sum(spins, site);
            spins[site] = if rng.random::<f64>() < self.p_up(s) { 1 } else { -1 };
        }
    }
}

/// One raster pass of single-site heat-bath updates.
pub fn heat_bath_sweep<R: Rng>(state: &mut SpinConfig, lattice: &Lattice, coupling: f64, rng: &mut R) -> Result<()> {
    if state.0.len() != lattice.sites() {
        return Err(Error::Domain(format!(
            "state has {} spins, lattice has {} sites",
            state.0.len(),
            lattice.sites()
        )));
    }
    HeatBath::new(lattice, coupling).sweep(lattice, &mut state.0, rng);
    Ok(())
}

pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

struct ChainOutput {
    /// `[observable][batch]`
    batch_means: Vec<Vec<f64>>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

fn run_chain<F>(cfg: &McConfig, chain: usize, n_obs: usize, observe: &F) -> ChainOutput
where
    F: Fn(&Lattice, &[i8], &mut [f64]),
{
    let lat = &cfg.lattice;
    let hb = HeatBath::new(lat, cfg.coupling);
    let mut rng = chain_rng(cfg.seed, chain);
    let mut spins: Vec<i8> = if chain % 2 == 0 {
        (0..lat.sites()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
    } else {
        vec![1; lat.sites()]
    };
    for _ in 0..cfg.burn_in {
        hb.sweep(lat, &mut spins, &mut rng);
    }
    let batch_len = cfg.sweeps / cfg.batches;
    let mut out = ChainOutput {
        batch_means: vec![Vec::with_capacity(cfg.batches); n_obs],
        sum: vec![0.0; n_obs],
        sum_sq: vec![0.0; n_obs],
        count: 0,
    };
    let mut obs = vec![0.0; n_obs];
    let mut acc = vec![0.0; n_obs];
    for _ in 0..cfg.batches {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..batch_len {
            hb.sweep(lat, &mut spins, &mut rng);
            observe(lat, &spins, &mut obs);
            for k in 0..n_obs {
                acc[k] += obs[k];
                out.sum[k] += obs[k];
                out.sum_sq[k] += obs[k] * obs[k];
            }
            out.count += 1;
        }
        for k in 0..n_obs {
            out.batch_means[k].push(acc[k] / batch_len as f64);
        }
    }
    out
}

fn mean_and_se(batch_means: &[f64]) -> (f64, f64) {
    let b = batch_means.len() as f64;
    let mean = batch_means.iter().sum::<f64>() / b;
    let var = batch_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Runs `cfg.chains` chains, calling `observe` after every recorded sweep to
/// fill `n_obs` observables. Returns one estimate per observable.
pub fn run_observables<F>(cfg: &McConfig, n_obs: usize, observe: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&Lattice, &[i8], &mut [f64]) + Sync,
{
    cfg.validate()?;
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(cfg, c, n_obs, &observe))
        .collect();
    let mut estimates = Vec::with_capacity(n_obs);
    for k in 0..n_obs {
        let pooled: Vec<f64> = outputs.iter().flat_map(|o| o.batch_means[k].iter().copied()).collect();
        let (mean, se) = mean_and_se(&pooled);
        if cfg.chains >= 2 {
            let group = |parity: usize| -> Vec<f64> {
                outputs
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| c % 2 == parity)
                    .flat_map(|(_, o)| o.batch_means[k].iter().copied())
                    .collect()
            };
            let (hot, hot_se) = mean_and_se(&group(0));
            let (cold, cold_se) = mean_and_se(&group(1));
            let diff = (hot - cold).abs();
            let sigma = hot_se.hypot(cold_se);
            if diff > MIXING_SIGMAS * sigma && diff > 1e-12 {
                return Err(Error::MixingFailure(format!(
                    "observable {k}: hot chains {hot:.6} vs cold chains {cold:.6}, {:.1} combined sigma",
                    diff / sigma
                )));
            }
        }
        let n: usize = outputs.iter().map(|o| o.count).sum();
        let sum: f64 = outputs.iter().map(|o| o.sum[k]).sum();
        let sum_sq: f64 = outputs.iter().map(|o| o.sum_sq[k]).sum();
        let per_sweep_var = ((sum_sq - sum * sum / n as f64) / (n as f64 - 1.0)).max(0.0);
        let effective_samples = if se > 0.0 { per_sweep_var / (se * se) } else { n as f64 };
        estimates.push(McEstimate {
            mean,
            std_error: se,
            batches: pooled.len(),
            effective_samples,
        });
    }
    Ok(estimates)
}

/// Translation-averaged `E(Π σ)` for each tuple. Odd tuples vanish under the
/// flip-symmetrized estimator and are returned as exact zeros.
pub fn estimate_correlations(cfg: &McConfig, tuples: &[Vec<usize>]) -> Result<Vec<McEstimate>> {
    let lat = &cfg.lattice;
    for t in tuples {
        if t.is_empty() {
            return Err(Error::Domain("empty site tuple".into()));
        }
        for &s in t {
            lat.check_site(s)?;
        }
    }
    let shifts = lat.translations();
    let even: Vec<Vec<Vec<usize>>> = tuples
        .iter()
        .filter(|t| t.len() % 2 == 0)
        .map(|t| {
            shifts
                .iter()
                .map(|&(dx, dy)| t.iter().map(|&s| lat.translate(s, dx, dy)).collect())
                .collect()
        })
        .collect();
    let est = run_observables(cfg, even.len(), |_, spins, out| {
        for (k, images) in even.iter().enumerate() {
            let total: i64 = images
                .iter()
                .map(|img| img.iter().map(|&s| spins[s] as i64).product::<i64>())
                .sum();
            out[k] = total as f64 / images.len() as f64;
        }
    })?;
    let mut est = est.into_iter();
    Ok(tuples
        .iter()
        .map(|t| {
            if t.len() % 2 == 0 {
                est.next().expect("one estimate per even tuple")
            } else {
                McEstimate {
                    mean: 0.0,
                    std_error: 0.0,
                    batches: cfg.batches * cfg.chains,
                    effective_samples: 0.0,
                }
            }
        })
        .collect())
}

/// Per-configuration class probabilities `P_i`, from the class of every
/// site's neighbourhood divided by the class multiplicity.
pub fn estimate_class_frequencies(cfg: &McConfig) -> Result<Vec<McEstimate>> {
    let mult: Vec<f64> = cfg.lattice.kind().class_multiplicities().iter().map(|&m| m as f64).collect();
    run_observables(cfg, mult.len(), |lat, spins, out| {
        let mut counts = [0usize; 4];
        for site in 0..lat.sites() {
            counts[lat.boundary_class(spins, site)] += 1;
        }
        let n = lat.sites() as f64;
        for (k, o) in out.iter_mut().enumerate() {
            *o = counts[k] as f64 / (n * mult[k]);
        }
    })
}

/// Plug-in single-site erasure entropy: the site average of the binary
/// entropy of the heat-bath conditional at the observed neighbour sum.
pub fn estimate_erasure_entropy(cfg: &McConfig, unit: EntropyUnit) -> Result<McEstimate> {
    let degree = cfg.lattice.degree() as i32;
    let table: Vec<f64> = (-degree..=degree)
        .map(|s| unit.from_nats(binary_entropy_nats(single_site_conditional(cfg.coupling, s))))
        .collect();
    let est = run_observables(cfg, 1, |lat, spins, out| {
        let total: f64 = (0..lat.sites())
            .map(|site| table[(lat.neighbor_sum(spins, site) + degree) as usize])
            .sum();
        out[0] = total / lat.sites() as f64;
    })?;
    Ok(est[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::enumerate_torus;
    use crate::lattice::LatticeKind;
    use approx::assert_abs_diff_eq;

    fn small(kind: LatticeKind, w: usize, h: usize, j: f64, seed: u64) -> McConfig {
        McConfig {
            sweeps: 20_000,
            burn_in: 500,
            batches: 50,
            seed,
            chains: 2,
            ..McConfig::new(Lattice::new(kind, w, h).unwrap(), j)
        }
    }

    #[test]
    fn uncoupled_sweeps_are_uniform() {
        let lat = Lattice::square(3, 3).unwrap();
        let mut state = SpinConfig::all_up(9);
        let mut rng = chain_rng(11, 0);
        let mut counts = [0usize; 8];
        let n = 100_000;
        for _ in 0..n {
            heat_bath_sweep(&mut state, &lat, 0.0, &mut rng).unwrap();
            let key = (0..3).fold(0, |k, i| k << 1 | usize::from(state.0[i * 4] > 0));
            counts[key] += 1;
        }
        let expect = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 7 degrees of freedom: mean 7, sd sqrt(14)
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let lat = Lattice::honeycomb(6, 4).unwrap();
        let run = || {
            let mut s = SpinConfig::all_up(24);
            let mut rng = chain_rng(5, 3);
            let mut traj = Vec::new();
            for _ in 0..50 {
                heat_bath_sweep(&mut s, &lat, 0.4, &mut rng).unwrap();
                traj.push(s.to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    /// The single-site kernels, composed in raster order, leave the exact
    /// Boltzmann law invariant and each one satisfies detailed balance.
    #[test]
    fn sweep_kernel_preserves_boltzmann_law() {
        for lat in [Lattice::square(3, 3).unwrap(), Lattice::honeycomb(4, 3).unwrap()] {
            let j = 0.4;
            let m = enumerate_torus(&lat, j).unwrap();
            let pi = m.distribution().probs().to_vec();
            let mut v = pi.clone();
            for site in 0..lat.sites() {
                let bit = 1usize << site;
                let mut next = vec![0.0; v.len()];
                for (y, slot) in next.iter_mut().enumerate() {
                    let cfg = SpinConfig::from_bits(y as u64, lat.sites());
                    let p_up = single_site_conditional(j, lat.neighbor_sum(&cfg.0, site));
                    let p = if cfg.0[site] > 0 { p_up } else { 1.0 - p_up };
                    *slot = (v[y] + v[y ^ bit]) * p;
                    // detailed balance between y and its flip at `site`
                    let flipped = 1.0 - p;
                    assert_abs_diff_eq!(pi[y] * flipped, pi[y ^ bit] * p, epsilon = 1e-15);
                }
                v = next;
            }
            for (a, b) in v.iter().zip(&pi) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_estimates() {
        let cfg = McConfig {
            chains: 4,
            sweeps: 2000,
            ..small(LatticeKind::Square, 4, 4, 0.3, 9)
        };
        let with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_class_frequencies(&cfg).unwrap())
        };
        assert_eq!(with(1), with(4));
    }

    #[test]
    fn uncoupled_estimates() {
        let cfg = small(LatticeKind::Square, 4, 4, 0.0, 1);
        let h = estimate_erasure_entropy(&cfg, EntropyUnit::Bits).unwrap();
        assert_eq!(h.mean, 1.0);
        assert_eq!(h.std_error, 0.0);
        for e in estimate_class_frequencies(&cfg).unwrap() {
            assert!(e.within(1.0 / 16.0, 3.0), "{e:?}");
        }
        let tuples = vec![vec![0, 1], vec![0, 5], vec![0, 1, 2], vec![0, 2, 8, 10]];
        let est = estimate_correlations(&cfg, &tuples).unwrap();
        for e in &est {
            assert!(e.within(0.0, 3.0), "{e:?}");
        }
        assert_eq!(est[2].mean, 0.0);
    }

    #[test]
    fn matches_enumeration_on_small_tori() {
        let lat = Lattice::square(3, 3).unwrap();
        let m = enumerate_torus(&lat, 0.4).unwrap();
        let cfg = small(LatticeKind::Square, 3, 3, 0.4, 2);
        let nb = lat.neighbors(4).to_vec();
        let tuples = vec![vec![nb[0], nb[1]], vec![nb[0], nb[2]], nb.clone()];
        let est = estimate_correlations(&cfg, &tuples).unwrap();
        for (t, e) in tuples.iter().zip(&est) {
            assert!(e.within(m.correlation(t).unwrap(), 3.0), "{t:?}: {e:?}");
        }
        let h = estimate_erasure_entropy(&cfg, EntropyUnit::Nats).unwrap();
        let exact = crate::gibbs::torus_gibbs_erasure(&m, 0.4, &[4], EntropyUnit::Nats).unwrap().entropy.value;
        assert!(h.within(exact, 3.0), "{h:?} vs {exact}");
    }

    #[test]
    fn brick_class_tally_identity() {
        let cfg = small(LatticeKind::Honeycomb, 6, 4, 0.3, 3);
        let p = estimate_class_frequencies(&cfg).unwrap();
        assert_eq!(p.len(), 2);
        assert_abs_diff_eq!(2.0 * p[0].mean + 6.0 * p[1].mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ordered_phase_hot_and_cold_disagree() {
        let cfg = McConfig {
            sweeps: 1000,
            burn_in: 100,
            batches: 20,
            seed: 0,
            chains: 2,
            ..McConfig::new(Lattice::square(64, 64).unwrap(), 1.5)
        };
        assert!(matches!(estimate_erasure_entropy(&cfg, EntropyUnit::Bits), Err(Error::MixingFailure(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(LatticeKind::Square, 3, 3, 0.1, 0);
        cfg.batches = 4;
        assert!(cfg.validate().is_err());
        cfg.batches = 8;
        cfg.sweeps = 7;
        assert!(cfg.validate().is_err());
    }
}
