//! Exact entropy and erasure-entropy rates of finite-alphabet k-step Markov
//! chains, plus the conditional entropy of a chain observed through a
//! discrete memoryless erasure channel.

use serde::{Deserialize, Serialize};

use crate::entropy::{binary_entropy_nats, entropy_nats, EntropyUnit, EntropyValue, JointTable};
use crate::error::{Error, Result};
use crate::numerics::{gcd, pairwise_sum};

const ROW_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL: f64 = 1e-14;
const STATIONARY_MAX_ITER: usize = 1_000_000;
/// Largest `m^n` accepted by the erasure-channel computation.
const DME_TABLE_BUDGET: usize = 4096;
/// Largest `m^L` for an explicit block law.
const BLOCK_TABLE_BUDGET: usize = 1 << 24;

/// A stationary order-k chain on `{0, .., m-1}`.
///
/// Row `c` of the transition table is `P(x_next | context c)`, where the
/// context `(x_{t-k}, .., x_{t-1})` is read as a base-m number with the
/// oldest symbol most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSpec {
    alphabet: usize,
    order: usize,
    transition: Vec<f64>,
    stationary: Vec<f64>,
}

impl MarkovSpec {
    pub fn new(alphabet: usize, order: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::Domain(format!("alphabet size {alphabet} < 2")));
        }
        if order < 1 {
            return Err(Error::Domain("order must be at least 1".into()));
        }
        let contexts = alphabet
            .checked_pow(order as u32)
            .filter(|&c| c <= BLOCK_TABLE_BUDGET)
            .ok_or_else(|| Error::Budget(format!("{alphabet}^{order} contexts")))?;
        if rows.len() != contexts {
            return Err(Error::InvalidRow {
                row: rows.len().min(contexts),
                reason: format!("expected {contexts} rows, got {}", rows.len()),
            });
        }
        let mut transition = Vec::with_capacity(contexts * alphabet);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != alphabet {
                return Err(Error::InvalidRow {
                    row: r,
                    reason: format!("expected {alphabet} entries, got {}", row.len()),
                });
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::InvalidRow {
                    row: r,
                    reason: format!("entry {p} is not a probability"),
                });
            }
            let s = pairwise_sum(row);
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidRow {
                    row: r,
                    reason: format!("row sums to {s}"),
                });
            }
            transition.extend_from_slice(row);
        }
        check_irreducible_aperiodic(alphabet, contexts, &transition)?;
        let stationary = block_stationary(alphabet, contexts, &transition)?;
        Ok(MarkovSpec {
            alphabet,
            order,
            transition,
            stationary,
        })
    }

    /// First-order binary chain that flips its state with probability `eps`.
    pub fn binary_symmetric(eps: f64) -> Result<Self> {
        MarkovSpec::new(2, 1, vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    /// First-order chain whose rows all equal `d` (an i.i.d. source).
    pub fn iid(d: &[f64]) -> Result<Self> {
        MarkovSpec::new(d.len(), 1, vec![d.to_vec(); d.len()])
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn contexts(&self) -> usize {
        self.stationary.len()
    }

    pub fn prob(&self, context: usize, next: usize) -> f64 {
        self.transition[context * self.alphabet + next]
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.transition[context * self.alphabet..(context + 1) * self.alphabet]
    }

    /// Stationary law of a k-block `(x_1, .., x_k)`.
    pub fn block_stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Single-site stationary marginal.
    pub fn marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet];
        let stride = self.contexts() / self.alphabet;
        for (s, &p) in self.stationary.iter().enumerate() {
            out[s / stride] += p;
        }
        out
    }
}

/// Tarjan's algorithm, iterative. Returns the strongly connected components.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = work.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps.sort();
    comps
}

fn block_graph(alphabet: usize, contexts: usize, transition: &[f64]) -> Vec<Vec<usize>> {
    (0..contexts)
        .map(|s| {
            (0..alphabet)
                .filter(|&b| transition[s * alphabet + b] > 0.0)
                .map(|b| (s * alphabet + b) % contexts)
                .collect()
        })
        .collect()
}

fn check_irreducible_aperiodic(alphabet: usize, contexts: usize, transition: &[f64]) -> Result<()> {
    let adj = block_graph(alphabet, contexts, transition);
    let comps = strongly_connected(&adj);
    if comps.len() > 1 {
        return Err(Error::Reducible { classes: comps });
    }
    // Period = gcd of level differences along edges of a BFS layering.
    let mut level = vec![usize::MAX; contexts];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for (u, out) in adj.iter().enumerate() {
        for &v in out {
            let d = (level[u] + 1).abs_diff(level[v]);
            period = gcd(period, d);
        }
    }
    if period != 1 {
        return Err(Error::Periodic { period });
    }
    Ok(())
}

fn block_stationary(alphabet: usize, contexts: usize, transition: &[f64]) -> Result<Vec<f64>> {
    let mut pi = vec![1.0 / contexts as f64; contexts];
    let mut next = vec![0.0; contexts];
    for _ in 0..STATIONARY_MAX_ITER {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &w) in pi.iter().enumerate() {
            for b in 0..alphabet {
                next[(s * alphabet + b) % contexts] += w * transition[s * alphabet + b];
            }
        }
        let total = pairwise_sum(&next);
        next.iter_mut().for_each(|x| *x /= total);
        let residual: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual <= STATIONARY_RESIDUAL {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence(format!(
        "stationary distribution not reached in {STATIONARY_MAX_ITER} iterations"
    )))
}

/// Stationary law of a window `(X_1, .., X_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLaw {
    pub len: usize,
    pub table: JointTable,
}

pub fn stationary_block_law(chain: &MarkovSpec, len: usize) -> Result<BlockLaw> {
    let k = chain.order;
    let m = chain.alphabet;
    if len < k {
        return Err(Error::Domain(format!("window length {len} < order {k}")));
    }
    if m.checked_pow(len as u32).is_none_or(|n| n > BLOCK_TABLE_BUDGET) {
        return Err(Error::Budget(format!("{m}^{len} block table")));
    }
    let contexts = chain.contexts();
    let mut probs = chain.stationary.clone();
    for _ in k..len {
        let mut grown = Vec::with_capacity(probs.len() * m);
        for (i, &p) in probs.iter().enumerate() {
            let ctx = i % contexts;
            for b in 0..m {
                grown.push(p * chain.prob(ctx, b));
            }
        }
        probs = grown;
    }
    Ok(BlockLaw {
        len,
        table: JointTable::from_parts_unchecked(vec![m; len], probs),
    })
}

/// `h = H(X_0 | X_{-k}, .., X_{-1})`; for a k-step chain the one-sided limit
/// is attained at depth k.
pub fn entropy_rate(chain: &MarkovSpec, unit: EntropyUnit) -> Result<EntropyValue> {
    let k = chain.order;
    let law = stationary_block_law(chain, k + 1)?;
    Ok(EntropyValue::from_nats(
        law.table.conditional_entropy_nats(&[k])?,
        unit,
    ))
}

/// `h⁻ = H(X_0 | X_{-k..-1}, X_{1..k})`.
///
/// A one-dimensional k-step chain is a Markov field of range k: given the k
/// symbols on either side, `X_0` is independent of everything further out,
/// so the two-sided limit is attained at radius k.
pub fn erasure_rate(chain: &MarkovSpec, unit: EntropyUnit) -> Result<EntropyValue> {
    let k = chain.order;
    let law = stationary_block_law(chain, 2 * k + 1)?;
    Ok(EntropyValue::from_nats(
        law.table.conditional_entropy_nats(&[k])?,
        unit,
    ))
}

/// `H(X_1, .., X_k | X_{-k}, .., X_{-1})`.
pub fn future_block_entropy(chain: &MarkovSpec, unit: EntropyUnit) -> Result<EntropyValue> {
    let k = chain.order;
    let law = stationary_block_law(chain, 2 * k + 1)?;
    // drop X_0 (coordinate k)
    let keep: Vec<usize> = (0..2 * k + 1).filter(|&c| c != k).collect();
    let targets: Vec<usize> = (k..2 * k).collect();
    Ok(EntropyValue::from_nats(
        law.table.marginal(&keep)?.conditional_entropy_nats(&targets)?,
        unit,
    ))
}

/// `(k+1) h - h⁻ - H(X_1..X_k | X_{-k}..X_{-1})`, in nats. Zero for every
/// k-step chain.
pub fn markov_identity_residual(chain: &MarkovSpec) -> Result<f64> {
    let h = entropy_rate(chain, EntropyUnit::Nats)?.value;
    let hm = erasure_rate(chain, EntropyUnit::Nats)?.value;
    let fut = future_block_entropy(chain, EntropyUnit::Nats)?.value;
    Ok((chain.order as f64 + 1.0) * h - hm - fut)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i * m + l];
            for j in 0..m {
                out[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    out
}

/// `H(X_{L+1} | X_0)` in nats for a first-order chain.
fn gap_entropy_nats(chain: &MarkovSpec, steps: usize) -> f64 {
    let m = chain.alphabet;
    let mut power = chain.transition.clone();
    for _ in 1..steps {
        power = mat_mul(&power, &chain.transition, m);
    }
    let terms: Vec<f64> = (0..m)
        .map(|a| chain.stationary[a] * entropy_nats(&power[a * m..(a + 1) * m]))
        .collect();
    pairwise_sum(&terms)
}

/// `H(X_1, .., X_L | X_0, X_{L+1}) / L` for a first-order chain, through the
/// closed form `h + (h - H(X_{L+1} | X_0)) / L`.
pub fn interval_erasure_rate(chain: &MarkovSpec, len: usize, unit: EntropyUnit) -> Result<EntropyValue> {
    if chain.order != 1 {
        return Err(Error::UnsupportedOrder(chain.order));
    }
    if len < 1 {
        return Err(Error::Domain("interval length must be at least 1".into()));
    }
    let h = entropy_rate(chain, EntropyUnit::Nats)?.value;
    let gap = gap_entropy_nats(chain, len + 1);
    let l = len as f64;
    Ok(EntropyValue::from_nats(h + (h - gap) / l, unit))
}

/// Parameters of the discrete memoryless erasure channel applied to a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmeSpec {
    p: f64,
    n: usize,
}

impl DmeSpec {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("erasure probability {p} outside [0, 1)")));
        }
        if n < 1 {
            return Err(Error::Domain("block length must be at least 1".into()));
        }
        Ok(DmeSpec { p, n })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Per-mask `H(X_erased | X_observed)` in nats, indexed by erasure mask
/// (bit i set means coordinate i is erased).
fn dme_pattern_entropies(chain: &MarkovSpec, n: usize) -> Result<Vec<f64>> {
    let m = chain.alphabet;
    if m.checked_pow(n as u32).is_none_or(|s| s > DME_TABLE_BUDGET) {
        return Err(Error::Budget(format!(
            "erasure-channel table {m}^{n} exceeds {DME_TABLE_BUDGET} entries"
        )));
    }
    // Windows shorter than the order are marginals of the order-k window.
    let law = stationary_block_law(chain, n.max(chain.order))?;
    let table = if n < chain.order {
        law.table.marginal(&(0..n).collect::<Vec<_>>())?
    } else {
        law.table
    };
    let h_all = table.entropy_nats();
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0..(1usize << n) {
        let observed: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        let h_obs = table.marginal(&observed)?.entropy_nats();
        out.push(crate::entropy::clamp_nonnegative(h_all - h_obs)?);
    }
    Ok(out)
}

fn dme_average(patterns: &[f64], n: usize, p: f64) -> f64 {
    let terms: Vec<f64> = patterns
        .iter()
        .enumerate()
        .map(|(mask, &h)| {
            let erased = mask.count_ones() as i32;
            let w = p.powi(erased) * (1.0 - p).powi(n as i32 - erased);
            w * h
        })
        .collect();
    pairwise_sum(&terms) / n as f64
}

/// Finite-n value `(1/n) H(X_1..X_n | Z_1..Z_n)` for the erasure channel
/// with parameter p, summed exactly over all erasure patterns.
pub fn dme_conditional_entropy(chain: &MarkovSpec, dme: DmeSpec, unit: EntropyUnit) -> Result<EntropyValue> {
    let patterns = dme_pattern_entropies(chain, dme.n)?;
    Ok(EntropyValue::from_nats(dme_average(&patterns, dme.n, dme.p), unit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmeRow {
    pub p: f64,
    /// Finite-n upper-window value `(1/n) H(X^n | Z^n)`.
    pub finite_n_value: f64,
    /// `p · h⁻`.
    pub lower_bound: f64,
    /// `finite_n_value / p`; undefined at p = 0.
    pub ratio: Option<f64>,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmeReport {
    pub n: usize,
    pub unit: EntropyUnit,
    pub erasure_rate: f64,
    pub rows: Vec<DmeRow>,
    /// Ratios never increase as p shrinks along the grid (sorted by p).
    pub ratio_shrinks_with_p: bool,
}

pub fn dme_bound_report(chain: &MarkovSpec, p_grid: &[f64], n: usize, unit: EntropyUnit) -> Result<DmeReport> {
    let specs: Vec<DmeSpec> = p_grid.iter().map(|&p| DmeSpec::new(p, n)).collect::<Result<_>>()?;
    let patterns = dme_pattern_entropies(chain, n)?;
    let h_minus = erasure_rate(chain, unit)?.value;
    let rows: Vec<DmeRow> = specs
        .iter()
        .map(|s| {
            let v = unit.from_nats(dme_average(&patterns, n, s.p));
            let bound = s.p * h_minus;
            DmeRow {
                p: s.p,
                finite_n_value: v,
                lower_bound: bound,
                ratio: (s.p > 0.0).then(|| v / s.p),
                bound_holds: v >= bound - 1e-12,
            }
        })
        .collect();
    let mut by_p: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.ratio.map(|q| (r.p, q))).collect();
    by_p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ratio_shrinks_with_p = by_p.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12);
    Ok(DmeReport {
        n,
        unit,
        erasure_rate: h_minus,
        rows,
        ratio_shrinks_with_p,
    })
}

/// Closed form of h⁻ for the binary symmetric chain, in nats.
pub fn binary_symmetric_erasure_nats(eps: f64) -> f64 {
    let same = (1.0 - eps).powi(2) + eps * eps;
    same * binary_entropy_nats((1.0 - eps).powi(2) / same) + 2.0 * eps * (1.0 - eps) * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H01: f64 = 0.468_995_593_589_281_22;
    const HMINUS01: f64 = 0.257_914_141_450_282_6;
    const H018: f64 = 0.680_077_045_728_279_84;

    fn random_chain(rng: &mut ChaCha8Rng, m: usize, k: usize) -> MarkovSpec {
        let rows = (0..m.pow(k as u32))
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            })
            .collect();
        MarkovSpec::new(m, k, rows).unwrap()
    }

    /// Brute force `H(X_target | X_rest)` for a window, directly from the
    /// definition, without JointTable.
    fn brute_conditional(chain: &MarkovSpec, len: usize, targets: &[usize]) -> f64 {
        let m = chain.alphabet();
        let k = chain.order();
        let mut probs = vec![0.0; m.pow(len as u32)];
        for (idx, p) in probs.iter_mut().enumerate() {
            let digits: Vec<usize> = (0..len).map(|i| (idx / m.pow((len - 1 - i) as u32)) % m).collect();
            let start = digits[..k].iter().fold(0, |a, &d| a * m + d);
            let mut w = chain.block_stationary()[start];
            for t in k..len {
                let ctx = digits[t - k..t].iter().fold(0, |a, &d| a * m + d);
                w *= chain.prob(ctx, digits[t]);
            }
            *p = w;
        }
        let key = |idx: usize| -> usize {
            let mut key = 0;
            for i in 0..len {
                let d = (idx / m.pow((len - 1 - i) as u32)) % m;
                key = key * (m + 1) + if targets.contains(&i) { m } else { d };
            }
            key
        };
        let mut rest = std::collections::HashMap::new();
        for (idx, &p) in probs.iter().enumerate() {
            *rest.entry(key(idx)).or_insert(0.0) += p;
        }
        probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(idx, &p)| -p * (p / rest[&key(idx)]).ln())
            .sum()
    }

    #[test]
    fn stationary_examples() {
        let sym = MarkovSpec::binary_symmetric(0.3).unwrap();
        let m = sym.marginal();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-14);
        let c = MarkovSpec::new(2, 1, vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m = c.marginal();
        assert_abs_diff_eq!(m[0], 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m[1], 1.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn reducible_and_periodic_chains_are_rejected() {
        let id = MarkovSpec::new(2, 1, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        match id {
            Err(Error::Reducible { classes }) => assert_eq!(classes, vec![vec![0], vec![1]]),
            other => panic!("unexpected {other:?}"),
        }
        let flip = MarkovSpec::new(2, 1, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(flip, Err(Error::Periodic { period: 2 }));
    }

    #[test]
    fn bad_rows_report_their_index() {
        let e = MarkovSpec::new(2, 1, vec![vec![0.5, 0.5], vec![0.6, 0.5]]).unwrap_err();
        assert!(matches!(e, Error::InvalidRow { row: 1, .. }));
        let e = MarkovSpec::new(2, 1, vec![vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(e, Error::InvalidRow { .. }));
    }

    #[test]
    fn rate_examples() {
        let c = MarkovSpec::binary_symmetric(0.1).unwrap();
        let h = entropy_rate(&c, EntropyUnit::Bits).unwrap().value;
        assert_abs_diff_eq!(h, H01, epsilon = 1e-13);
        let hm = erasure_rate(&c, EntropyUnit::Bits).unwrap().value;
        assert_abs_diff_eq!(hm, HMINUS01, epsilon = 1e-13);
        assert_abs_diff_eq!(
            binary_symmetric_erasure_nats(0.1) / std::f64::consts::LN_2,
            HMINUS01,
            epsilon = 1e-14
        );
        let fut = future_block_entropy(&c, EntropyUnit::Bits).unwrap().value;
        assert_abs_diff_eq!(fut, H018, epsilon = 1e-13);

        let half = MarkovSpec::binary_symmetric(0.5).unwrap();
        assert_abs_diff_eq!(erasure_rate(&half, EntropyUnit::Bits).unwrap().value, 1.0, epsilon = 1e-13);

        let iid = MarkovSpec::iid(&[0.2, 0.5, 0.3]).unwrap();
        let h = entropy_rate(&iid, EntropyUnit::Nats).unwrap().value;
        let hm = erasure_rate(&iid, EntropyUnit::Nats).unwrap().value;
        let expect = -(0.2f64 * 0.2f64.ln() + 0.5 * 0.5f64.ln() + 0.3 * 0.3f64.ln());
        assert_abs_diff_eq!(h, expect, epsilon = 1e-13);
        assert_abs_diff_eq!(hm, expect, epsilon = 1e-13);
    }

    #[test]
    fn rates_match_brute_force_for_random_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, k) in &[(2, 1), (3, 1), (2, 2), (3, 2)] {
            let c = random_chain(&mut rng, m, k);
            let h = entropy_rate(&c, EntropyUnit::Nats).unwrap().value;
            let hm = erasure_rate(&c, EntropyUnit::Nats).unwrap().value;
            assert_abs_diff_eq!(h, brute_conditional(&c, k + 1, &[k]), epsilon = 1e-12);
            assert_abs_diff_eq!(hm, brute_conditional(&c, 2 * k + 1, &[k]), epsilon = 1e-12);
            // Widening the window beyond radius k changes nothing.
            assert_abs_diff_eq!(hm, brute_conditional(&c, 2 * k + 3, &[k + 1]), epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_residual_vanishes() {
        let c = MarkovSpec::binary_symmetric(0.1).unwrap();
        assert!(markov_identity_residual(&c).unwrap().abs() < 1e-12);
        let iid = MarkovSpec::iid(&[0.7, 0.3]).unwrap();
        assert!(markov_identity_residual(&iid).unwrap().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..50 {
            let c = random_chain(&mut rng, 2 + i % 2, 1 + (i / 2) % 2);
            assert!(markov_identity_residual(&c).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn erasure_never_exceeds_entropy_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let c = random_chain(&mut rng, 2 + i % 2, 1 + (i / 2) % 2);
            let h = entropy_rate(&c, EntropyUnit::Nats).unwrap().value;
            let hm = erasure_rate(&c, EntropyUnit::Nats).unwrap().value;
            assert!(hm <= h + 1e-12, "chain {i}: h⁻={hm} > h={h}");
        }
    }

    #[test]
    fn block_law_is_shift_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, k) in &[(2, 1), (2, 2), (3, 1)] {
            let c = random_chain(&mut rng, m, k);
            let max_len = if m == 2 { 12 } else { 8 };
            for len in (k + 1)..=max_len {
                let t = stationary_block_law(&c, len).unwrap().table;
                let head = t.marginal(&(0..len - 1).collect::<Vec<_>>()).unwrap();
                let tail = t.marginal(&(1..len).collect::<Vec<_>>()).unwrap();
                for (a, b) in head.probs().iter().zip(tail.probs()) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn interval_rate_examples() {
        let c = MarkovSpec::binary_symmetric(0.1).unwrap();
        let one = interval_erasure_rate(&c, 1, EntropyUnit::Bits).unwrap().value;
        assert_abs_diff_eq!(one, HMINUS01, epsilon = 1e-13);
        for len in 1..=6 {
            let v = interval_erasure_rate(&c, len, EntropyUnit::Nats).unwrap().value;
            let inner: Vec<usize> = (1..=len).collect();
            let brute = brute_conditional(&c, len + 2, &inner) / len as f64;
            assert_abs_diff_eq!(v, brute, epsilon = 1e-12);
        }
        let iid = MarkovSpec::iid(&[0.25, 0.75]).unwrap();
        let h = entropy_rate(&iid, EntropyUnit::Bits).unwrap().value;
        for len in [1, 5, 40] {
            assert_abs_diff_eq!(interval_erasure_rate(&iid, len, EntropyUnit::Bits).unwrap().value, h, epsilon = 1e-13);
        }
        let k2 = MarkovSpec::new(2, 2, vec![vec![0.5, 0.5]; 4]).unwrap();
        assert_eq!(interval_erasure_rate(&k2, 3, EntropyUnit::Bits), Err(Error::UnsupportedOrder(2)));
    }

    #[test]
    fn interval_defect_is_bounded_by_marginal_gap() {
        // |value - h| = (H(X_{L+1}|X_0) - h)/L <= (H(X_0) - h)/L.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let c = random_chain(&mut rng, 3, 1);
            let h = entropy_rate(&c, EntropyUnit::Nats).unwrap().value;
            let h0 = entropy_nats(&c.marginal());
            for len in 1..=30 {
                let v = interval_erasure_rate(&c, len, EntropyUnit::Nats).unwrap().value;
                assert!(v <= h + 1e-13);
                assert!((h - v) <= (h0 - h) / len as f64 + 1e-13);
            }
        }
    }

    #[test]
    fn dme_examples() {
        let uniform = MarkovSpec::iid(&[0.5, 0.5]).unwrap();
        for n in [1, 4, 10] {
            for p in [0.0, 0.3, 0.9] {
                let v = dme_conditional_entropy(&uniform, DmeSpec::new(p, n).unwrap(), EntropyUnit::Bits).unwrap();
                assert_abs_diff_eq!(v.value, p, epsilon = 1e-12);
            }
        }
        let c = MarkovSpec::binary_symmetric(0.1).unwrap();
        let v = dme_conditional_entropy(&c, DmeSpec::new(0.1, 10).unwrap(), EntropyUnit::Bits).unwrap();
        assert!(v.value >= 0.1 * HMINUS01);
        // Exact value from an independent Python enumeration of all 2^10 masks.
        assert_abs_diff_eq!(v.value, 0.031_117_965_932_424_246, epsilon = 1e-12);
        assert!(DmeSpec::new(0.999, 4).is_ok());
        assert!(DmeSpec::new(1.0, 4).is_err());
    }

    #[test]
    fn dme_budget() {
        let c = MarkovSpec::binary_symmetric(0.1).unwrap();
        assert!(dme_conditional_entropy(&c, DmeSpec::new(0.1, 12).unwrap(), EntropyUnit::Bits).is_ok());
        assert!(matches!(
            dme_conditional_entropy(&c, DmeSpec::new(0.1, 13).unwrap(), EntropyUnit::Bits),
            Err(Error::Budget(_))
        ));
        let t = MarkovSpec::iid(&[0.2, 0.3, 0.5]).unwrap();
        assert!(dme_conditional_entropy(&t, DmeSpec::new(0.1, 7).unwrap(), EntropyUnit::Bits).is_ok());
        assert!(dme_conditional_entropy(&t, DmeSpec::new(0.1, 8).unwrap(), EntropyUnit::Bits).is_err());
    }

    #[test]
    fn dme_nondecreasing_in_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = random_chain(&mut rng, 2, 2);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let report = dme_bound_report(&c, &grid, 8, EntropyUnit::Nats).unwrap();
        for w in report.rows.windows(2) {
            assert!(w[1].finite_n_value >= w[0].finite_n_value - 1e-14);
        }
    }

    #[test]
    fn dme_report_for_iid_uniform_has_constant_ratio() {
        let uniform = MarkovSpec::iid(&[0.5, 0.5]).unwrap();
        let report = dme_bound_report(&uniform, &[0.1, 0.5, 0.9], 6, EntropyUnit::Bits).unwrap();
        for r in &report.rows {
            assert_abs_diff_eq!(r.ratio.unwrap(), 1.0, epsilon = 1e-12);
        }
    }
}
