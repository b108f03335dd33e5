//! Periodic square and honeycomb lattices with uniform nearest-neighbour
//! Ising coupling.
//!
//! Sites are indexed row-major, `site = y * width + x`. The honeycomb is
//! embedded as a brick wall: every site has its left and right neighbours
//! in the same row, plus one vertical neighbour, up when `x + y` is even and
//! down otherwise. For odd heights the vertical wrap carries a shift of one
//! column, `(x, y + H) ≡ (x + 1, y)`, which keeps the parity pattern (and so
//! the honeycomb structure) consistent across the seam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    Honeycomb,
}

impl LatticeKind {
    pub fn degree(self) -> usize {
        match self {
            LatticeKind::Square => 4,
            LatticeKind::Honeycomb => 3,
        }
    }

    /// Number of neighbour configurations in each boundary class, in class
    /// order. Square: all equal, one odd, opposite pair, adjacent pair.
    /// Honeycomb: all equal, one odd.
    pub fn class_multiplicities(self) -> &'static [usize] {
        match self {
            LatticeKind::Square => &[2, 8, 2, 4],
            LatticeKind::Honeycomb => &[2, 6],
        }
    }
}

/// Boundary class of a square-lattice neighbourhood given as (E, N, W, S).
pub fn square_class(e: i8, n: i8, w: i8, s: i8) -> usize {
    let sum = e + n + w + s;
    match sum.abs() {
        4 => 0,
        2 => 1,
        _ if e == w => 2,
        _ => 3,
    }
}

/// Boundary class of a honeycomb neighbourhood.
pub fn honeycomb_class(a: i8, b: i8, c: i8) -> usize {
    if (a + b + c).abs() == 3 {
        0
    } else {
        1
    }
}

/// `P(σ = +1 | neighbour sum)` under the heat-bath conditional
/// `e^{JS} / (2 cosh JS)`.
#[inline]
pub fn single_site_conditional(coupling: f64, neighbor_sum: i32) -> f64 {
    let x = coupling * neighbor_sum as f64;
    1.0 / (1.0 + (-2.0 * x).exp())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    kind: LatticeKind,
    width: usize,
    height: usize,
    /// Column shift of the vertical identification (brick wall, odd height).
    shift: usize,
    neighbors: Vec<usize>,
    bonds: Vec<(usize, usize)>,
}

impl Lattice {
    /// Square torus with `width, height >= 3`.
    pub fn square(width: usize, height: usize) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidLattice(format!(
                "square torus {width}x{height}: both extents must be at least 3"
            )));
        }
        Self::build(LatticeKind::Square, width, height, 0)
    }

    /// Brick-wall honeycomb torus with even `width >= 4` and `height >= 3`.
    pub fn honeycomb(width: usize, height: usize) -> Result<Self> {
        if width < 4 || width % 2 != 0 || height < 3 {
            return Err(Error::InvalidLattice(format!(
                "brick torus {width}x{height}: width must be even and >= 4, height >= 3"
            )));
        }
        Self::build(LatticeKind::Honeycomb, width, height, height % 2)
    }

    pub fn new(kind: LatticeKind, width: usize, height: usize) -> Result<Self> {
        match kind {
            LatticeKind::Square => Self::square(width, height),
            LatticeKind::Honeycomb => Self::honeycomb(width, height),
        }
    }

    fn build(kind: LatticeKind, width: usize, height: usize, shift: usize) -> Result<Self> {
        let mut lat = Lattice {
            kind,
            width,
            height,
            shift,
            neighbors: Vec::new(),
            bonds: Vec::new(),
        };
        let n = width * height;
        let deg = kind.degree();
        let mut neighbors = Vec::with_capacity(n * deg);
        for site in 0..n {
            let (x, y) = lat.coords(site);
            let (x, y) = (x as i64, y as i64);
            match kind {
                LatticeKind::Square => {
                    neighbors.push(lat.wrap(x + 1, y));
                    neighbors.push(lat.wrap(x, y + 1));
                    neighbors.push(lat.wrap(x - 1, y));
                    neighbors.push(lat.wrap(x, y - 1));
                }
                LatticeKind::Honeycomb => {
                    let dy = if (x + y) % 2 == 0 { 1 } else { -1 };
                    neighbors.push(lat.wrap(x, y + dy));
                    neighbors.push(lat.wrap(x + 1, y));
                    neighbors.push(lat.wrap(x - 1, y));
                }
            }
        }
        lat.neighbors = neighbors;
        let mut bonds = Vec::with_capacity(n * deg / 2);
        for site in 0..n {
            let nb = lat.neighbors(site);
            for (i, &a) in nb.iter().enumerate() {
                if a == site || nb[..i].contains(&a) {
                    return Err(Error::InvalidLattice(format!(
                        "{kind:?} {width}x{height} has a self or doubled bond at site {site}"
                    )));
                }
                if !lat.neighbors(a).contains(&site) {
                    return Err(Error::InvalidLattice(format!("asymmetric bond {site}-{a}")));
                }
                if a > site {
                    bonds.push((site, a));
                }
            }
        }
        lat.bonds = bonds;
        Ok(lat)
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sites(&self) -> usize {
        self.width * self.height
    }

    pub fn degree(&self) -> usize {
        self.kind.degree()
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.width, site / self.width)
    }

    /// Canonical site of an arbitrary integer position.
    pub fn wrap(&self, x: i64, y: i64) -> usize {
        let h = self.height as i64;
        let w = self.width as i64;
        let q = y.div_euclid(h);
        let yy = y.rem_euclid(h);
        let xx = (x + q * self.shift as i64).rem_euclid(w);
        (yy * w + xx) as usize
    }

    /// Neighbours in fixed order: square (E, N, W, S); honeycomb
    /// (vertical, right, left).
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let d = self.degree();
        &self.neighbors[site * d..(site + 1) * d]
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites() {
            Err(Error::SiteOutOfRange {
                site,
                sites: self.sites(),
            })
        } else {
            Ok(())
        }
    }

    /// Translations preserving the lattice: all shifts on the square torus,
    /// shifts with `dx + dy` even on the brick wall.
    pub fn translations(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for dy in 0..self.height as i64 {
            for dx in 0..self.width as i64 {
                if self.kind == LatticeKind::Square || (dx + dy) % 2 == 0 {
                    out.push((dx, dy));
                }
            }
        }
        out
    }

    pub fn translate(&self, site: usize, dx: i64, dy: i64) -> usize {
        let (x, y) = self.coords(site);
        self.wrap(x as i64 + dx, y as i64 + dy)
    }

    /// Sites of the `w x h` rectangle with lower-left corner `(x0, y0)`.
    pub fn block(&self, x0: usize, y0: usize, w: usize, h: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..h)
            .flat_map(|dy| (0..w).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| self.wrap((x0 + dx) as i64, (y0 + dy) as i64))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Sum of neighbour spins.
    #[inline]
    pub fn neighbor_sum(&self, spins: &[i8], site: usize) -> i32 {
        self.neighbors(site).iter().map(|&j| spins[j] as i32).sum()
    }

    /// Boundary class of the neighbourhood of `site`.
    pub fn boundary_class(&self, spins: &[i8], site: usize) -> usize {
        let nb = self.neighbors(site);
        match self.kind {
            LatticeKind::Square => square_class(spins[nb[0]], spins[nb[1]], spins[nb[2]], spins[nb[3]]),
            LatticeKind::Honeycomb => honeycomb_class(spins[nb[0]], spins[nb[1]], spins[nb[2]]),
        }
    }

    /// `Σ_bonds σ_i σ_j`.
    pub fn bond_sum(&self, spins: &[i8]) -> i32 {
        self.bonds
            .iter()
            .map(|&(a, b)| (spins[a] * spins[b]) as i32)
            .sum()
    }
}

/// Spin values `±1`, one per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(pub Vec<i8>);

impl SpinConfig {
    pub fn all_up(sites: usize) -> Self {
        SpinConfig(vec![1; sites])
    }

    /// Bit i of `bits` set means site i is +1.
    pub fn from_bits(bits: u64, sites: usize) -> Self {
        SpinConfig((0..sites).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }
}

/// `H_Λ = -J Σ σ_i σ_j` over the bonds with at least one end in `region`.
pub fn hamiltonian_window(config: &SpinConfig, lattice: &Lattice, coupling: f64, region: &[usize]) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Domain("empty region".into()));
    }
    if config.0.len() != lattice.sites() {
        return Err(Error::Domain(format!(
            "configuration has {} spins, lattice has {} sites",
            config.0.len(),
            lattice.sites()
        )));
    }
    let mut inside = vec![false; lattice.sites()];
    for &s in region {
        lattice.check_site(s)?;
        inside[s] = true;
    }
    let s = &config.0;
    let sum: i32 = lattice
        .bonds()
        .iter()
        .filter(|(a, b)| inside[*a] || inside[*b])
        .map(|&(a, b)| (s[a] * s[b]) as i32)
        .sum();
    Ok(-coupling * sum as f64)
}
