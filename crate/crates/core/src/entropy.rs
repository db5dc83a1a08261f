//! Numerical views of topological entropy: Bowen's counting definition,
//! the growth rate of iterated curve lengths, and the chain of inequalities
//! tying both to the degrees of the map.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist3, SampledCurve, TorusPoint};
use crate::invariants::degree_report;
use crate::maps::{fit_slope, stream_iterate, PatternMap, DEFAULT_STREAM_BUDGET};

/// Largest grid the estimator accepts.
pub const MAX_GRID_POINTS: usize = 200_000;
/// Counts above `grid points / SATURATION` are left out of the fit.
pub const SATURATION: usize = 16;
/// Number of consecutive `n` in the fit window.
pub const FIT_POINTS: usize = 3;

/// Parameters of [`bowen_entropy`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenConfig {
    pub epsilon: f64,
    pub n_max: usize,
    /// Angular samples of the grid.
    pub grid_res: usize,
    /// Hexagonal rings of the fiber stencil; ring `k` holds `6k` points.
    pub fiber_rings: usize,
    pub seed: u64,
}

impl Default for BowenConfig {
    fn default() -> Self {
        BowenConfig { epsilon: 0.05, n_max: 6, grid_res: 28_000, fiber_rings: 1, seed: 0 }
    }
}

/// Greedy Bowen counts and the entropy bracket read off them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub epsilon: f64,
    pub n_max: usize,
    pub grid_points: usize,
    /// Iterates applied to the grid before counting starts.
    pub burn_in: usize,
    /// Largest ambient distance between neighbouring grid points after the
    /// burn-in.
    pub spacing: f64,
    /// Entry `n − 1` bounds the number of `(n, ε)`-balls needed to cover
    /// the grid.
    pub spanning_counts: Vec<u64>,
    /// Entry `n − 1` is the size of an `(n, 2ε)`-separated subset.
    pub separated_counts: Vec<u64>,
    /// `separated ≤ C·spanning` holds with this `C`.
    pub greedy_factor: f64,
    /// Range of `n` used for the slopes: the last few `n` whose spanning
    /// count stays below `grid_points / SATURATION`.
    pub fit_window: (usize, usize),
    pub h_lower: f64,
    pub h_upper: f64,
}

fn fiber_stencil(rings: usize) -> (Vec<(f64, f64)>, f64) {
    if rings == 0 {
        return (vec![(0.0, 0.0)], 0.0);
    }
    let gap = 0.5 / rings as f64;
    let mut pts = vec![(0.0, 0.0)];
    for k in 1..=rings {
        let r = gap * k as f64;
        for j in 0..6 * k {
            let a = TAU * j as f64 / (6 * k) as f64;
            pts.push((r * a.cos(), r * a.sin()));
        }
    }
    (pts, gap)
}

/// Ambient positions along each orbit, `n_max` per grid point.
struct OrbitTable {
    n_max: usize,
    pos: Vec<[f64; 3]>,
}

impl OrbitTable {
    #[inline]
    fn at(&self, i: usize, j: usize) -> [f64; 3] {
        self.pos[i * self.n_max + j]
    }

    fn len(&self) -> usize {
        self.pos.len() / self.n_max
    }

    /// `d_n` distance between orbits `a` and `b`, or `None` once it exceeds `r`.
    #[inline]
    fn within(&self, a: usize, b: usize, n: usize, r: f64) -> bool {
        (0..n).rev().all(|j| dist3(self.at(a, j), self.at(b, j)) <= r)
    }
}

type Cell = (i64, i64, i64);

fn cell(x: [f64; 3], size: f64) -> Cell {
    ((x[0] / size).floor() as i64, (x[1] / size).floor() as i64, (x[2] / size).floor() as i64)
}

fn neighbours(c: Cell) -> impl Iterator<Item = Cell> {
    (-1..=1).flat_map(move |a| (-1..=1).flat_map(move |b| (-1..=1).map(move |d| (c.0 + a, c.1 + b, c.2 + d))))
}

/// Greedy cover of all orbits by `(n, r)`-balls centred at orbits.
fn greedy_spanning(t: &OrbitTable, n: usize, r: f64) -> u64 {
    let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
    for i in 0..t.len() {
        buckets.entry(cell(t.at(i, n - 1), r)).or_default().push(i);
    }
    let mut covered = vec![false; t.len()];
    let mut centres = 0;
    for i in 0..t.len() {
        if covered[i] {
            continue;
        }
        centres += 1;
        covered[i] = true;
        for c in neighbours(cell(t.at(i, n - 1), r)) {
            if let Some(list) = buckets.get(&c) {
                for &k in list {
                    if !covered[k] && t.within(i, k, n, r) {
                        covered[k] = true;
                    }
                }
            }
        }
    }
    centres
}

/// Greedy maximal set with pairwise `d_n > r`, seeded with `seed` (which
/// stays separated as `n` grows).
fn greedy_separated(t: &OrbitTable, n: usize, r: f64, seed: &[usize]) -> Vec<usize> {
    let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut chosen = Vec::new();
    let mut taken = vec![false; t.len()];
    for i in seed.iter().copied().chain(0..t.len()) {
        if taken[i] {
            continue;
        }
        let c = cell(t.at(i, n - 1), r);
        let clash = neighbours(c).any(|nc| {
            buckets.get(&nc).is_some_and(|list| list.iter().any(|&k| t.within(i, k, n, r)))
        });
        if !clash {
            taken[i] = true;
            chosen.push(i);
            buckets.entry(c).or_default().push(i);
        }
    }
    chosen
}

/// Estimate the topological entropy of `f` by counting dynamical balls.
///
/// The grid takes `grid_res` jittered angles times a small fiber stencil,
/// pushed forward until the stencil has contracted below `ε/4`, so that the
/// counts see the attractor rather than the transient fiber directions.
pub fn bowen_entropy(f: &PatternMap, cfg: &BowenConfig) -> Result<EntropyEstimate> {
    let BowenConfig { epsilon, n_max, grid_res, fiber_rings, seed } = *cfg;
    if n_max < 4 {
        return Err(Error::InvalidArgument(format!("n_max must be at least 4, got {n_max}")));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let (stencil, gap) = fiber_stencil(fiber_rings);
    let grid_points = grid_res * stencil.len();
    if grid_res < 16 || grid_points > MAX_GRID_POINTS {
        return Err(Error::InvalidArgument(format!(
            "grid of {grid_points} points is outside 16..={MAX_GRID_POINTS}"
        )));
    }
    let limit = epsilon / 4.0;
    let lambda = f.contraction();
    let mut burn_in = 1;
    while 0.5 * gap * lambda.powi(burn_in as i32) > limit {
        burn_in += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter: Vec<f64> = (0..grid_points).map(|_| rng.gen::<f64>()).collect();
    let start = |i: usize| {
        let (a, k) = (i / stencil.len(), i % stencil.len());
        let phi = TAU * (a as f64 + jitter[i]) / grid_res as f64;
        TorusPoint { u: stencil[k].0, v: stencil[k].1, phi }
    };
    let pos: Vec<[f64; 3]> = (0..grid_points)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut p = f.apply_n(&start(i), burn_in);
            (0..n_max).map(move |j| {
                if j > 0 {
                    p = f.apply(&p);
                }
                p.to_ambient()
            })
        })
        .collect();
    let table = OrbitTable { n_max, pos };

    let s = stencil.len();
    let angular = (0..grid_points)
        .into_par_iter()
        .map(|i| dist3(table.at(i, 0), table.at((i + s) % grid_points, 0)))
        .reduce(|| 0.0, f64::max);
    let spacing = angular.max(0.5 * gap * lambda.powi(burn_in as i32));
    if spacing > limit {
        return Err(Error::GridTooCoarse { spacing, limit });
    }

    let raw_spanning: Vec<u64> =
        (1..=n_max).into_par_iter().map(|n| greedy_spanning(&table, n, epsilon)).collect();
    // a cover at level m ≥ n is also a cover at level n
    let mut spanning_counts = raw_spanning.clone();
    for n in (0..n_max - 1).rev() {
        spanning_counts[n] = spanning_counts[n].min(spanning_counts[n + 1]);
    }
    let mut separated_counts = Vec::with_capacity(n_max);
    let mut chosen = Vec::new();
    for n in 1..=n_max {
        chosen = greedy_separated(&table, n, 2.0 * epsilon, &chosen);
        separated_counts.push(chosen.len() as u64);
    }

    // past this many balls the grid is too sparse for the greedy counts to
    // keep growing at the true rate
    let cap = (grid_points / SATURATION) as u64;
    let hi = (1..=n_max).rev().find(|&n| spanning_counts[n - 1] <= cap).unwrap_or(1).max(FIT_POINTS);
    let lo = hi + 1 - FIT_POINTS;
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let slope = |c: &[u64]| {
        let ys: Vec<f64> = c[lo - 1..hi].iter().map(|&x| (x as f64).ln()).collect();
        fit_slope(&xs, &ys).0
    };
    let (a, b) = (slope(&separated_counts), slope(&spanning_counts));
    Ok(EntropyEstimate {
        epsilon,
        n_max,
        grid_points,
        burn_in,
        spacing,
        spanning_counts,
        separated_counts,
        greedy_factor: 1.0,
        fit_window: (lo, hi),
        h_lower: a.min(b),
        h_upper: a.max(b),
    })
}

/// Lengths of `fⁿ ∘ σ` and their exponential growth rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgrSeries {
    /// Entry `n` is the length of the `n`-th image, `n = 0..=n_max`.
    pub lengths: Vec<f64>,
    pub samples: Vec<usize>,
    /// Floating-point slack on each length; sampling itself only shortens
    /// the inscribed polyline.
    pub discretization: Vec<f64>,
    pub fit_window: (usize, usize),
    pub egr: f64,
    pub fit_residual: f64,
    /// The fitted slope was negative and set to zero, which is forced for
    /// closed curves that wind around the core.
    pub clamped: bool,
}

pub fn length_egr(f: &PatternMap, sigma: &SampledCurve, n_max: usize) -> Result<EgrSeries> {
    length_egr_with_budget(f, sigma, n_max, DEFAULT_STREAM_BUDGET)
}

pub fn length_egr_with_budget(f: &PatternMap, sigma: &SampledCurve, n_max: usize, budget: usize) -> Result<EgrSeries> {
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!("n_max must be at least 2, got {n_max}")));
    }
    let mut lengths = Vec::with_capacity(n_max + 1);
    let mut samples = Vec::with_capacity(n_max + 1);
    let mut discretization = Vec::with_capacity(n_max + 1);
    let mut winds = false;
    for n in 0..=n_max {
        let s = stream_iterate(f, sigma, n, budget)?;
        if n == 0 {
            winds = sigma.is_closed() && s.sweep.winding() != 0;
        }
        lengths.push(s.length);
        samples.push(s.samples());
        discretization.push(1e-12 * s.samples() as f64 * (1.0 + s.length));
    }
    let lo = n_max / 2;
    let xs: Vec<f64> = (lo..=n_max).map(|n| n as f64).collect();
    let ys: Vec<f64> = lengths[lo..].iter().map(|l| l.ln()).collect();
    let (slope, fit_residual) = fit_slope(&xs, &ys);
    let clamped = winds && slope < 0.0;
    Ok(EgrSeries {
        lengths,
        samples,
        discretization,
        fit_window: (lo, n_max),
        egr: if clamped { 0.0 } else { slope },
        fit_residual,
        clamped,
    })
}

/// Parameters of [`verify_chain`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub bowen: BowenConfig,
    pub egr_n_max: usize,
    /// Slack allowed on every estimated quantity.
    pub tolerance: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { bowen: BowenConfig::default(), egr_n_max: 10, tolerance: 0.15 }
    }
}

/// One inequality `lhs ≥ rhs − tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ChainLink {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        ChainLink { name: name.into(), lhs, rhs, tolerance, pass: lhs >= rhs - tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub map_id: String,
    pub r: u32,
    pub entropy: EntropyEstimate,
    pub egr: EgrSeries,
    pub log_d_geom: f64,
    pub log_prod_p: f64,
    pub log_d_hom: Option<f64>,
    pub links: Vec<ChainLink>,
    /// `log d_geom − log |d_hom|` when the homological degree is defined.
    pub geometric_excess: Option<f64>,
    pub all_pass: bool,
}

/// Check `h ≥ egr ≥ log d_geom ≥ log ∏p` and `egr ≥ log |d_hom|`.
pub fn verify_chain(f: &PatternMap, r: u32, cfg: &ChainConfig) -> Result<ChainReport> {
    let degrees = degree_report(f, r)?;
    let entropy = bowen_entropy(f, &cfg.bowen)?;
    let core = SampledCurve::core_circle(1, 256);
    let egr = length_egr(f, &core, cfg.egr_n_max)?;
    let tol = cfg.tolerance;
    let b = degrees.bounds;
    let mut links = vec![
        ChainLink::new("h_upper >= egr", entropy.h_upper, egr.egr, tol),
        ChainLink::new("egr >= log d_geom", egr.egr, b.log_d_geom, tol),
        ChainLink::new("log d_geom >= log prod p", b.log_d_geom, b.log_prod_p, tol),
    ];
    if let Some(h) = b.log_d_hom {
        links.push(ChainLink::new("egr >= log |d_hom|", egr.egr, h, tol));
    }
    let all_pass = links.iter().all(|l| l.pass);
    Ok(ChainReport {
        map_id: f.label().to_string(),
        r: degrees.r,
        entropy,
        egr,
        log_d_geom: b.log_d_geom,
        log_prod_p: b.log_prod_p,
        log_d_hom: b.log_d_hom,
        geometric_excess: b.log_d_hom.map(|h| b.log_d_geom - h),
        links,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stencil_sizes() {
        assert_eq!(fiber_stencil(1).0.len(), 7);
        assert_eq!(fiber_stencil(2).0.len(), 19);
        assert_eq!(fiber_stencil(0), (vec![(0.0, 0.0)], 0.0));
    }

    #[test]
    fn identity_counts_do_not_grow() {
        let cfg = BowenConfig { epsilon: 0.1, n_max: 5, grid_res: 2000, ..Default::default() };
        let e = bowen_entropy(&PatternMap::identity(), &cfg).unwrap();
        assert!(e.spanning_counts.windows(2).all(|w| w[0] == w[1]), "{e:?}");
        assert!(e.h_lower.abs() < 1e-12 && e.h_upper.abs() < 1e-12);
    }

    #[test]
    fn separated_never_exceeds_spanning() {
        let cfg = BowenConfig { epsilon: 0.1, n_max: 5, grid_res: 4000, ..Default::default() };
        let e = bowen_entropy(&PatternMap::solenoid(2, 0.1).unwrap(), &cfg).unwrap();
        for n in 0..5 {
            assert!(e.separated_counts[n] <= e.spanning_counts[n]);
        }
        assert!(e.spanning_counts.windows(2).all(|w| w[0] <= w[1]));
        assert!(e.separated_counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let cfg = BowenConfig { epsilon: 0.05, n_max: 4, grid_res: 100, ..Default::default() };
        assert!(matches!(
            bowen_entropy(&PatternMap::identity(), &cfg),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn identity_lengths_are_constant() {
        let core = SampledCurve::core_circle(1, 64);
        let s = length_egr(&PatternMap::identity(), &core, 6).unwrap();
        assert!(s.egr.abs() <= 1e-6);
        // the core is fixed, and its inscribed 64-gon is what gets measured
        let polygon = 64.0 * 2.0 * 1.5 * (PI / 64.0).sin();
        assert!(s.lengths.iter().all(|l| (l - polygon).abs() < 1e-12));
    }

    #[test]
    fn solenoid_length_growth() {
        let core = SampledCurve::core_circle(1, 64);
        let s = length_egr(&PatternMap::solenoid(2, 0.1).unwrap(), &core, 8).unwrap();
        assert!((s.egr / 2f64.ln() - 1.0).abs() < 0.05, "{s:?}");
    }
}
