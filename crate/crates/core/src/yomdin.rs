//! Covering arguments behind the bound `egr ℓ(fⁿ∘σ) ≤ h(f) + R(f)/k`:
//! normalized curve pieces, Taylor localization, Markov's polynomial
//! inequality, the one-step interval cover at unit scale, the iterated cover
//! of a dynamical ball's preimage, and the resulting length and entropy
//! checks.
//!
//! Everything happens in the ambient space after scaling by `λ = 1/ε`, so
//! dynamical balls have radius 1 and a piece `J = [t₀, t₁]` of the curve
//! parameter is normalized at depth `r` when `t ↦ λ·fʳ(σ(t))`, reparametrized
//! affinely over `J`, has derivatives of orders `1..=k` bounded by 1.

pub mod poly;

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{bowen_entropy, length_egr, BowenConfig, EgrSeries, EntropyEstimate};
use crate::error::{Error, Result};
use crate::geometry::{SampledCurve, TorusPoint};
use crate::jet::{Jet, MAX_ORDER};
use crate::maps::PatternMap;
pub use poly::{polynomial_ball_cover, BallCover, BallRegion, Poly, VectorPoly};

/// Allowed excess over 1 in every measured normalization bound.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Parameter samples of the shadowing oracle.
pub const ORACLE_SAMPLES: usize = 100_000;
/// Multiplier applied to sampled derivative suprema of the map.
pub const SUP_SAFETY: f64 = 1.1;
/// Radius of the enlarged ball in the one-step cover, at unit scale.
pub const ENLARGED_RADIUS: f64 = 1.5;

const PHI_GRID: usize = 1024;
const FIBER_RINGS: [f64; 2] = [0.5, 1.0];
const FIBER_SPOKES: usize = 8;
const DIRECTIONS: usize = 96;
const CURVE_GRID: usize = 4096;
const CHECK_POINTS: usize = 32;
const LENGTH_CELLS: usize = 64;

/// Finite-difference steps, in the reparametrized variable, for orders 1..=3.
const FD_STEPS: [f64; 3] = [1e-3, 1e-2, 5e-2];

fn check_order(k: usize) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    Ok(())
}

/// Bound `c₁(k)` on `‖d^s(f∘τ)‖ / M` for a normalized `τ` and a map whose
/// derivatives of orders `2..=k` are at most 1: summing the Faà di Bruno
/// terms crudely gives the Bell number `B(s) ≤ B(k)`.
pub fn chain_rule_constant(k: usize) -> Result<f64> {
    check_order(k)?;
    Ok([1.0, 2.0, 5.0][k - 1])
}

/// `c(k)` with `‖d^s Q‖ ≤ c(k)·‖Q‖` on `[0, 1]` for every polynomial `Q` of
/// degree `k` and every `s = 1..=k`: iterating Markov's `k²` on `[−1, 1]`,
/// rescaled to the unit interval, gives `∏_{s=1}^{k} 2k²`.
pub fn markov_bound(k: usize) -> f64 {
    assert!(k >= 1, "order must be at least 1");
    (2.0 * (k * k) as f64).powi(k as i32)
}

/// The counting constants for order `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverConstants {
    pub k: usize,
    pub c1_k: f64,
    pub markov_c_k: f64,
    /// Components of the preimage of the enlarged ball: `6k + 2`.
    pub alpha1_k: f64,
    /// Normalizing subdivisions per component: `⌈4·c(k)⌉`.
    pub alpha2_k: f64,
    pub alpha_k: f64,
    /// `α(k)·(⌈(4c₁(k))^{1/k}⌉ + 1)`.
    pub mu_k: f64,
    /// Filled in by [`iterated_cover`]: the initial partition size.
    pub c_sigma_eps: f64,
}

impl CoverConstants {
    pub fn new(k: usize) -> Result<Self> {
        let c1_k = chain_rule_constant(k)?;
        let markov_c_k = markov_bound(k);
        let alpha1_k = (6 * k + 2) as f64;
        let alpha2_k = (4.0 * markov_c_k).ceil();
        let alpha_k = alpha1_k * alpha2_k;
        let mu_k = alpha_k * ((4.0 * c1_k).powf(1.0 / k as f64).ceil() + 1.0);
        Ok(CoverConstants { k, c1_k, markov_c_k, alpha1_k, alpha2_k, alpha_k, mu_k, c_sigma_eps: 0.0 })
    }

    /// `log μ(k)`, the additive constant of the weak growth bound.
    pub fn log_mu(&self) -> f64 {
        self.mu_k.ln()
    }
}

/// Curve that is affine in chart coordinates, `t ↦ start + t·velocity` for
/// `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSegment {
    pub start: TorusPoint,
    pub velocity: [f64; 3],
}

impl ChartSegment {
    /// The core circle traversed `turns` times.
    pub fn core(turns: i64) -> Self {
        ChartSegment { start: TorusPoint::core(0.0), velocity: [0.0, 0.0, TAU * turns as f64] }
    }

    /// Arc of the core between two angles.
    pub fn core_arc(phi0: f64, phi1: f64) -> Self {
        ChartSegment { start: TorusPoint::core(phi0), velocity: [0.0, 0.0, phi1 - phi0] }
    }

    pub fn new(start: TorusPoint, end: TorusPoint) -> Result<Self> {
        TorusPoint::new(start.u, start.v, start.phi)?;
        TorusPoint::new(end.u, end.v, end.phi)?;
        Ok(ChartSegment { start, velocity: [end.u - start.u, end.v - start.v, end.phi - start.phi] })
    }

    pub fn point_at(&self, t: f64) -> TorusPoint {
        self.point_on(t, 0.0, 0.0)
    }

    /// `σ(t₀ + w·h)`, computed so that the offset keeps its precision.
    fn point_on(&self, t0: f64, h: f64, w: f64) -> TorusPoint {
        let c = |s: f64, v: f64| (s + t0 * v) + w * h * v;
        TorusPoint {
            u: c(self.start.u, self.velocity[0]),
            v: c(self.start.v, self.velocity[1]),
            phi: c(self.start.phi, self.velocity[2]),
        }
    }

    pub fn jets(&self, t: f64) -> [Jet; 3] {
        let p = self.point_at(t);
        [
            Jet([p.u, self.velocity[0], 0.0, 0.0]),
            Jet([p.v, self.velocity[1], 0.0, 0.0]),
            Jet([p.phi, self.velocity[2], 0.0, 0.0]),
        ]
    }

    /// Whether the segment is a closed loop.
    pub fn is_closed(&self) -> bool {
        let turns = self.velocity[2] / TAU;
        self.velocity[0] == 0.0 && self.velocity[1] == 0.0 && turns != 0.0 && (turns - turns.round()).abs() < 1e-12
    }

    /// Polyline with `segments` equal parameter steps.
    pub fn sampled(&self, segments: usize) -> Result<SampledCurve> {
        let points = (0..=segments).map(|i| self.point_at(i as f64 / segments as f64)).collect();
        SampledCurve::from_lifted(points, self.is_closed())
    }

    /// Sampled `sup ‖d^s σ‖` in 3-space for `s = 1..=k`.
    pub fn ambient_derivative_sups(&self, k: usize) -> Vec<f64> {
        let mut sups = vec![0.0; k];
        for i in 0..=CURVE_GRID {
            let j = embed_jets(self.jets(i as f64 / CURVE_GRID as f64));
            for (s, sup) in sups.iter_mut().enumerate() {
                *sup = f64::max(*sup, jet_norm(&j, s + 1));
            }
        }
        sups
    }
}

fn embed_jets(p: [Jet; 3]) -> [Jet; 3] {
    let r = p[0] * 0.5 + 1.5;
    let (c, s) = p[2].cos_sin();
    [r * c, r * s, p[1] * 0.5]
}

fn chart_jets(x: [Jet; 3]) -> [Jet; 3] {
    let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
    [(rho + -1.5) * 2.0, x[2] * 2.0, Jet::atan2(x[1], x[0])]
}

fn jet_norm(j: &[Jet; 3], s: usize) -> f64 {
    (j[0].d(s).powi(2) + j[1].d(s).powi(2) + j[2].d(s).powi(2)).sqrt()
}

fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: [f64; 3], c: f64) -> [f64; 3] {
    [a[0] * c, a[1] * c, a[2] * c]
}

fn sample_points() -> Vec<TorusPoint> {
    let mut fiber = vec![(0.0, 0.0)];
    for &r in &FIBER_RINGS {
        for j in 0..FIBER_SPOKES {
            let a = TAU * j as f64 / FIBER_SPOKES as f64;
            fiber.push((r * a.cos(), r * a.sin()));
        }
    }
    (0..PHI_GRID)
        .flat_map(|i| {
            let phi = TAU * i as f64 / PHI_GRID as f64;
            fiber.iter().map(move |&(u, v)| TorusPoint { u, v, phi })
        })
        .collect()
}

fn sphere_directions() -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..DIRECTIONS)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / DIRECTIONS as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

fn chart_frame(p: &TorusPoint) -> Matrix3<f64> {
    let rho = 1.5 + 0.5 * p.u;
    let (s, c) = p.phi.sin_cos();
    Matrix3::new(0.5 * c, 0.0, -rho * s, 0.5 * s, 0.0, rho * c, 0.0, 0.5, 0.0)
}

/// Sampled suprema over `V` of the ambient derivatives of the rescaled map
/// `x ↦ λ·f(x/λ)`, for orders `1..=k`, before the safety factor. Order 1
/// uses operator norms; higher orders use `sup_{|w|=1} ‖d^s F(x)[w,…,w]‖`,
/// which equals the norm of a symmetric form.
pub fn ambient_derivative_sups(f: &PatternMap, k: usize, scale: f64) -> Result<Vec<f64>> {
    check_order(k)?;
    let points = sample_points();
    let dirs = sphere_directions();
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| {
            let q = f.apply(p);
            let df = chart_frame(&q) * f.differential(p.phi) * chart_frame(p).try_inverse().expect("chart frame is invertible");
            let mut sups = vec![df.singular_values().max()];
            if k >= 2 {
                let x = scale3(p.to_ambient(), scale);
                let mut higher = vec![0.0; k - 1];
                for w in &dirs {
                    let line = [0, 1, 2].map(|i| Jet([x[i] / scale, w[i] / scale, 0.0, 0.0]));
                    let img = embed_jets(f.apply_jet(chart_jets(line)));
                    for (j, h) in higher.iter_mut().enumerate() {
                        *h = f64::max(*h, scale * jet_norm(&img, j + 2));
                    }
                }
                sups.extend(higher);
            }
            sups
        })
        .collect();
    Ok((0..k).map(|s| per_point.iter().map(|v| v[s]).fold(0.0, f64::max)).collect())
}

/// Taylor polynomial of `t ↦ scale·fᵈ(σ(t))` in powers of `t − t0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorPoly {
    pub t0: f64,
    /// Entry `j` is the `j`-th derivative divided by `j!`.
    pub coeffs: Vec<[f64; 3]>,
}

impl TaylorPoly {
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let h = t - self.t0;
        let mut out = [0.0; 3];
        for c in self.coeffs.iter().rev() {
            for i in 0..3 {
                out[i] = out[i] * h + c[i];
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The polynomial `w ↦ P(a + (b − a)·w)` on `[0, 1]`.
    pub fn reparametrized(&self, a: f64, b: f64) -> VectorPoly {
        let h = b - a;
        let scaled: Vec<[f64; 3]> =
            self.coeffs.iter().enumerate().map(|(j, c)| scale3(*c, h.powi(j as i32))).collect();
        VectorPoly::from_coeffs(&scaled).compose_affine((a - self.t0) / h, 1.0)
    }

    /// `2·c₁(k)·M·δᵏ`, the remainder bound on an interval of length `δ`
    /// after affine reparametrization, for a normalized input curve.
    pub fn remainder_bound(&self, c1: f64, m: f64, delta: f64) -> f64 {
        2.0 * c1 * m * delta.powi(self.degree() as i32)
    }
}

fn image_jets(f: &PatternMap, sigma: &ChartSegment, depth: usize, t: f64) -> [Jet; 3] {
    let mut p = sigma.jets(t);
    for _ in 0..depth {
        p = f.apply_jet(p);
    }
    embed_jets(p)
}

fn taylor_at(f: &PatternMap, sigma: &ChartSegment, depth: usize, t0: f64, k: usize, scale: f64) -> TaylorPoly {
    let j = image_jets(f, sigma, depth, t0);
    let mut fact = 1.0;
    let coeffs = (0..=k)
        .map(|s| {
            if s > 0 {
                fact *= s as f64;
            }
            [0, 1, 2].map(|i| scale * j[i].d(s) / fact)
        })
        .collect();
    TaylorPoly { t0, coeffs }
}

/// Degree-`k` Taylor polynomial of `f∘σ` (in 3-space) at `t0`.
pub fn taylor_poly(f: &PatternMap, sigma: &ChartSegment, t0: f64, k: usize) -> Result<TaylorPoly> {
    check_order(k)?;
    Ok(taylor_at(f, sigma, 1, t0, k, 1.0))
}

/// A parameter interval on which the current image curve is normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPiece {
    pub interval: [f64; 2],
    /// Finite-difference estimate of `sup |d^s(curve∘ψ)|`, `s = 1..=k`.
    pub derivative_bounds: Vec<f64>,
}

/// What one application of the one-step cover produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCover {
    pub pieces: Vec<NormalizedPiece>,
    /// Largest measured Taylor remainder over its bound.
    pub max_remainder_ratio: f64,
    pub bisections: usize,
}

/// Scaled setting shared by every cover of one map, curve, order and radius.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverContext {
    f: PatternMap,
    sigma: ChartSegment,
    k: usize,
    epsilon: f64,
    lambda: f64,
    constants: CoverConstants,
    m_sampled: f64,
    m: f64,
    m_clamped: bool,
    epsilon0: f64,
    partition: usize,
    derivative_sups: Vec<f64>,
}

impl CoverContext {
    /// Measure the map, fix `λ = 1/ε` and check that the rescaled map has
    /// derivatives of orders `2..=k` at most 1.
    pub fn new(f: &PatternMap, sigma: &ChartSegment, k: usize, epsilon: f64) -> Result<Self> {
        let constants = CoverConstants::new(k)?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let sups: Vec<f64> = ambient_derivative_sups(f, k, 1.0)?.iter().map(|s| s * SUP_SAFETY).collect();
        let lambda0 = sups[1..]
            .iter()
            .enumerate()
            .map(|(j, &d)| d.powf(1.0 / (j + 1) as f64))
            .fold(1.0, f64::max);
        let epsilon0 = 1.0 / lambda0;
        if epsilon >= epsilon0 {
            return Err(Error::EpsilonTooLarge { epsilon, epsilon0 });
        }
        let m_sampled = sups[0];
        let m = m_sampled.max(1.0);
        let partition = ((4.0 * constants.c1_k * m).powf(1.0 / k as f64) * (1.0 - 1e-12)).ceil() as usize;
        Ok(CoverContext {
            f: f.clone(),
            sigma: *sigma,
            k,
            epsilon,
            lambda: 1.0 / epsilon,
            constants,
            m_sampled,
            m,
            m_clamped: m_sampled < 1.0,
            epsilon0,
            partition: partition.max(1),
            derivative_sups: sups,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    /// `M(f)` used in every count, at least 1.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn m_clamped(&self) -> bool {
        self.m_clamped
    }

    pub fn constants(&self) -> &CoverConstants {
        &self.constants
    }

    /// Number `N` of equal parts in the one-step partition.
    pub fn partition(&self) -> usize {
        self.partition
    }

    /// Derivative suprema of the rescaled map, orders `1..=k`.
    pub fn scaled_derivative_sups(&self) -> Vec<f64> {
        self.derivative_sups
            .iter()
            .enumerate()
            .map(|(j, d)| d * self.lambda.powi(-(j as i32)))
            .collect()
    }

    /// Per-step growth factor `μ(k)·M^{1/k}` of the count bound.
    pub fn step_factor(&self) -> f64 {
        self.constants.mu_k * self.m.powf(1.0 / self.k as f64)
    }

    /// `λ·fᵈ(σ(t₀ + w·(t₁ − t₀)))` in 3-space.
    pub fn scaled_point(&self, depth: usize, t0: f64, t1: f64, w: f64) -> [f64; 3] {
        let p = self.f.apply_n(&self.sigma.point_on(t0, t1 - t0, w), depth);
        scale3(p.to_ambient(), self.lambda)
    }

    /// Reference orbit point `λ·fᵈ(x)`.
    pub fn scaled_center(&self, x: &TorusPoint, depth: usize) -> [f64; 3] {
        scale3(self.f.apply_n(x, depth).to_ambient(), self.lambda)
    }

    /// Exact derivatives (from jets) of the reparametrized piece at `w`.
    fn piece_jets(&self, depth: usize, t0: f64, t1: f64, w: f64) -> [[f64; 3]; MAX_ORDER + 1] {
        let h = t1 - t0;
        let j = image_jets(&self.f, &self.sigma, depth, t0 + w * h);
        let mut out = [[0.0; 3]; MAX_ORDER + 1];
        for (s, o) in out.iter_mut().enumerate() {
            *o = [0, 1, 2].map(|i| self.lambda * h.powi(s as i32) * j[i].d(s));
        }
        out
    }

    /// Jet-based `sup |d^s|` of the reparametrized piece, `s = 1..=k`.
    pub fn jet_bounds(&self, depth: usize, t0: f64, t1: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.k];
        for i in 0..=CHECK_POINTS {
            let d = self.piece_jets(depth, t0, t1, i as f64 / CHECK_POINTS as f64);
            for (s, v) in b.iter_mut().enumerate() {
                *v = f64::max(*v, norm3(d[s + 1]));
            }
        }
        b
    }

    /// Finite-difference `sup |d^s|` of the reparametrized piece.
    pub fn finite_difference_bounds(&self, depth: usize, t0: f64, t1: f64) -> Vec<f64> {
        let g = |w: f64| self.scaled_point(depth, t0, t1, w);
        let mut b = vec![0.0; self.k];
        for i in 0..=CHECK_POINTS {
            let w = i as f64 / CHECK_POINTS as f64;
            for (s, v) in b.iter_mut().enumerate() {
                let h = FD_STEPS[s];
                let d = match s {
                    0 => scale3(sub3(g(w + h), g(w - h)), 0.5 / h),
                    1 => {
                        let (p, c, m) = (g(w + h), g(w), g(w - h));
                        [0, 1, 2].map(|i| (p[i] - 2.0 * c[i] + m[i]) / (h * h))
                    }
                    _ => {
                        let (p2, p1, m1, m2) = (g(w + 2.0 * h), g(w + h), g(w - h), g(w - 2.0 * h));
                        [0, 1, 2].map(|i| (p2[i] - 2.0 * p1[i] + 2.0 * m1[i] - m2[i]) / (2.0 * h * h * h))
                    }
                };
                *v = f64::max(*v, norm3(d));
            }
        }
        b
    }

    /// Verify a piece by finite differences and wrap it.
    pub fn normalized_piece(&self, depth: usize, t0: f64, t1: f64) -> Result<NormalizedPiece> {
        let derivative_bounds = self.finite_difference_bounds(depth, t0, t1);
        let bound = derivative_bounds.iter().copied().fold(0.0, f64::max);
        if bound > 1.0 + NORMALIZATION_TOL {
            return Err(Error::NormalizationFailed { t0, t1, bound });
        }
        Ok(NormalizedPiece { interval: [t0, t1], derivative_bounds })
    }
}

/// Cover `{t ∈ J : λ·f^{depth+1}(σ(t)) ∈ B(center, 1)}` by normalized pieces,
/// where `J` is a piece normalized at `depth` and `center` is in scaled
/// coordinates.
///
/// `J` is cut into `N = ⌈(4c₁M)^{1/k}⌉` equal parts. On each part the image
/// is replaced by its Taylor polynomial at the midpoint, the remainder is
/// checked against `2c₁Mδᵏ`, and the polynomial preimage of the enlarged
/// ball is covered and pulled back.
pub fn one_step_cover(ctx: &CoverContext, depth: usize, piece: [f64; 2], center: [f64; 3]) -> Result<StepCover> {
    let [t0, t1] = piece;
    let pre = ctx.jet_bounds(depth, t0, t1).into_iter().fold(0.0, f64::max);
    if pre > 1.0 + NORMALIZATION_TOL {
        return Err(Error::NormalizationFailed { t0, t1, bound: pre });
    }
    let n = ctx.partition;
    let delta = 1.0 / n as f64;
    let region = BallRegion { center, radius: ENLARGED_RADIUS, scale: ctx.lambda, pad: 0.5 };
    let alpha2 = ctx.constants.alpha2_k as usize;
    let mut out = StepCover { pieces: Vec::new(), max_remainder_ratio: 0.0, bisections: 0 };
    let at = |i: usize| if i == n { t1 } else { t0 + (t1 - t0) * i as f64 / n as f64 };
    for i in 0..n {
        let (a, b) = (at(i), at(i + 1));
        let taylor = taylor_at(&ctx.f, &ctx.sigma, depth + 1, 0.5 * (a + b), ctx.k, ctx.lambda);
        let q = taylor.reparametrized(a, b);
        let bound = taylor.remainder_bound(ctx.constants.c1_k, ctx.m, delta);
        let mut worst: f64 = 0.0;
        let mut dq = q.clone();
        let mut poly_derivs = Vec::with_capacity(ctx.k + 1);
        for _ in 0..=ctx.k {
            poly_derivs.push(dq.clone());
            dq = dq.derivative();
        }
        for j in 0..=CHECK_POINTS {
            let w = j as f64 / CHECK_POINTS as f64;
            let exact = ctx.piece_jets(depth + 1, a, b, w);
            for (s, p) in poly_derivs.iter().enumerate() {
                worst = worst.max(norm3(sub3(exact[s], p.eval(w))));
            }
        }
        if worst > bound {
            return Err(Error::TaylorRemainderExceeded { t0: a, t1: b, measured: worst, bound });
        }
        out.max_remainder_ratio = out.max_remainder_ratio.max(worst / bound);
        let cover = polynomial_ball_cover(&q, &region, ctx.k, alpha2)?;
        out.bisections += cover.bisections;
        for (w0, w1) in cover.pieces {
            let (p0, p1) = (a + (b - a) * w0, if w1 == 1.0 { b } else { a + (b - a) * w1 });
            out.pieces.push(ctx.normalized_piece(depth + 1, p0, p1)?);
        }
    }
    Ok(out)
}

/// Cover of the preimage of a dynamical ball, with the checks run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub map_id: String,
    pub k: usize,
    pub n: usize,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub center: TorusPoint,
    /// Final pieces, normalized for `λ·fⁿ∘σ`.
    pub intervals: Vec<NormalizedPiece>,
    pub count: usize,
    /// `c(σ,ε)·(μ(k)·M^{1/k})ⁿ`.
    pub bound: f64,
    pub constants: CoverConstants,
    /// Sampled `M(f)` including the safety factor.
    pub m_sampled: f64,
    /// `M` used in the bounds, at least 1.
    pub m: f64,
    pub m_clamped: bool,
    /// One-step partition size.
    pub partition: usize,
    pub level_counts: Vec<usize>,
    pub level_bounds: Vec<f64>,
    pub oracle_samples: usize,
    /// Entry `r` counts oracle parameters whose orbit shadows the reference
    /// orbit up to time `r`.
    pub oracle_members: Vec<usize>,
    /// Entry `r` counts such parameters missed by the level-`r` cover.
    pub uncovered: Vec<usize>,
    pub max_derivative_bound: f64,
    pub max_remainder_ratio: f64,
    pub bisections: usize,
    pub coverage_verified: bool,
    pub normalization_verified: bool,
    pub count_within_bound: bool,
}

fn covered(pieces: &[NormalizedPiece], t: f64) -> bool {
    let i = pieces.partition_point(|p| p.interval[0] <= t);
    (i.saturating_sub(2)..i).any(|j| pieces[j].interval[0] <= t && t <= pieces[j].interval[1])
}

/// Parameters `t_i = i/(samples − 1)` with the largest depth `r ≤ n` such
/// that `|fˢ(σ(t)) − fˢ(x)| ≤ ε` for all `s ≤ r`, or `None` when even
/// `s = 0` fails.
pub fn shadowing_depths(
    f: &PatternMap,
    sigma: &ChartSegment,
    center: &TorusPoint,
    epsilon: f64,
    n: usize,
    samples: usize,
) -> Vec<Option<usize>> {
    let orbit: Vec<[f64; 3]> = (0..=n).map(|r| f.apply_n(center, r).to_ambient()).collect();
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut p = sigma.point_at(i as f64 / (samples - 1) as f64);
            let mut depth = None;
            for (r, x) in orbit.iter().enumerate() {
                if r > 0 {
                    p = f.apply(&p);
                }
                if norm3(sub3(p.to_ambient(), *x)) > epsilon {
                    break;
                }
                depth = Some(r);
            }
            depth
        })
        .collect()
}

/// Cover `σ⁻¹(B)` for the `(n, ε)`-dynamical ball `B` about `center`.
///
/// The curve is first cut into `⌈c(σ,ε)⌉` normalized pieces with
/// `c(σ,ε) = max_s (‖d^s σ‖/ε)^{1/s}`; then [`one_step_cover`] is applied
/// `n` times, each level keeping the parameters whose next image stays
/// within `ε` of the next orbit point. The result is checked against the
/// shadowing oracle at every level.
pub fn iterated_cover(
    f: &PatternMap,
    sigma: &ChartSegment,
    center: &TorusPoint,
    epsilon: f64,
    n: usize,
    k: usize,
) -> Result<CoveringReport> {
    let ctx = CoverContext::new(f, sigma, k, epsilon)?;
    TorusPoint::new(center.u, center.v, center.phi)?;
    let c_sigma = sigma
        .ambient_derivative_sups(k)
        .iter()
        .enumerate()
        .map(|(j, &d)| (d / epsilon).powf(1.0 / (j + 1) as f64))
        .fold(0.0, f64::max);
    let n0 = (c_sigma * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut constants = ctx.constants;
    constants.c_sigma_eps = n0 as f64;

    let mut level: Vec<NormalizedPiece> = (0..n0)
        .into_par_iter()
        .map(|i| {
            let t1 = if i + 1 == n0 { 1.0 } else { (i + 1) as f64 / n0 as f64 };
            ctx.normalized_piece(0, i as f64 / n0 as f64, t1)
        })
        .collect::<Result<_>>()?;
    let mut levels = vec![level.clone()];
    let mut max_remainder_ratio: f64 = 0.0;
    let mut bisections = 0;
    for r in 0..n {
        let target = ctx.scaled_center(center, r + 1);
        let steps: Vec<StepCover> = level
            .par_iter()
            .map(|p| one_step_cover(&ctx, r, p.interval, target))
            .collect::<Result<_>>()?;
        level = Vec::new();
        for s in steps {
            max_remainder_ratio = max_remainder_ratio.max(s.max_remainder_ratio);
            bisections += s.bisections;
            level.extend(s.pieces);
        }
        levels.push(level.clone());
    }

    let depths = shadowing_depths(f, sigma, center, epsilon, n, ORACLE_SAMPLES);
    let mut oracle_members = vec![0; n + 1];
    let mut uncovered = vec![0; n + 1];
    for (i, d) in depths.iter().enumerate() {
        let Some(d) = *d else { continue };
        let t = i as f64 / (ORACLE_SAMPLES - 1) as f64;
        for r in 0..=d {
            oracle_members[r] += 1;
            if !covered(&levels[r], t) {
                uncovered[r] += 1;
            }
        }
    }

    let level_counts: Vec<usize> = levels.iter().map(Vec::len).collect();
    let step = ctx.step_factor();
    let level_bounds: Vec<f64> = (0..=n).map(|r| n0 as f64 * step.powi(r as i32)).collect();
    let max_derivative_bound = levels
        .iter()
        .flatten()
        .flat_map(|p| p.derivative_bounds.iter().copied())
        .fold(0.0, f64::max);
    let count = level.len();
    let bound = level_bounds[n];
    Ok(CoveringReport {
        map_id: f.label().to_string(),
        k,
        n,
        epsilon,
        epsilon0: ctx.epsilon0,
        center: *center,
        intervals: level,
        count,
        bound,
        constants,
        m_sampled: ctx.m_sampled,
        m: ctx.m,
        m_clamped: ctx.m_clamped,
        partition: ctx.partition,
        count_within_bound: level_counts.iter().zip(&level_bounds).all(|(&c, &b)| c as f64 <= b),
        level_counts,
        level_bounds,
        oracle_samples: ORACLE_SAMPLES,
        oracle_members,
        coverage_verified: uncovered.iter().all(|&u| u == 0),
        uncovered,
        normalization_verified: max_derivative_bound <= 1.0 + NORMALIZATION_TOL,
        max_derivative_bound,
        max_remainder_ratio,
        bisections,
    })
}

/// Parameters of [`verify_yomdin`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YomdinConfig {
    pub k: usize,
    /// Depth of the dynamical ball.
    pub n: usize,
    pub epsilon: f64,
    /// Ball center; the curve's midpoint when absent.
    pub center: Option<TorusPoint>,
    pub bowen: BowenConfig,
    pub egr_n_max: usize,
    pub tolerance: f64,
}

impl Default for YomdinConfig {
    fn default() -> Self {
        YomdinConfig {
            k: 1,
            n: 3,
            epsilon: 0.02,
            center: None,
            bowen: BowenConfig::default(),
            egr_n_max: 10,
            tolerance: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YomdinReport {
    pub cover: CoveringReport,
    pub entropy: EntropyEstimate,
    pub egr: EgrSeries,
    /// `log μ(k)`.
    pub a_k: f64,
    /// `log M / k`.
    pub m_term: f64,
    /// `h_upper + A(k) + log M / k`.
    pub growth_bound: f64,
    pub growth_pass: bool,
    /// Lengths of `λ·fⁿ∘σ` over each final piece.
    pub piece_lengths: Vec<f64>,
    pub max_piece_length: f64,
    pub total_piece_length: f64,
    /// Length of `λ·fⁿ∘σ` over runs of oracle members, as a polyline.
    pub preimage_length: f64,
    pub length_pass: bool,
    pub all_pass: bool,
}

/// Length of the scaled image over a piece, by Simpson's rule on the speed.
fn piece_length(ctx: &CoverContext, depth: usize, p: &NormalizedPiece) -> f64 {
    let [t0, t1] = p.interval;
    let speed = |w: f64| norm3(ctx.piece_jets(depth, t0, t1, w)[1]);
    let h = 1.0 / LENGTH_CELLS as f64;
    (0..LENGTH_CELLS)
        .map(|i| {
            let a = i as f64 * h;
            h / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * h) + speed(a + h))
        })
        .sum()
}

/// Check the growth bound `egr ≤ h + log μ(k) + log M / k` and the length
/// bound behind it: every final piece has length at most 1, so their total
/// is at most the count and dominates the length over the ball's preimage.
pub fn verify_yomdin(f: &PatternMap, sigma: &ChartSegment, cfg: &YomdinConfig) -> Result<YomdinReport> {
    let center = cfg.center.unwrap_or_else(|| sigma.point_at(0.5));
    let cover = iterated_cover(f, sigma, &center, cfg.epsilon, cfg.n, cfg.k)?;
    let ctx = CoverContext::new(f, sigma, cfg.k, cfg.epsilon)?;
    let entropy = bowen_entropy(f, &cfg.bowen)?;
    let egr = length_egr(f, &sigma.sampled(256)?, cfg.egr_n_max)?;
    let a_k = cover.constants.log_mu();
    let m_term = cover.m.ln() / cfg.k as f64;
    let growth_bound = entropy.h_upper + a_k + m_term;

    let piece_lengths: Vec<f64> = cover.intervals.par_iter().map(|p| piece_length(&ctx, cfg.n, p)).collect();
    let max_piece_length = piece_lengths.iter().copied().fold(0.0, f64::max);
    let total_piece_length: f64 = piece_lengths.iter().sum();
    let depths = shadowing_depths(f, sigma, &center, cfg.epsilon, cfg.n, ORACLE_SAMPLES);
    let step = 1.0 / (ORACLE_SAMPLES - 1) as f64;
    let mut preimage_length = 0.0;
    for i in 1..depths.len() {
        if depths[i] == Some(cfg.n) && depths[i - 1] == Some(cfg.n) {
            let a = ctx.scaled_point(cfg.n, (i - 1) as f64 * step, i as f64 * step, 0.0);
            let b = ctx.scaled_point(cfg.n, (i - 1) as f64 * step, i as f64 * step, 1.0);
            preimage_length += norm3(sub3(b, a));
        }
    }
    let length_pass = max_piece_length <= 1.0 + NORMALIZATION_TOL
        && total_piece_length <= cover.count as f64 + NORMALIZATION_TOL
        && preimage_length <= total_piece_length + NORMALIZATION_TOL;
    let growth_pass = egr.egr <= growth_bound + cfg.tolerance;
    let all_pass = growth_pass
        && length_pass
        && cover.coverage_verified
        && cover.normalization_verified
        && cover.count_within_bound;
    Ok(YomdinReport {
        cover,
        entropy,
        egr,
        a_k,
        m_term,
        growth_bound,
        growth_pass,
        piece_lengths,
        max_piece_length,
        total_piece_length,
        preimage_length,
        length_pass,
        all_pass,
    })
}
