//! Pattern maps: skew-product self-maps of `V`,
//!
//! ```text
//! (w, φ) ↦ (λ·w + γ(φ), a(φ)),    γ(t) = A·(cos t, sin t),
//! ```
//!
//! together with curve iteration, embedding checks and derivative sizes.
//!
//! A map is stored as a list of elementary stages applied in order. Powers
//! and composites just concatenate stage lists, so every map is again a skew
//! product whose contraction is the product of the stage factors.

use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist3, SampledCurve, SweepAccumulator, TorusPoint};
use crate::jet::Jet;

pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_AMPLITUDE: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_ANGULAR_SAMPLES: usize = 1024;
/// Sample cap for materialized curves.
pub const DEFAULT_BUDGET: usize = 1 << 20;
/// Sample cap for streamed curves, which are never stored.
pub const DEFAULT_STREAM_BUDGET: usize = 1 << 28;
/// Parameter grid used by [`sup_derivative`].
pub const SUP_GRID: usize = 4096;

const MIN_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Lift {
    Linear(i64),
    Whitehead,
    ExtraWinding,
}

impl Lift {
    /// `[a, a', a'', a''']` at `t`, given `(sin t, cos t)`.
    #[inline]
    fn derivs(self, t: f64, s: f64, c: f64) -> [f64; 4] {
        match self {
            Lift::Linear(n) => {
                let n = n as f64;
                [n * t, n, 0.0, 0.0]
            }
            Lift::Whitehead => [PI * (1.0 - c), PI * s, PI * c, -PI * s],
            Lift::ExtraWinding => [t + TAU * (1.0 - c), 1.0 + TAU * s, TAU * c, -TAU * s],
        }
    }

    #[inline]
    fn value_slope(self, t: f64, s: f64, c: f64) -> (f64, f64) {
        match self {
            Lift::Linear(n) => (n as f64 * t, n as f64),
            Lift::Whitehead => (PI * (1.0 - c), PI * s),
            Lift::ExtraWinding => (t + TAU * (1.0 - c), 1.0 + TAU * s),
        }
    }

    fn degree(self) -> i64 {
        match self {
            Lift::Linear(n) => n,
            Lift::Whitehead => 0,
            Lift::ExtraWinding => 1,
        }
    }

    fn monotone(self) -> bool {
        matches!(self, Lift::Linear(n) if n != 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Stage {
    lambda: f64,
    amplitude: f64,
    lift: Lift,
    /// Externally certified lower bound on the index of this stage's image
    /// core, zero if none.
    certificate: u64,
}

impl Stage {
    #[inline]
    fn apply(&self, p: TorusPoint) -> TorusPoint {
        let (s, c) = p.phi.sin_cos();
        TorusPoint {
            u: self.lambda * p.u + self.amplitude * c,
            v: self.lambda * p.v + self.amplitude * s,
            phi: self.lift.value_slope(p.phi, s, c).0,
        }
    }

    #[inline]
    fn apply_tangent(&self, p: TorusPoint, dp: [f64; 3]) -> (TorusPoint, [f64; 3]) {
        let (s, c) = p.phi.sin_cos();
        let (a, da) = self.lift.value_slope(p.phi, s, c);
        let q = TorusPoint {
            u: self.lambda * p.u + self.amplitude * c,
            v: self.lambda * p.v + self.amplitude * s,
            phi: a,
        };
        let dq = [
            self.lambda * dp[0] - self.amplitude * s * dp[2],
            self.lambda * dp[1] + self.amplitude * c * dp[2],
            da * dp[2],
        ];
        (q, dq)
    }

    fn apply_jet(&self, p: [Jet; 3]) -> [Jet; 3] {
        let t = p[2].value();
        let (s, c) = t.sin_cos();
        let (cj, sj) = p[2].cos_sin();
        [
            p[0] * self.lambda + cj * self.amplitude,
            p[1] * self.lambda + sj * self.amplitude,
            p[2].compose(self.lift.derivs(t, s, c)),
        ]
    }
}

/// Declarative description of a pattern map, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `a(t) = n·t`.
    Solenoid {
        n: i64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// `a(t) = π(1 − cos t)`, net degree 0.
    Whitehead {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        /// Externally certified: the image core cannot be pushed off every
        /// meridional disk.
        #[serde(default = "default_true")]
        linked: bool,
    },
    /// `a(t) = t + 2π(1 − cos t)`, net degree 1.
    ExtraWinding {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        /// Externally certified lower bound on the index of the image core.
        #[serde(default = "default_extra_certificate")]
        certified_index: u64,
    },
    /// `a(t) = t`, `γ ≡ 0`.
    Identity {
        #[serde(default = "default_identity_lambda")]
        lambda: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    Power { base: Box<MapSpec>, r: u32 },
    /// Applied in list order, first element first.
    Composite { maps: Vec<MapSpec> },
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_amplitude() -> f64 {
    DEFAULT_AMPLITUDE
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_identity_lambda() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_extra_certificate() -> u64 {
    3
}

/// Tagged-enum errors carry no position; point at the offending key instead.
fn with_line(text: &str, msg: String) -> String {
    if msg.contains("line") {
        return msg;
    }
    let key = msg.split('`').nth(1).unwrap_or("");
    let line = text.lines().position(|l| {
        let l = l.trim_start().trim_start_matches(['{', ',', ' ']).trim_start_matches('"');
        !key.is_empty() && l.starts_with(key) && l[key.len()..].trim_start_matches('"').trim_start().starts_with(['=', ':'])
    });
    match line {
        Some(i) => format!("{msg} at line {}", i + 1),
        None => msg,
    }
}

/// Parse a config document: TOML, or JSON when the text starts with `{`.
/// Errors name the line of the offending key where it can be found.
pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let parsed = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|msg| Error::Config(with_line(text, msg)))
}

impl MapSpec {
    pub fn parse(text: &str) -> Result<Self> {
        parse_config(text)
    }

    pub fn build(&self) -> Result<PatternMap> {
        PatternMap::from_spec(self)
    }
}

/// A skew-product self-map of `V`, immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternMap {
    label: String,
    stages: Vec<Stage>,
    margin: f64,
    root: Option<(Box<PatternMap>, u32)>,
}

fn check_leaf(lambda: f64, amplitude: f64, margin: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidMap(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidMap(format!("amplitude must be finite and non-negative, got {amplitude}")));
    }
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidMap(format!("margin must lie in (0, 1), got {margin}")));
    }
    Ok(())
}

impl PatternMap {
    /// Build a map. Parameter ranges are validated here; whether the map
    /// actually embeds `V` into itself is left to [`check_embedding`].
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let leaf = |label: String, lambda, amplitude, margin, lift, certificate| -> Result<Self> {
            check_leaf(lambda, amplitude, margin)?;
            Ok(PatternMap {
                label,
                stages: vec![Stage { lambda, amplitude, lift, certificate }],
                margin,
                root: None,
            })
        };
        match *spec {
            MapSpec::Solenoid { n, lambda, amplitude, margin } => {
                if n == 0 {
                    return Err(Error::InvalidMap("solenoid degree must be non-zero".into()));
                }
                leaf(format!("Solenoid({n})"), lambda, amplitude, margin, Lift::Linear(n), 0)
            }
            MapSpec::Whitehead { lambda, amplitude, margin, linked } => leaf(
                "Whitehead".into(),
                lambda,
                amplitude,
                margin,
                Lift::Whitehead,
                if linked { 2 } else { 0 },
            ),
            MapSpec::ExtraWinding { lambda, amplitude, margin, certified_index } => leaf(
                "ExtraWinding".into(),
                lambda,
                amplitude,
                margin,
                Lift::ExtraWinding,
                certified_index,
            ),
            MapSpec::Identity { lambda, margin } => {
                leaf("Identity".into(), lambda, 0.0, margin, Lift::Linear(1), 0)
            }
            MapSpec::Power { ref base, r } => {
                if r == 0 {
                    return Err(Error::InvalidMap("power must be at least 1".into()));
                }
                Ok(PatternMap::from_spec(base)?.power(r))
            }
            MapSpec::Composite { ref maps } => {
                let mut it = maps.iter();
                let first = it
                    .next()
                    .ok_or_else(|| Error::InvalidMap("composite needs at least one map".into()))?;
                let mut f = PatternMap::from_spec(first)?;
                for g in it {
                    f = f.then(&PatternMap::from_spec(g)?);
                }
                Ok(f)
            }
        }
    }

    pub fn solenoid(n: i64, lambda: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::Solenoid {
            n,
            lambda,
            amplitude: DEFAULT_AMPLITUDE,
            margin: DEFAULT_MARGIN,
        })
    }

    pub fn whitehead(lambda: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::Whitehead {
            lambda,
            amplitude: DEFAULT_AMPLITUDE,
            margin: DEFAULT_MARGIN,
            linked: true,
        })
    }

    pub fn extra_winding(lambda: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::ExtraWinding {
            lambda,
            amplitude: DEFAULT_AMPLITUDE,
            margin: DEFAULT_MARGIN,
            certified_index: 3,
        })
    }

    /// `(w, φ) ↦ (w/2, φ)`.
    pub fn identity() -> Self {
        Self::from_spec(&MapSpec::Identity { lambda: 0.5, margin: DEFAULT_MARGIN })
            .expect("identity parameters are valid")
    }

    /// The `r`-fold iterate.
    pub fn power(&self, r: u32) -> Self {
        assert!(r >= 1);
        if r == 1 {
            return self.clone();
        }
        let mut stages = Vec::with_capacity(self.stages.len() * r as usize);
        for _ in 0..r {
            stages.extend_from_slice(&self.stages);
        }
        PatternMap {
            label: format!("Power({}, {r})", self.label),
            stages,
            margin: self.margin,
            root: Some((Box::new(self.clone()), r)),
        }
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &PatternMap) -> Self {
        let mut stages = self.stages.clone();
        stages.extend_from_slice(&next.stages);
        let name = |f: &PatternMap| match f.label.strip_prefix("Composite[") {
            Some(inner) => inner.trim_end_matches(']').to_string(),
            None => f.label.clone(),
        };
        PatternMap {
            label: format!("Composite[{}, {}]", name(self), name(next)),
            stages,
            margin: self.margin.min(next.margin),
            root: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Fiber contraction factor of the whole map.
    pub fn contraction(&self) -> f64 {
        self.stages.iter().map(|s| s.lambda).product()
    }

    /// Net angular degree `d` with `a(t + 2π) = a(t) + 2πd`.
    pub fn degree(&self) -> i64 {
        self.stages.iter().map(|s| s.lift.degree()).product()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Lower bound on the index of `f(core)` in `V` from the stage
    /// certificates, using that indices multiply under composition; zero
    /// when some stage has neither a certificate nor a non-zero degree.
    pub fn certificate(&self) -> u64 {
        self.stages
            .iter()
            .map(|s| s.certificate.max(s.lift.degree().unsigned_abs()))
            .try_fold(1u64, |acc, b| (b > 0).then(|| acc.saturating_mul(b)))
            .unwrap_or(0)
    }

    /// The elementary maps this one is composed of, in application order.
    pub fn factors(&self) -> Vec<PatternMap> {
        self.stages
            .iter()
            .map(|s| PatternMap {
                label: format!("{}#stage", self.label),
                stages: vec![*s],
                margin: self.margin,
                root: None,
            })
            .collect()
    }

    /// True when some stage has a folding lift. Such maps are pattern
    /// surrogates: fiber disks over a fold overlap, so they are never
    /// injective on all of `V`.
    pub fn is_surrogate(&self) -> bool {
        self.stages.iter().any(|s| !s.lift.monotone())
    }

    /// For a map built as `Power(base, r)`, the base and exponent.
    pub fn root(&self) -> Option<(&PatternMap, u32)> {
        self.root.as_ref().map(|(b, r)| (b.as_ref(), *r))
    }

    #[inline]
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        self.stages.iter().fold(*p, |q, s| s.apply(q))
    }

    pub fn apply_n(&self, p: &TorusPoint, n: usize) -> TorusPoint {
        (0..n).fold(*p, |q, _| self.apply(&q))
    }

    /// Image of a point together with the pushed-forward chart tangent.
    #[inline]
    pub fn apply_tangent(&self, p: &TorusPoint, dp: [f64; 3]) -> (TorusPoint, [f64; 3]) {
        self.stages.iter().fold((*p, dp), |(q, dq), s| s.apply_tangent(q, dq))
    }

    /// Image of a curve germ given by jets of its chart coordinates.
    pub fn apply_jet(&self, p: [Jet; 3]) -> [Jet; 3] {
        self.stages.iter().fold(p, |q, s| s.apply_jet(q))
    }

    /// Jets at `t` of the lift `a` and of the offset `γ = (γ_u, γ_v)`.
    pub fn pattern_jets(&self, t: f64) -> (Jet, Jet, Jet) {
        let [u, v, a] = self.apply_jet([Jet::constant(0.0), Jet::constant(0.0), Jet::variable(t)]);
        (a, u, v)
    }

    /// Chart-level differential at angle `phi` (it does not depend on the
    /// fiber coordinate).
    pub fn differential(&self, phi: f64) -> Matrix3<f64> {
        let (a, gu, gv) = self.pattern_jets(phi);
        differential_from_jets(self.contraction(), a, gu, gv)
    }
}

fn differential_from_jets(lambda: f64, a: Jet, gu: Jet, gv: Jet) -> Matrix3<f64> {
    Matrix3::new(lambda, 0.0, gu.d(1), 0.0, lambda, gv.d(1), 0.0, 0.0, a.d(1))
}

fn op_norm(m: &Matrix3<f64>) -> f64 {
    m.singular_values().max()
}

/// Sample angle `2πi/n`.
fn grid_angle(i: usize, n: usize) -> f64 {
    TAU * i as f64 / n as f64
}

/// Distance on the circle of parameters.
fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// What [`check_embedding`] or [`check_core_embedding`] verified, at the
/// stated angular resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub angular_samples: usize,
    /// Smallest `1 − margin/2 − (|γ| + λ)` seen; non-negative when trapped.
    pub trapping_slack: f64,
    /// Smallest gap between disjoint image fiber disks, or for the core
    /// check the smallest chord-to-parameter ratio.
    pub min_separation: f64,
    /// `"fiber_disks"` or `"core_curve"`.
    pub kind: String,
}

/// Solve `a(t) ≡ a(t1) (mod 2π)` for `t ≠ t1` on a grid with `n` cells.
fn fiber_partners(f: &PatternMap, t1: f64, lifts: &[f64], n: usize, mut visit: impl FnMut(f64)) {
    let target = f.apply(&TorusPoint::core(t1)).phi;
    let excl = 1e-9 * TAU / n as f64;
    for j in 0..n {
        let (g0, g1) = (lifts[j] - target, lifts[j + 1] - target);
        let (lo, hi) = if g0 < g1 { (g0, g1) } else { (g1, g0) };
        let k0 = (lo / TAU).ceil() as i64;
        let k1 = (hi / TAU).floor() as i64;
        for k in k0..=k1 {
            let shift = TAU * k as f64;
            let g = |t: f64| f.apply(&TorusPoint::core(t)).phi - target - shift;
            let (mut a, mut b) = (grid_angle(j, n), grid_angle(j + 1, n));
            let (mut ga, gb) = (g0 - shift, g1 - shift);
            let root = if ga == 0.0 {
                a
            } else if gb == 0.0 {
                b
            } else {
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    let gm = g(m);
                    if (gm < 0.0) == (ga < 0.0) {
                        a = m;
                        ga = gm;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            };
            if circle_dist(root, t1) > excl {
                visit(root);
            }
        }
    }
}

fn check_trapping(f: &PatternMap, n: usize) -> Result<f64> {
    let lambda = f.contraction();
    let mut slack = f64::INFINITY;
    for i in 0..n {
        let t = grid_angle(i, n);
        let p = f.apply(&TorusPoint::core(t));
        let s = 1.0 - 0.5 * f.margin - (p.fiber_norm_sq().sqrt() + lambda);
        if s < 0.0 {
            return Err(Error::NotEmbedding {
                reason: "image fiber disk leaves the unit disk".into(),
                t1: t,
                t2: t,
                separation: s,
            });
        }
        slack = slack.min(s);
    }
    Ok(slack)
}

fn sample_lifts(f: &PatternMap, n: usize) -> Vec<f64> {
    let mut lifts: Vec<f64> = (0..n).map(|i| f.apply(&TorusPoint::core(grid_angle(i, n))).phi).collect();
    lifts.push(lifts[0] + TAU * f.degree() as f64);
    lifts
}

fn check_samples(n: usize) -> Result<()> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 angular samples, got {n}")));
    }
    Ok(())
}

/// Sampled check that `f` embeds `V` into its interior: image fiber disks
/// stay inside the unit disk with slack `margin/2`, and fiber disks over
/// parameters with equal image angle are disjoint.
pub fn check_embedding(f: &PatternMap, angular_samples: usize) -> Result<EmbeddingCheck> {
    check_samples(angular_samples)?;
    let n = angular_samples;
    let trapping_slack = check_trapping(f, n)?;
    let lambda = f.contraction();
    let lifts = sample_lifts(f, n);
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let t1 = grid_angle(i, n);
            let p1 = f.apply(&TorusPoint::core(t1));
            let mut worst = (f64::INFINITY, t1, t1);
            fiber_partners(f, t1, &lifts, n, |t2| {
                let p2 = f.apply(&TorusPoint::core(t2));
                let sep = (p1.u - p2.u).hypot(p1.v - p2.v) - 2.0 * lambda;
                if sep < worst.0 {
                    worst = (sep, t1, t2);
                }
            });
            worst
        })
        .reduce(|| (f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    if worst.0 <= 0.0 {
        return Err(Error::NotEmbedding {
            reason: "image fiber disks over distinct parameters intersect".into(),
            t1: worst.1,
            t2: worst.2,
            separation: worst.0,
        });
    }
    Ok(EmbeddingCheck {
        angular_samples: n,
        trapping_slack,
        min_separation: worst.0,
        kind: "fiber_disks".into(),
    })
}

/// Weaker check for surrogate maps: trapping as in [`check_embedding`], and
/// the image of the core is an embedded curve, measured by the smallest
/// ratio of chord length to parameter distance between partners.
pub fn check_core_embedding(f: &PatternMap, angular_samples: usize) -> Result<EmbeddingCheck> {
    check_samples(angular_samples)?;
    let n = angular_samples;
    let trapping_slack = check_trapping(f, n)?;
    let lifts = sample_lifts(f, n);
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let t1 = grid_angle(i, n);
            let p1 = f.apply(&TorusPoint::core(t1));
            let mut worst = (f64::INFINITY, t1, t1);
            fiber_partners(f, t1, &lifts, n, |t2| {
                let p2 = f.apply(&TorusPoint::core(t2));
                let ratio = (p1.u - p2.u).hypot(p1.v - p2.v) / circle_dist(t1, t2);
                if ratio < worst.0 {
                    worst = (ratio, t1, t2);
                }
            });
            worst
        })
        .reduce(|| (f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    if worst.0 <= 1e-9 {
        return Err(Error::NotEmbedding {
            reason: "image of the core meets itself".into(),
            t1: worst.1,
            t2: worst.2,
            separation: worst.0,
        });
    }
    Ok(EmbeddingCheck {
        angular_samples: n,
        trapping_slack,
        min_separation: worst.0,
        kind: "core_curve".into(),
    })
}

/// [`check_embedding`] for genuine skew-product embeddings,
/// [`check_core_embedding`] for surrogates.
pub fn verify_embedding(f: &PatternMap, angular_samples: usize) -> Result<EmbeddingCheck> {
    if f.is_surrogate() {
        check_core_embedding(f, angular_samples)
    } else {
        check_embedding(f, angular_samples)
    }
}

/// Sampled supremum with a one-sided error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    /// The true supremum is at most `value + error_bound`, assuming the
    /// sampled Lipschitz constant of the norm is not exceeded between samples.
    pub error_bound: f64,
    pub argmax: f64,
}

/// Supremum over `V` of the operator norm of the chart-level differential.
pub fn sup_derivative(f: &PatternMap) -> SupEstimate {
    let n = SUP_GRID;
    let h = TAU / n as f64;
    let lambda = f.contraction();
    let samples: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (a, gu, gv) = f.pattern_jets(grid_angle(i, n));
            let norm = op_norm(&differential_from_jets(lambda, a, gu, gv));
            let slope = (a.d(2).powi(2) + gu.d(2).powi(2) + gv.d(2).powi(2)).sqrt();
            (norm, slope)
        })
        .collect();
    let lipschitz = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let grid_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let norm_at = |t: f64| op_norm(&f.differential(t));

    // golden-section refinement around the largest local maxima
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let (l, r) = (samples[(i + n - 1) % n].0, samples[(i + 1) % n].0);
            samples[i].0 >= l && samples[i].0 >= r
        })
        .collect();
    peaks.sort_by(|&a, &b| samples[b].0.total_cmp(&samples[a].0));
    peaks.truncate(8);
    let mut best = (grid_max, 0.0);
    for &i in &peaks {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (grid_angle(i, n) - h, grid_angle(i, n) + h);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (norm_at(x1), norm_at(x2));
        for _ in 0..50 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = norm_at(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = norm_at(x1);
            }
        }
        for (x, fx) in [(x1, f1), (x2, f2), (grid_angle(i, n), samples[i].0)] {
            if fx > best.0 {
                best = (fx, x.rem_euclid(TAU));
            }
        }
    }
    if best.1 == 0.0 && !peaks.is_empty() {
        best.1 = grid_angle(peaks[0], n);
    }
    SupEstimate {
        value: best.0,
        error_bound: (grid_max + 0.5 * lipschitz * h - best.0).max(0.0),
        argmax: best.1,
    }
}

/// Least-squares line through `(x, y)` pairs: `(slope, rms residual)`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

/// Growth exponent of `M(fⁿ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// `M(fⁿ)` for `n = 1..=n_max`.
    pub sups: Vec<f64>,
    pub slope: f64,
    pub residual: f64,
}

pub fn derivative_growth(f: &PatternMap, n_max: usize) -> Result<GrowthFit> {
    if n_max < 4 {
        return Err(Error::InvalidArgument(format!("n_max must be at least 4, got {n_max}")));
    }
    let sups: Vec<f64> = (1..=n_max).map(|n| sup_derivative(&f.power(n as u32)).value).collect();
    let xs: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let ys: Vec<f64> = sups.iter().map(|m| m.ln()).collect();
    let (slope, residual) = fit_slope(&xs, &ys);
    Ok(GrowthFit { sups, slope, residual })
}

/// Summary of a map's differential size and embedding checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map_id: String,
    pub m: f64,
    pub m_error: f64,
    pub r_estimate: f64,
    pub fit_residual: f64,
    pub injective_ok: bool,
    pub trapped_ok: bool,
    /// The map folds, so injectivity is checked on the core only.
    pub surrogate: bool,
    pub angular_samples: usize,
}

pub fn map_report(f: &PatternMap, angular_samples: usize, n_max: usize) -> Result<MapReport> {
    check_samples(angular_samples)?;
    let sup = sup_derivative(f);
    let growth = derivative_growth(f, n_max)?;
    let trapped_ok = check_trapping(f, angular_samples).is_ok();
    let injective_ok = match verify_embedding(f, angular_samples) {
        Ok(_) => true,
        Err(Error::NotEmbedding { .. }) => false,
        Err(e) => return Err(e),
    };
    Ok(MapReport {
        map_id: f.label.clone(),
        m: sup.value,
        m_error: sup.error_bound,
        r_estimate: growth.slope,
        fit_residual: growth.residual,
        injective_ok,
        trapped_ok,
        surrogate: f.is_surrogate(),
        angular_samples,
    })
}

/// Subdivision rule for [`iterate_curve`]: a stretch of the image is
/// accepted once its lift gap, fiber gap and predicted lift change from the
/// endpoint slopes are all small.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    pub max_lift_gap: f64,
    pub max_fiber_gap: f64,
    pub budget: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement { max_lift_gap: PI / 8.0, max_fiber_gap: 0.125, budget: DEFAULT_BUDGET }
    }
}

impl Refinement {
    pub fn with_budget(budget: usize) -> Self {
        Refinement { budget, ..Self::default() }
    }
}

struct Walker<'a> {
    f: &'a PatternMap,
    n: usize,
    rule: Refinement,
    used: &'a AtomicUsize,
}

#[derive(Clone, Copy)]
struct Image {
    p: TorusPoint,
    slope: f64,
}

impl Walker<'_> {
    #[inline]
    fn eval(&self, p: TorusPoint, dp: [f64; 3]) -> Image {
        let (mut q, mut dq) = (p, dp);
        for _ in 0..self.n {
            (q, dq) = self.f.apply_tangent(&q, dq);
        }
        Image { p: q, slope: dq[2] }
    }

    #[inline]
    fn accept(&self, a: &Image, b: &Image, ds: f64) -> bool {
        let r = &self.rule;
        ds < MIN_STEP
            || ((b.p.phi - a.p.phi).abs() < r.max_lift_gap
                && (b.p.u - a.p.u).hypot(b.p.v - a.p.v) < r.max_fiber_gap
                && a.slope.abs().max(b.slope.abs()) * ds < 2.0 * r.max_lift_gap)
    }

    /// Walk the image of the source segment `a → b`, calling `emit` on every
    /// image sample after `start` (the image of `a`). Returns the image of `b`.
    fn segment(&self, a: TorusPoint, b: TorusPoint, start: Image, emit: &mut impl FnMut(&TorusPoint)) -> Result<Image> {
        let d = [b.u - a.u, b.v - a.v, b.phi - a.phi];
        let at = |s: f64| TorusPoint { u: a.u + s * d[0], v: a.v + s * d[1], phi: a.phi + s * d[2] };
        let mut stack = vec![(1.0, self.eval(b, d))];
        let mut cur = (0.0, start);
        let mut count = 0usize;
        while let Some(&(s1, img1)) = stack.last() {
            if self.accept(&cur.1, &img1, s1 - cur.0) {
                emit(&img1.p);
                count += 1;
                cur = (s1, img1);
                stack.pop();
            } else {
                let sm = 0.5 * (cur.0 + s1);
                stack.push((sm, self.eval(at(sm), d)));
            }
            if count >= 4096 {
                self.charge(count)?;
                count = 0;
            }
        }
        self.charge(count)?;
        Ok(cur.1)
    }

    fn charge(&self, k: usize) -> Result<()> {
        let total = self.used.fetch_add(k, Ordering::Relaxed) + k;
        if total > self.rule.budget {
            return Err(Error::RefinementBudgetExceeded { budget: self.rule.budget });
        }
        Ok(())
    }

    fn start(&self, c: &SampledCurve, i: usize) -> Image {
        let pts = c.points();
        let d = [pts[i + 1].u - pts[i].u, pts[i + 1].v - pts[i].v, pts[i + 1].phi - pts[i].phi];
        self.eval(pts[i], d)
    }
}

/// Apply `fⁿ` to a sampled curve, subdividing source segments until the
/// image is finely sampled.
pub fn iterate_curve(f: &PatternMap, c: &SampledCurve, n: usize) -> Result<SampledCurve> {
    iterate_curve_with(f, c, n, Refinement::default())
}

pub fn iterate_curve_with(f: &PatternMap, c: &SampledCurve, n: usize, rule: Refinement) -> Result<SampledCurve> {
    if n == 0 {
        return Ok(c.clone());
    }
    let used = AtomicUsize::new(1);
    let w = Walker { f, n, rule, used: &used };
    let pts = c.points();
    let pieces: Vec<Vec<TorusPoint>> = (0..pts.len() - 1)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            w.segment(pts[i], pts[i + 1], w.start(c, i), &mut |p| out.push(*p))?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(used.load(Ordering::Relaxed));
    points.push(w.start(c, 0).p);
    pieces.into_iter().for_each(|p| points.extend(p));
    if c.is_closed() {
        snap_closure(&mut points);
    }
    SampledCurve::from_lifted(points, c.is_closed())
}

fn snap_closure(points: &mut [TorusPoint]) {
    let first = points[0];
    let last = points.len() - 1;
    let turns = ((points[last].phi - first.phi) / TAU).round();
    points[last] = TorusPoint { u: first.u, v: first.v, phi: first.phi + TAU * turns };
}

/// Length and radial crossing data of `fⁿ ∘ c`, computed without storing
/// the image.
#[derive(Clone, Debug)]
pub struct IterateStats {
    pub length: f64,
    pub sweep: SweepAccumulator,
}

impl IterateStats {
    pub fn samples(&self) -> usize {
        self.sweep.samples()
    }
}

/// Streaming counterpart of [`iterate_curve`] followed by length and sweep;
/// it visits exactly the samples [`iterate_curve`] would produce.
pub fn stream_iterate(f: &PatternMap, c: &SampledCurve, n: usize, budget: usize) -> Result<IterateStats> {
    let used = AtomicUsize::new(1);
    let w = Walker { f, n, rule: Refinement::with_budget(budget), used: &used };
    let pts = c.points();
    let closed = c.is_closed();
    let last_seg = pts.len() - 2;
    let pieces: Vec<IterateStats> = (0..pts.len() - 1)
        .into_par_iter()
        .map(|i| {
            let start = if n == 0 {
                Image { p: pts[i], slope: 0.0 }
            } else {
                w.start(c, i)
            };
            let mut sweep = SweepAccumulator::new();
            sweep.push(start.p.phi);
            let mut length = 0.0;
            let mut prev = start.p.to_ambient();
            let mut visit = |p: &TorusPoint| {
                let x = p.to_ambient();
                length += dist3(prev, x);
                prev = x;
                sweep.push(p.phi);
            };
            if n == 0 {
                visit(&pts[i + 1]);
            } else if closed && i == last_seg {
                // the final sample is snapped onto the start, as in iterate_curve
                let mut buf = Vec::new();
                w.segment(pts[i], pts[i + 1], start, &mut |p| buf.push(*p))?;
                let first = w.start(c, 0).p;
                let k = buf.len() - 1;
                let turns = ((buf[k].phi - first.phi) / TAU).round();
                buf[k] = TorusPoint { u: first.u, v: first.v, phi: first.phi + TAU * turns };
                buf.iter().for_each(&mut visit);
            } else {
                w.segment(pts[i], pts[i + 1], start, &mut visit)?;
            }
            Ok(IterateStats { length, sweep })
        })
        .collect::<Result<_>>()?;
    let mut it = pieces.into_iter();
    let mut total = it.next().expect("curve has a segment");
    for p in it {
        total.length += p.length;
        total.sweep.merge(&p.sweep);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_length, geometric_index_bounds, winding_number};
    use approx::assert_abs_diff_eq;

    fn close(p: TorusPoint, q: (f64, f64, f64)) {
        assert_abs_diff_eq!(p.u, q.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.v, q.1, epsilon = 1e-14);
        assert_abs_diff_eq!(p.phi, q.2, epsilon = 1e-14);
    }

    #[test]
    fn solenoid_images_of_core_points() {
        let f = PatternMap::solenoid(2, 0.1).unwrap();
        close(f.apply(&TorusPoint::core(0.0)), (0.5, 0.0, 0.0));
        close(f.apply(&TorusPoint::core(PI)), (-0.5, 0.0, TAU));
    }

    #[test]
    fn identity_halves_the_fiber() {
        let f = PatternMap::identity();
        close(f.apply(&TorusPoint { u: 0.4, v: -0.2, phi: 1.3 }), (0.2, -0.1, 1.3));
    }

    #[test]
    fn composite_applies_first_map_first() {
        let f = PatternMap::solenoid(2, 0.1).unwrap();
        let g = PatternMap::solenoid(3, 0.2).unwrap();
        let p = TorusPoint { u: 0.1, v: 0.2, phi: 0.7 };
        let gf = f.then(&g);
        assert_eq!(gf.apply(&p), g.apply(&f.apply(&p)));
        assert_eq!(gf.degree(), 6);
        assert_abs_diff_eq!(gf.contraction(), 0.02, epsilon = 1e-16);
        assert_eq!(gf.label(), "Composite[Solenoid(2), Solenoid(3)]");
    }

    #[test]
    fn tangent_and_jets_match_finite_differences() {
        let f = PatternMap::extra_winding(0.2).unwrap().then(&PatternMap::whitehead(0.3).unwrap());
        let curve = |s: f64| TorusPoint { u: 0.3 * s.cos(), v: 0.2 * s, phi: 1.0 + 2.0 * s };
        let s0 = 0.4;
        let h = 1e-5;
        let (q, dq) = f.apply_tangent(&curve(s0), [-0.3 * s0.sin(), 0.2, 2.0]);
        let (qp, qm) = (f.apply(&curve(s0 + h)), f.apply(&curve(s0 - h)));
        let fd = [(qp.u - qm.u) / (2.0 * h), (qp.v - qm.v) / (2.0 * h), (qp.phi - qm.phi) / (2.0 * h)];
        for k in 0..3 {
            assert!((dq[k] - fd[k]).abs() < 1e-5 * (1.0 + fd[k].abs()), "{k}: {} vs {}", dq[k], fd[k]);
        }
        let s = Jet::variable(s0);
        let [ju, jv, jphi] = f.apply_jet([s.cos() * 0.3, s * 0.2, s * 2.0 + 1.0]);
        assert_abs_diff_eq!(ju.value(), q.u, epsilon = 1e-14);
        assert_abs_diff_eq!(jv.d(1), dq[1], epsilon = 1e-12);
        assert_abs_diff_eq!(jphi.d(1), dq[2], epsilon = 1e-10);
    }

    #[test]
    fn embedding_examples() {
        let ok = check_embedding(&PatternMap::solenoid(2, 0.1).unwrap(), 1024).unwrap();
        // strands over t and t + π sit at distance 1, radius 0.1 each
        assert_abs_diff_eq!(ok.min_separation, 0.8, epsilon = 1e-9);
        assert!(ok.trapping_slack >= 0.0);

        let wide = PatternMap::solenoid(2, 0.6).unwrap();
        assert!(matches!(check_embedding(&wide, 1024), Err(Error::NotEmbedding { .. })));

        let collapsed = MapSpec::Solenoid { n: 2, lambda: 0.2, amplitude: 0.0, margin: 0.05 };
        let err = check_embedding(&collapsed.build().unwrap(), 64).unwrap_err();
        match err {
            Error::NotEmbedding { t1, t2, .. } => {
                assert_abs_diff_eq!(circle_dist(t1, t2), PI, epsilon = 1e-9)
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(
            check_embedding(&PatternMap::identity(), 8),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn folding_maps_fail_disk_test_but_embed_the_core() {
        for f in [PatternMap::whitehead(0.1).unwrap(), PatternMap::extra_winding(0.1).unwrap()] {
            assert!(f.is_surrogate());
            assert!(matches!(check_embedding(&f, 256), Err(Error::NotEmbedding { .. })));
            let c = verify_embedding(&f, 256).unwrap();
            assert_eq!(c.kind, "core_curve");
        }
    }

    #[test]
    fn sup_derivative_examples() {
        let m = sup_derivative(&PatternMap::identity());
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-12);
        for n in 2..=4 {
            let m = sup_derivative(&PatternMap::solenoid(n, 1e-3).unwrap()).value;
            assert!(m >= n as f64 && m <= n as f64 + 1.0, "n={n}: {m}");
        }
        let f = PatternMap::extra_winding(0.1).unwrap();
        let (m1, m2) = (sup_derivative(&f), sup_derivative(&f.power(2)));
        assert!(m2.value <= m1.value * m1.value + m1.error_bound * (2.0 * m1.value + m1.error_bound));
    }

    #[test]
    fn derivative_growth_examples() {
        let g = derivative_growth(&PatternMap::identity(), 6).unwrap();
        assert_abs_diff_eq!(g.slope, 0.0, epsilon = 1e-6);
        let f = PatternMap::solenoid(2, 0.1).unwrap();
        let g = derivative_growth(&f, 8).unwrap();
        assert!((g.slope / 2f64.ln() - 1.0).abs() < 0.1, "{g:?}");
        assert!(g.slope <= sup_derivative(&f).value.ln() + g.residual);
    }

    #[test]
    fn iterates_of_the_core() {
        let f = PatternMap::solenoid(2, 0.1).unwrap();
        let core = SampledCurve::core_circle(1, 64);
        assert_eq!(iterate_curve(&f, &core, 0).unwrap(), core);
        let c1 = iterate_curve(&f, &core, 1).unwrap();
        assert!(c1.is_closed());
        assert_eq!(winding_number(&c1).unwrap(), 2);
        let c3 = iterate_curve(&f, &core, 3).unwrap();
        assert_eq!(winding_number(&c3).unwrap(), 8);
        assert!(c3.max_gap() < PI / 8.0);
        let b = geometric_index_bounds(&c3, false).unwrap();
        assert_eq!(b.exact(), Some(8));
    }

    #[test]
    fn streaming_matches_materialized_iterates() {
        let core = SampledCurve::core_circle(1, 32);
        for f in [PatternMap::extra_winding(0.1).unwrap(), PatternMap::whitehead(0.2).unwrap()] {
            for n in 0..4 {
                let c = iterate_curve(&f, &core, n).unwrap();
                let s = stream_iterate(&f, &core, n, DEFAULT_STREAM_BUDGET).unwrap();
                assert_eq!(s.samples(), c.len());
                let l = curve_length(&c);
                assert!((s.length - l).abs() <= 1e-12 * l);
                let bounds = geometric_index_bounds(&c, false).unwrap();
                assert_eq!(s.sweep.index_bounds(0).unwrap(), bounds);
            }
        }
    }

    #[test]
    fn refinement_budget_is_enforced() {
        let f = PatternMap::solenoid(3, 0.1).unwrap();
        let core = SampledCurve::core_circle(1, 16);
        let err = iterate_curve_with(&f, &core, 6, Refinement::with_budget(1000)).unwrap_err();
        assert_eq!(err, Error::RefinementBudgetExceeded { budget: 1000 });
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let spec = MapSpec::parse("family = \"power\"\nr = 3\n[base]\nfamily = \"solenoid\"\nn = 2\n").unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.degree(), 8);
        assert_eq!(f.root().map(|(b, r)| (b.label().to_string(), r)), Some(("Solenoid(2)".into(), 3)));
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(MapSpec::parse(&json).unwrap(), spec);
        let err = MapSpec::parse("family = \"solenoid\"\nn = 2\nlamda = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("lamda") && m.contains("line")), "{err}");
        let err = MapSpec::parse("{\"family\": \"whitehead\", \"linkd\": true}").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(MapSpec::parse("family = \"solenoid\"\nn = 2\nlambda = 1.5\n").unwrap().build().is_err());
    }

    #[test]
    fn certificates_multiply_under_composition() {
        let w = PatternMap::whitehead(0.1).unwrap();
        let e = PatternMap::extra_winding(0.1).unwrap();
        assert_eq!(w.then(&e).certificate(), 6);
        assert_eq!(w.power(3).certificate(), 8);
        assert_eq!(PatternMap::solenoid(2, 0.1).unwrap().then(&e).certificate(), 6);
        let unlinked = MapSpec::Whitehead { lambda: 0.1, amplitude: 0.5, margin: 0.05, linked: false };
        assert_eq!(unlinked.build().unwrap().then(&e).certificate(), 0);
    }
}
