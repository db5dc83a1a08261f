//! Coordinates on the standard solid torus `V`, sampled curves with angular
//! lifts, crossing counts against radial meridional disks, and bounds on the
//! geometric index.
//!
//! `V` is the tube of radius 1/2 around the circle of radius 3/2 in the
//! `z = 0` plane. A chart point `(u, v, φ)` with `u² + v² ≤ 1` embeds as
//!
//! ```text
//! ((3/2 + u/2)·cos φ, (3/2 + u/2)·sin φ, v/2)
//! ```
//!
//! so every point of `V` lies at distance between 1 and 2 from the z-axis.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `u² + v² ≤ 1` accepted by [`embed`].
pub const DISK_TOL: f64 = 1e-12;
/// Distance from `θ + 2πℤ` below which an angle is not a regular value.
pub const REGULAR_TOL: f64 = 1e-9;
/// Consecutive lift gaps above this trigger a refinement warning.
pub const RECOMMENDED_GAP: f64 = PI / 8.0;
/// Number of radial disks tried by [`geometric_index_bounds`].
pub const SWEEP_CANDIDATES: usize = 720;

const CORE_RADIUS: f64 = 1.5;
const TUBE_RADIUS: f64 = 0.5;

/// Chart coordinates on `V`. `phi` is kept unreduced so that it can serve as
/// a lift value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub u: f64,
    pub v: f64,
    pub phi: f64,
}

impl TorusPoint {
    pub fn new(u: f64, v: f64, phi: f64) -> Result<Self> {
        let p = TorusPoint { u, v, phi };
        p.check_disk()?;
        Ok(p)
    }

    /// Point on the core circle `u = v = 0`.
    pub const fn core(phi: f64) -> Self {
        TorusPoint { u: 0.0, v: 0.0, phi }
    }

    #[inline]
    pub fn fiber_norm_sq(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }

    fn check_disk(&self) -> Result<()> {
        let r2 = self.fiber_norm_sq();
        if r2 > 1.0 + DISK_TOL || !r2.is_finite() || !self.phi.is_finite() {
            return Err(Error::OutsideDisk { u: self.u, v: self.v, r2 });
        }
        Ok(())
    }

    /// Embedding into 3-space without the disk check.
    #[inline]
    pub fn to_ambient(&self) -> [f64; 3] {
        let r = CORE_RADIUS + TUBE_RADIUS * self.u;
        let (s, c) = self.phi.sin_cos();
        [r * c, r * s, TUBE_RADIUS * self.v]
    }
}

/// Embed a chart point into 3-space.
pub fn embed(p: &TorusPoint) -> Result<[f64; 3]> {
    p.check_disk()?;
    Ok(p.to_ambient())
}

/// Inverse chart: ambient point to `(u, v, φ)` with `φ ∈ (−π, π]`.
pub fn chart(x: [f64; 3]) -> TorusPoint {
    let rho = x[0].hypot(x[1]);
    TorusPoint {
        u: (rho - CORE_RADIUS) / TUBE_RADIUS,
        v: x[2] / TUBE_RADIUS,
        phi: x[1].atan2(x[0]),
    }
}

#[inline]
pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Reduce an angle difference to `[−π, π)`.
#[inline]
fn reduce_gap(d: f64) -> f64 {
    (d + PI).rem_euclid(TAU) - PI
}

/// Distance from `x` to the nearest point of `2πℤ`.
#[inline]
fn dist_to_lattice(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    r.min(TAU - r)
}

/// A polyline of chart points carrying a continuous angular lift.
///
/// For closed curves the last sample repeats the first in the disk
/// coordinates and its lift differs from the first by `2π·w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    points: Vec<TorusPoint>,
    lift: Vec<f64>,
    closed: bool,
}

impl SampledCurve {
    /// Build a curve from points whose `phi` fields already form a lift.
    pub fn from_lifted(points: Vec<TorusPoint>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::MalformedCurve("need at least two samples".into()));
        }
        for p in &points {
            p.check_disk()?;
        }
        for (i, w) in points.windows(2).enumerate() {
            let gap = w[1].phi - w[0].phi;
            if gap.abs() >= PI - REGULAR_TOL {
                return Err(Error::LiftAmbiguous { index: i, gap });
            }
            if w[0].to_ambient() == w[1].to_ambient() {
                return Err(Error::MalformedCurve(format!("samples {i} and {} coincide", i + 1)));
            }
        }
        if closed {
            let (first, last) = (points[0], points[points.len() - 1]);
            let turns = (last.phi - first.phi) / TAU;
            if (first.u - last.u).abs() > 1e-9
                || (first.v - last.v).abs() > 1e-9
                || (turns - turns.round()).abs() > 1e-9
            {
                return Err(Error::MalformedCurve("closed curve does not return to its start".into()));
            }
        }
        let lift = points.iter().map(|p| p.phi).collect();
        Ok(SampledCurve { points, lift, closed })
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn lift(&self) -> &[f64] {
        &self.lift
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest consecutive lift gap.
    pub fn max_gap(&self) -> f64 {
        self.lift.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }

    /// Core circle traversed `turns` times, `samples_per_turn` segments each.
    pub fn core_circle(turns: i64, samples_per_turn: usize) -> Self {
        assert!(turns != 0 && samples_per_turn >= 3);
        let n = samples_per_turn * turns.unsigned_abs() as usize;
        let step = TAU * turns.signum() as f64 / samples_per_turn as f64;
        let mut points: Vec<_> = (0..=n).map(|i| TorusPoint::core(step * i as f64)).collect();
        points[n].phi = TAU * turns as f64;
        SampledCurve::from_lifted(points, true).expect("core circle is a valid curve")
    }
}

/// Unwrap raw angles into a continuous lift starting in `[0, 2π)`.
///
/// The curve is marked closed when the last sample returns to the first one
/// (same disk coordinates, same angle mod 2π).
pub fn lift_angles(raw: &[TorusPoint]) -> Result<SampledCurve> {
    if raw.len() < 2 {
        return Err(Error::MalformedCurve("need at least two samples".into()));
    }
    let mut points = Vec::with_capacity(raw.len());
    let mut current = raw[0].phi.rem_euclid(TAU);
    points.push(TorusPoint::new(raw[0].u, raw[0].v, current)?);
    let mut warned = false;
    for (i, w) in raw.windows(2).enumerate() {
        let gap = reduce_gap(w[1].phi - w[0].phi);
        if gap.abs() >= PI - REGULAR_TOL {
            return Err(Error::LiftAmbiguous { index: i, gap });
        }
        if gap.abs() > RECOMMENDED_GAP && !warned {
            log::warn!("lift gap {gap:.4} at sample {i} exceeds π/8; consider refining");
            warned = true;
        }
        current += gap;
        points.push(TorusPoint::new(w[1].u, w[1].v, current)?);
    }
    let (first, last) = (points[0], points[points.len() - 1]);
    let turns = (last.phi - first.phi) / TAU;
    let closed = raw.len() >= 3
        && (first.u - last.u).abs() <= 1e-9
        && (first.v - last.v).abs() <= 1e-9
        && (turns - turns.round()).abs() <= 1e-9 / TAU;
    if closed {
        let n = points.len() - 1;
        points[n] = TorusPoint { u: first.u, v: first.v, phi: first.phi + TAU * turns.round() };
    }
    SampledCurve::from_lifted(points, closed)
}

/// Homological winding number of a closed curve.
pub fn winding_number(c: &SampledCurve) -> Result<i64> {
    if !c.closed {
        return Err(Error::NotClosed);
    }
    let l = c.lift();
    Ok(((l[l.len() - 1] - l[0]) / TAU).round() as i64)
}

/// Unsigned and signed crossing counts with the radial disk at angle `angle`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingProfile {
    pub angle: f64,
    pub geometric_count: u64,
    pub signed_count: i64,
}

/// Count the solutions of `lift(t) ∈ θ + 2πℤ` along the piecewise-linear lift.
pub fn crossing_profile(c: &SampledCurve, theta: f64) -> Result<CrossingProfile> {
    if !c.closed {
        return Err(Error::NotClosed);
    }
    if c.lift.iter().any(|&l| dist_to_lattice(l - theta) < REGULAR_TOL) {
        return Err(Error::NotRegularValue { angle: theta });
    }
    let mut geometric = 0u64;
    let mut signed = 0i64;
    for w in c.lift.windows(2) {
        let (lo, hi) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
        let k = ((hi - theta) / TAU).floor() - ((lo - theta) / TAU).floor();
        let k = k as i64;
        geometric += k as u64;
        signed += if w[1] > w[0] { k } else { -k };
    }
    Ok(CrossingProfile { angle: theta, geometric_count: geometric, signed_count: signed })
}

/// Crossing profiles at the evenly spaced sweep angles `(j + 1/2)·2π/720`,
/// keeping only regular values. Angles within one lift step of a sampled
/// turning point count as non-regular, since the samples may stop short of
/// the curve's true extremum there.
///
/// Agrees with [`crossing_profile`] at every surviving candidate, but runs in
/// time proportional to the sample count plus the lift's total variation.
pub fn regular_sweep(c: &SampledCurve) -> Result<Vec<CrossingProfile>> {
    if !c.closed {
        return Err(Error::NotClosed);
    }
    let mut acc = SweepAccumulator::new();
    c.lift.iter().for_each(|&l| acc.push(l));
    Ok(acc.profiles())
}

/// Streaming form of [`regular_sweep`]: lift samples are pushed in order and
/// never stored, so curves far larger than memory can be swept.
#[derive(Clone, Debug)]
pub struct SweepAccumulator {
    regular: Vec<bool>,
    geometric: Vec<u64>,
    signed: Vec<i64>,
    first: Option<f64>,
    last: f64,
    /// First and last non-zero lift steps, to spot turning points at joins.
    first_step: f64,
    last_step: f64,
    variation: f64,
    samples: usize,
}

impl Default for SweepAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl SweepAccumulator {
    const STEP: f64 = TAU / SWEEP_CANDIDATES as f64;

    pub fn new() -> Self {
        let m = SWEEP_CANDIDATES;
        SweepAccumulator {
            regular: vec![true; m],
            geometric: vec![0; m],
            signed: vec![0; m],
            first: None,
            last: 0.0,
            first_step: 0.0,
            last_step: 0.0,
            variation: 0.0,
            samples: 0,
        }
    }

    fn theta(j: usize) -> f64 {
        (j as f64 + 0.5) * Self::STEP
    }

    /// The lift turns at value `l`; the curve's true extremum lies beyond it
    /// by at most about one neighbouring step, so candidates that close are
    /// not resolved by the samples.
    fn guard_turn(regular: &mut [bool], l: f64, before: f64, after: f64) {
        if before == 0.0 || after == 0.0 || (before > 0.0) == (after > 0.0) {
            return;
        }
        let delta = before.abs().max(after.abs());
        let m = SWEEP_CANDIDATES as i64;
        let g0 = ((l - delta) / Self::STEP - 0.5).floor() as i64;
        let g1 = ((l + delta) / Self::STEP - 0.5).ceil() as i64;
        for g in g0..=g1.min(g0 + m) {
            let j = g.rem_euclid(m) as usize;
            if dist_to_lattice(l - Self::theta(j)) <= delta {
                regular[j] = false;
            }
        }
    }

    pub fn push(&mut self, l: f64) {
        let m = SWEEP_CANDIDATES as i64;
        // nearest candidates on either side of l mod 2π
        let x = l.rem_euclid(TAU) / Self::STEP - 0.5;
        for j in [x.floor(), x.ceil()] {
            let j = (j as i64).rem_euclid(m) as usize;
            if dist_to_lattice(l - Self::theta(j)) < REGULAR_TOL {
                self.regular[j] = false;
            }
        }
        if self.first.is_some() {
            let prev = self.last;
            let (lo, hi, dir) = if prev < l { (prev, l, 1) } else { (l, prev, -1) };
            // global candidate indices g with lo < (g + 1/2)·step <= hi
            let g0 = (lo / Self::STEP - 0.5).floor() as i64 + 1;
            let g1 = (hi / Self::STEP - 0.5).floor() as i64;
            for g in g0..=g1 {
                let j = g.rem_euclid(m) as usize;
                self.geometric[j] += 1;
                self.signed[j] += dir;
            }
            self.variation += hi - lo;
            let step = l - prev;
            if step != 0.0 {
                Self::guard_turn(&mut self.regular, prev, self.last_step, step);
                self.last_step = step;
                if self.first_step == 0.0 {
                    self.first_step = step;
                }
            }
        } else {
            self.first = Some(l);
        }
        self.last = l;
        self.samples += 1;
    }

    /// Append a continuation whose first sample repeats this one's last.
    pub fn merge(&mut self, other: &SweepAccumulator) {
        let Some(of) = other.first else { return };
        if self.first.is_none() {
            *self = other.clone();
            return;
        }
        debug_assert!((of - self.last).abs() <= 1e-9 * (1.0 + of.abs()));
        Self::guard_turn(&mut self.regular, self.last, self.last_step, other.first_step);
        if other.last_step != 0.0 {
            self.last_step = other.last_step;
        }
        if self.first_step == 0.0 {
            self.first_step = other.first_step;
        }
        for j in 0..SWEEP_CANDIDATES {
            self.regular[j] &= other.regular[j];
            self.geometric[j] += other.geometric[j];
            self.signed[j] += other.signed[j];
        }
        self.last = other.last;
        self.variation += other.variation;
        self.samples += other.samples - 1;
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn total_variation(&self) -> f64 {
        self.variation
    }

    /// Lift displacement in turns, rounded.
    pub fn winding(&self) -> i64 {
        ((self.last - self.first.unwrap_or(0.0)) / TAU).round() as i64
    }

    /// Profiles at the regular candidates, treating the samples as a closed
    /// curve whose last sample returns to the first.
    pub fn profiles(&self) -> Vec<CrossingProfile> {
        let mut regular = self.regular.clone();
        Self::guard_turn(&mut regular, self.last, self.last_step, self.first_step);
        (0..SWEEP_CANDIDATES)
            .filter(|&j| regular[j])
            .map(|j| CrossingProfile {
                angle: Self::theta(j),
                geometric_count: self.geometric[j],
                signed_count: self.signed[j],
            })
            .collect()
    }

    /// Index bounds of the swept closed curve; see [`certified_index_bounds`].
    pub fn index_bounds(&self, certificate: u64) -> Result<IndexBounds> {
        if self.variation == 0.0 {
            return Err(Error::DegenerateCurve);
        }
        let upper = self
            .profiles()
            .iter()
            .map(|p| p.geometric_count)
            .min()
            .ok_or(Error::DegenerateCurve)?;
        IndexBounds::new(self.winding().unsigned_abs().max(certificate), upper)
    }
}

/// Two-sided bound on the geometric index `N(γ ⊆ V)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBounds {
    pub lower: u64,
    pub upper: u64,
    pub certified_exact: bool,
}

impl IndexBounds {
    /// Combine a lower bound with the radial upper bound, applying the parity
    /// correction.
    pub fn new(lower: u64, upper: u64) -> Result<Self> {
        if lower > upper {
            return Err(Error::InconsistentCertificate { upper });
        }
        let lower = if (upper - lower) % 2 == 1 { lower + 1 } else { lower };
        Ok(IndexBounds { lower, upper, certified_exact: lower == upper })
    }

    /// The certified value, if the bounds coincide.
    pub fn exact(&self) -> Option<u64> {
        self.certified_exact.then_some(self.lower)
    }
}

/// Bound the geometric index of a closed curve.
///
/// The upper bound is the fewest crossings with any radial disk of the sweep.
/// The lower bound is `|m|`, raised to 2 when `linked` certifies that a
/// null-homologous curve cannot be pushed off every meridional disk.
pub fn geometric_index_bounds(c: &SampledCurve, linked: bool) -> Result<IndexBounds> {
    certified_index_bounds(c, if linked { 2 } else { 0 })
}

/// Like [`geometric_index_bounds`], with an arbitrary externally certified
/// lower bound on the index in place of the linking flag.
pub fn certified_index_bounds(c: &SampledCurve, certificate: u64) -> Result<IndexBounds> {
    if !c.closed {
        return Err(Error::NotClosed);
    }
    let mut acc = SweepAccumulator::new();
    c.lift.iter().for_each(|&l| acc.push(l));
    acc.index_bounds(certificate)
}

/// Sum of 3-space distances between consecutive embedded samples.
pub fn curve_length(c: &SampledCurve) -> f64 {
    c.points.windows(2).map(|w| dist3(w[0].to_ambient(), w[1].to_ambient())).sum()
}

/// Total variation of the angular lift.
pub fn total_variation(c: &SampledCurve) -> f64 {
    c.lift.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Number of maximal runs on which the lift is strictly monotone, read along
/// the sample order starting at the first sample. Flat segments are skipped.
pub fn monotonicity_intervals(c: &SampledCurve) -> Result<usize> {
    if !c.closed {
        return Err(Error::NotClosed);
    }
    Ok(monotone_runs(&c.lift).len())
}

/// Lift spans `(start, end)` of the maximal monotone runs.
pub fn monotone_runs(lift: &[f64]) -> Vec<(f64, f64)> {
    let mut runs = Vec::new();
    let mut dir = 0i8;
    let mut start = lift.first().copied().unwrap_or(0.0);
    let mut prev = start;
    for w in lift.windows(2) {
        let d = w[1] - w[0];
        let s = if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 };
        if s == 0 {
            continue;
        }
        if dir != 0 && s != dir {
            runs.push((start, prev));
            start = prev;
        }
        dir = s;
        prev = w[1];
    }
    if dir != 0 {
        runs.push((start, prev));
    }
    runs
}

/// Outcome of checking `ℓ(γ) ≥ 2π·N` for one curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthCheck {
    pub length: f64,
    pub index: u64,
    pub bound: f64,
    /// Slack allowed for floating-point summation. The polyline is inscribed
    /// in the curve it samples, so sampling can only shorten it.
    pub tolerance: f64,
    pub ok: bool,
}

pub fn check_length_bound(c: &SampledCurve, index: u64) -> LengthCheck {
    let length = curve_length(c);
    let bound = TAU * index as f64;
    let tolerance = 1e-12 * c.len() as f64 * (1.0 + length);
    LengthCheck { length, index, bound, tolerance, ok: length >= bound - tolerance }
}

/// Index data of one closed curve, as written to reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub winding: i64,
    pub lower: u64,
    pub upper: u64,
    pub certified: bool,
    pub length: f64,
    pub monotone_intervals: usize,
}

pub fn curve_report(c: &SampledCurve, certificate: u64) -> Result<CurveReport> {
    let b = certified_index_bounds(c, certificate)?;
    Ok(CurveReport {
        winding: winding_number(c)?,
        lower: b.lower,
        upper: b.upper,
        certified: b.certified_exact,
        length: curve_length(c),
        monotone_intervals: monotonicity_intervals(c)?,
    })
}

impl SampledCurve {
    /// CSV text: a `closed=true|false` line, a `u,v,lift` header, then one
    /// row per sample with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["u", "v", "lift"]).expect("writing to memory");
        for (p, l) in self.points.iter().zip(&self.lift) {
            w.write_record([p.u, p.v, *l].map(|x| format!("{x:.16e}"))).expect("writing to memory");
        }
        let body = String::from_utf8(w.into_inner().expect("writing to memory")).expect("ASCII output");
        format!("closed={}\n{body}", self.closed)
    }

    /// Inverse of [`SampledCurve::to_csv`]; the column header is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let closed = match first.trim() {
            "closed=true" => true,
            "closed=false" => false,
            other => return Err(Error::MalformedCurve(format!("expected closed=true|false on line 1, found {other:?}"))),
        };
        let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(rest.as_bytes());
        let mut points = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedCurve(format!("line {line}: {e}")))?;
            if i == 0 && rec.iter().eq(["u", "v", "lift"]) {
                continue;
            }
            if rec.len() != 3 {
                return Err(Error::MalformedCurve(format!("line {line}: expected 3 fields, found {}", rec.len())));
            }
            let mut x = [0.0; 3];
            for (j, field) in rec.iter().enumerate() {
                x[j] = field
                    .parse()
                    .map_err(|_| Error::MalformedCurve(format!("line {line}: {field:?} is not a number")))?;
            }
            points.push(TorusPoint { u: x[0], v: x[1], phi: x[2] });
        }
        SampledCurve::from_lifted(points, closed)
    }
}
