//! Index sequences of dynamically generated bases, prime divisors, and the
//! geometric and homological degrees of a pattern map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{IndexBounds, SampledCurve};
use crate::maps::{stream_iterate, verify_embedding, PatternMap, DEFAULT_ANGULAR_SAMPLES, DEFAULT_STREAM_BUDGET};

/// Samples per turn of the core circle fed to the iterator.
pub const CORE_SAMPLES: usize = 256;

/// Index data of `fⁿ(core)` in `V` from two independent sources.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageIndex {
    pub n: usize,
    pub winding: i64,
    /// Bounds read off the image curve alone: the radial sweep above, the
    /// winding number and the map's certificate below.
    pub radial: IndexBounds,
    /// Products over the elementary stages of their one-step bounds.
    pub factor_lower: u64,
    pub factor_upper: u64,
    /// Intersection of both.
    pub bounds: IndexBounds,
}

fn core() -> SampledCurve {
    SampledCurve::core_circle(1, CORE_SAMPLES)
}

fn radial_bounds(f: &PatternMap, n: usize, certificate: u64) -> Result<(IndexBounds, i64)> {
    let stats = stream_iterate(f, &core(), n, DEFAULT_STREAM_BUDGET)?;
    Ok((stats.sweep.index_bounds(certificate)?, stats.sweep.winding()))
}

/// Bound the geometric index of `fⁿ(core)` in `V`.
///
/// Each elementary stage is bounded on its own; since the index of a
/// composite of embeddings is the product of the indices, products of these
/// bounds also bound the iterate. The result intersects that with the
/// bounds measured directly on the iterated curve.
pub fn image_index(f: &PatternMap, n: usize) -> Result<ImageIndex> {
    if n == 0 {
        return Err(Error::InvalidArgument("iterate count must be positive".into()));
    }
    let fnth = f.power(n as u32);
    let (radial, winding) = radial_bounds(&fnth, 1, fnth.certificate())?;
    let mut factor_lower = 1u64;
    let mut factor_upper = 1u64;
    for g in f.factors() {
        let (b, _) = radial_bounds(&g, 1, g.certificate())?;
        factor_lower = factor_lower.saturating_mul(b.lower.saturating_pow(n as u32));
        factor_upper = factor_upper.saturating_mul(b.upper.saturating_pow(n as u32));
    }
    let bounds = IndexBounds::new(radial.lower.max(factor_lower), radial.upper.min(factor_upper))?;
    Ok(ImageIndex { n, winding, radial, factor_lower, factor_upper, bounds })
}

/// One step `N(T_{k+1} ⊆ T_k)` of an index sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStep {
    #[serde(rename = "N_lower")]
    pub n_lower: u64,
    #[serde(rename = "N_upper")]
    pub n_upper: u64,
    pub m: i64,
}

impl IndexStep {
    pub fn certified(&self) -> Option<u64> {
        (self.n_lower == self.n_upper).then_some(self.n_lower)
    }
}

/// Consecutive indices of a neighbourhood basis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSequence {
    pub steps: Vec<IndexStep>,
    /// `(preperiod, period)` when the sequence is known to repeat.
    pub eventually_periodic: Option<(usize, usize)>,
}

impl IndexSequence {
    pub fn new(steps: Vec<IndexStep>, eventually_periodic: Option<(usize, usize)>) -> Result<Self> {
        for (k, s) in steps.iter().enumerate() {
            let bad = s.n_lower > s.n_upper
                || s.n_lower < s.m.unsigned_abs()
                || (s.n_upper as i128 - s.m as i128) % 2 != 0;
            if bad {
                return Err(Error::InvalidArgument(format!("inconsistent index step {k}: {s:?}")));
            }
        }
        if let Some((pre, per)) = eventually_periodic {
            if per == 0 || pre + per > steps.len() {
                return Err(Error::InvalidArgument(format!(
                    "periodic part ({pre}, {per}) does not fit {} steps",
                    steps.len()
                )));
            }
        }
        Ok(IndexSequence { steps, eventually_periodic })
    }

    /// A constant sequence of certified indices.
    pub fn constant(index: u64, m: i64, depth: usize) -> Result<Self> {
        Self::new(vec![IndexStep { n_lower: index, n_upper: index, m }; depth], Some((0, 1)))
    }
}

/// The basis `{fᵏ(V)}`: every step is the index of `f(core)` in `V`.
pub fn index_sequence(f: &PatternMap, depth: usize) -> Result<IndexSequence> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    verify_embedding(f, DEFAULT_ANGULAR_SAMPLES)?;
    let one = image_index(f, 1)?;
    let step = IndexStep { n_lower: one.bounds.lower, n_upper: one.bounds.upper, m: one.winding };
    IndexSequence::new(vec![step; depth], Some((0, 1)))
}

/// Prime factorization by trial division, as `(prime, multiplicity)`.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p.saturating_mul(p) <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn primes_of(n: u64) -> Vec<u64> {
    factorize(n).into_iter().map(|(p, _)| p).collect()
}

/// Prime divisors of an index sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeSet {
    pub primes: Vec<u64>,
    /// True when derived from a known periodic part; otherwise the set only
    /// records what the finitely many steps show.
    pub certified: bool,
    pub caveat: Option<String>,
}

/// Primes dividing infinitely many indices: for an eventually periodic
/// sequence, those dividing some index of the period.
pub fn prime_divisors(s: &IndexSequence) -> Result<PrimeSet> {
    let (part, certified) = match s.eventually_periodic {
        Some((pre, per)) => (&s.steps[pre..pre + per], true),
        None => (&s.steps[..], false),
    };
    let mut primes = Vec::new();
    for step in part {
        let n = step.certified().ok_or(Error::UncertifiedIndex { lower: step.n_lower, upper: step.n_upper })?;
        primes.extend(primes_of(n));
    }
    primes.sort_unstable();
    primes.dedup();
    let caveat = (!certified).then(|| {
        format!("observed over {} steps; no periodicity is known, so later steps could differ", s.steps.len())
    });
    Ok(PrimeSet { primes, certified, caveat })
}

/// Exact integer `r`-th root of `value`, if there is one.
pub fn integer_root(value: u64, r: u32) -> Result<u64> {
    if r == 0 {
        return Err(Error::InvalidArgument("root order must be positive".into()));
    }
    if value > i64::MAX as u64 {
        return Err(Error::InvalidArgument(format!("{value} exceeds the supported range")));
    }
    if r == 1 {
        return Ok(value);
    }
    let (mut lo, mut hi) = (0u64, value.min(1 << 32) + 1);
    // largest d with d^r <= value
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match mid.checked_pow(r) {
            Some(p) if p <= value => lo = mid,
            _ => hi = mid,
        }
    }
    if lo.checked_pow(r) == Some(value) {
        Ok(lo)
    } else {
        Err(Error::NotPerfectPower { value: value as i64, root: r })
    }
}

/// Signed root: for even `r` the sign is supplied by the caller.
fn signed_root(value: i64, r: u32, sign: i64) -> Result<i64> {
    let d = integer_root(value.unsigned_abs(), r)
        .map_err(|_| Error::NotPerfectPower { value, root: r })? as i64;
    if r % 2 == 1 {
        Ok(d * value.signum())
    } else if value < 0 {
        Err(Error::NotPerfectPower { value, root: r })
    } else {
        Ok(d * if sign < 0 { -1 } else { 1 })
    }
}

/// Certified index `N_r` of `f^r(core)` and its integer `r`-th root.
pub fn geometric_degree(f: &PatternMap, r: u32) -> Result<(u64, u64)> {
    let idx = image_index(f, r as usize)?;
    let n_r = idx
        .bounds
        .exact()
        .ok_or(Error::UncertifiedIndex { lower: idx.bounds.lower, upper: idx.bounds.upper })?;
    Ok((n_r, integer_root(n_r, r)?))
}

/// Winding `m_r` of `f^r(core)` and the homological degree, which is
/// undefined (`None`) when `m_r = 0`.
pub fn homological_degree(f: &PatternMap, r: u32) -> Result<(i64, Option<i64>)> {
    let m_r = image_index(f, r as usize)?.winding;
    if m_r == 0 {
        return Ok((0, None));
    }
    let sign = if r.is_multiple_of(2) { image_index(f, 1)?.winding.signum() } else { 1 };
    Ok((m_r, Some(signed_root(m_r, r, sign)?)))
}

/// The three logarithmic entropy lower bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeBounds {
    pub log_d_geom: f64,
    pub log_d_hom: Option<f64>,
    pub log_prod_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub map_id: String,
    pub r: u32,
    #[serde(rename = "N_r")]
    pub n_r: u64,
    pub d_geom: u64,
    /// Full factorization of `d_geom`, so multiplicities are visible.
    pub d_geom_factors: Vec<(u64, u32)>,
    pub m_r: i64,
    pub d_hom: Option<i64>,
    pub primes: Vec<u64>,
    pub hom_primes: Option<Vec<u64>>,
    pub bounds: DegreeBounds,
    pub certified: bool,
    /// Entropy is at least `log 2` when some prime divides the indices, and
    /// the degree bound is trivial otherwise.
    pub entropy_alternative: String,
}

/// Assemble degrees, divisors and bounds. A map built as `Power(base, q)` is
/// reported through its base with the exponent multiplied by `q`.
pub fn degree_report(f: &PatternMap, r: u32) -> Result<DegreeReport> {
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    let (g, r) = match f.root() {
        Some((base, q)) => (base, r * q),
        None => (f, r),
    };
    let (n_r, d_geom) = geometric_degree(g, r)?;
    let (m_r, d_hom) = homological_degree(g, r)?;
    let seq = index_sequence(g, 1)?;
    let primes = prime_divisors(&seq)?.primes;
    let d_geom_factors = factorize(d_geom);
    let factor_primes: Vec<u64> = d_geom_factors.iter().map(|&(p, _)| p).collect();
    if factor_primes != primes {
        return Err(Error::InvalidArgument(format!(
            "primes of d_geom {factor_primes:?} differ from the index divisors {primes:?}"
        )));
    }
    if let Some(d) = d_hom {
        if d.unsigned_abs() > d_geom {
            return Err(Error::InvalidArgument(format!("|d_hom| = {} exceeds d_geom = {d_geom}", d.abs())));
        }
    }
    let hom_primes = d_hom.map(|d| primes_of(d.unsigned_abs()));
    let log_prod_p = primes.iter().map(|&p| (p as f64).ln()).sum();
    let entropy_alternative = if primes.is_empty() {
        "no prime divisors: d_geom = 1 and the degree bound is 0".to_string()
    } else {
        format!("prime divisor {} present: entropy at least log {}", primes[0], primes[0])
    };
    Ok(DegreeReport {
        map_id: f.label().to_string(),
        r,
        n_r,
        d_geom,
        d_geom_factors,
        m_r,
        d_hom,
        primes,
        hom_primes,
        bounds: DegreeBounds {
            log_d_geom: (d_geom as f64).ln(),
            log_d_hom: d_hom.map(|d| (d.unsigned_abs() as f64).ln()),
            log_prod_p,
        },
        certified: true,
        entropy_alternative,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicativityCheck {
    pub d_first: u64,
    pub d_second: u64,
    pub d_composite: u64,
    pub ok: bool,
}

/// Check `d(g ∘ f) = d(f)·d(g)`, where `f` is applied first.
pub fn check_degree_multiplicativity(f: &PatternMap, g: &PatternMap) -> Result<MultiplicativityCheck> {
    let gf = f.then(g);
    verify_embedding(&gf, DEFAULT_ANGULAR_SAMPLES)?;
    let (_, d_first) = geometric_degree(f, 1)?;
    let (_, d_second) = geometric_degree(g, 1)?;
    let (_, d_composite) = geometric_degree(&gf, 1)?;
    Ok(MultiplicativityCheck { d_first, d_second, d_composite, ok: d_composite == d_first * d_second })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(n: u64, m: i64) -> IndexStep {
        IndexStep { n_lower: n, n_upper: n, m }
    }

    #[test]
    fn index_sequences_of_reference_maps() {
        let s = index_sequence(&PatternMap::solenoid(3, 0.1).unwrap(), 4).unwrap();
        assert_eq!(s.steps, vec![step(3, 3); 4]);
        assert_eq!(s.eventually_periodic, Some((0, 1)));
        let s = index_sequence(&PatternMap::whitehead(0.1).unwrap(), 4).unwrap();
        assert_eq!(s.steps, vec![step(2, 0); 4]);
        let s = index_sequence(&PatternMap::extra_winding(0.1).unwrap(), 3).unwrap();
        assert_eq!(s.steps, vec![step(3, 1); 3]);
    }

    #[test]
    fn index_sequence_requires_an_embedding() {
        let f = PatternMap::solenoid(2, 0.6).unwrap();
        assert!(matches!(index_sequence(&f, 2), Err(Error::NotEmbedding { .. })));
    }

    #[test]
    fn prime_divisor_examples() {
        let p = |n| prime_divisors(&IndexSequence::constant(n, (n % 2) as i64, 3).unwrap()).unwrap().primes;
        assert_eq!(p(12), vec![2, 3]);
        assert_eq!(p(2), vec![2]);
        assert!(p(1).is_empty());
    }

    #[test]
    fn observed_divisors_carry_a_caveat() {
        let s = IndexSequence::new(vec![step(6, 0), step(5, 1)], None).unwrap();
        let p = prime_divisors(&s).unwrap();
        assert_eq!(p.primes, vec![2, 3, 5]);
        assert!(!p.certified && p.caveat.is_some());
    }

    #[test]
    fn uncertified_steps_are_rejected() {
        let s = IndexSequence::new(
            vec![IndexStep { n_lower: 0, n_upper: 2, m: 0 }],
            Some((0, 1)),
        )
        .unwrap();
        assert_eq!(prime_divisors(&s), Err(Error::UncertifiedIndex { lower: 0, upper: 2 }));
    }

    #[test]
    fn inconsistent_steps_are_rejected() {
        assert!(IndexSequence::new(vec![IndexStep { n_lower: 1, n_upper: 2, m: 1 }], None).is_err());
        assert!(IndexSequence::new(vec![step(1, 3)], None).is_err());
        assert!(IndexSequence::new(vec![step(2, 0)], Some((1, 1))).is_err());
    }

    #[test]
    fn factorization_and_roots() {
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert_eq!(factorize(1), vec![]);
        assert_eq!(factorize(97), vec![(97, 1)]);
        assert_eq!(integer_root(8, 3), Ok(2));
        assert_eq!(integer_root(6, 2), Err(Error::NotPerfectPower { value: 6, root: 2 }));
        assert_eq!(integer_root(1, 5), Ok(1));
        assert_eq!(integer_root(0, 2), Ok(0));
        assert_eq!(integer_root(i64::MAX as u64, 1), Ok(i64::MAX as u64));
        assert_eq!(integer_root(3u64.pow(39), 39), Ok(3));
        assert!(integer_root(u64::MAX, 2).is_err());
        assert_eq!(signed_root(-8, 3, 1), Ok(-2));
        assert_eq!(signed_root(4, 2, -1), Ok(-2));
        assert!(signed_root(-4, 2, 1).is_err());
    }

    #[test]
    fn degrees_of_reference_maps() {
        let s2 = PatternMap::solenoid(2, 0.1).unwrap();
        assert_eq!(geometric_degree(&s2, 1).unwrap(), (2, 2));
        assert_eq!(homological_degree(&s2, 2).unwrap(), (4, Some(2)));
        let e = PatternMap::extra_winding(0.1).unwrap();
        assert_eq!(homological_degree(&e, 1).unwrap(), (1, Some(1)));
        let w = PatternMap::whitehead(0.1).unwrap();
        assert_eq!(homological_degree(&w, 1).unwrap(), (0, None));
        let neg = PatternMap::solenoid(-3, 0.1).unwrap();
        assert_eq!(homological_degree(&neg, 2).unwrap(), (9, Some(-3)));
    }

    #[test]
    fn degree_reports() {
        let r = degree_report(&PatternMap::solenoid(2, 0.1).unwrap(), 1).unwrap();
        assert_eq!((r.d_geom, r.d_hom, r.primes.clone()), (2, Some(2), vec![2]));
        assert!((r.bounds.log_d_geom - 2f64.ln()).abs() < 1e-15);

        let r = degree_report(&PatternMap::extra_winding(0.1).unwrap(), 1).unwrap();
        assert_eq!((r.d_geom, r.d_hom), (3, Some(1)));
        assert!(r.bounds.log_d_geom > r.bounds.log_d_hom.unwrap());

        let r = degree_report(&PatternMap::identity(), 1).unwrap();
        assert_eq!((r.d_geom, r.primes.len(), r.bounds.log_prod_p), (1, 0, 0.0));

        let r = degree_report(&PatternMap::solenoid(2, 0.1).unwrap().power(3), 1).unwrap();
        assert_eq!((r.r, r.n_r, r.d_geom), (3, 8, 2));

        let r = degree_report(&PatternMap::whitehead(0.1).unwrap(), 1).unwrap();
        assert_eq!((r.d_geom, r.d_hom, r.hom_primes), (2, None, None));
    }

    #[test]
    fn multiplicativity_examples() {
        let s2 = PatternMap::solenoid(2, 0.1).unwrap();
        let s3 = PatternMap::solenoid(3, 0.1).unwrap();
        let c = check_degree_multiplicativity(&s2, &s3).unwrap();
        assert_eq!((c.d_composite, c.ok), (6, true));
        let c = check_degree_multiplicativity(&s2, &PatternMap::identity()).unwrap();
        assert_eq!((c.d_composite, c.ok), (2, true));
        let i = image_index(&s2, 3).unwrap();
        assert_eq!((i.radial.exact(), i.bounds.exact()), (Some(8), Some(8)));
    }

    #[test]
    fn radial_sweep_overcounts_folded_iterates() {
        // radial disks meet the second iterate 13 times, while the index is 9
        let i = image_index(&PatternMap::extra_winding(0.1).unwrap(), 2).unwrap();
        assert_eq!(i.radial.upper, 13);
        assert_eq!((i.factor_lower, i.factor_upper), (9, 9));
        assert_eq!(i.bounds.exact(), Some(9));
    }
}
