//! Real polynomials on `[0, 1]`, centered-form interval enclosures, root
//! isolation by bisection, and the cover of a polynomial curve's preimage of
//! a ball intersected with a scaled solid torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width below which a root enclosure is no longer bisected.
pub const ROOT_TOL: f64 = 1e-12;
/// Bisections allowed for one cover before giving up.
pub const BISECTION_CAP: usize = 1_000_000;
/// Subintervals used when bounding a polynomial's supremum.
const SUP_CELLS: usize = 16;
/// Relative slack absorbing the rounding pad when counting pieces.
const PIECE_SLACK: f64 = 1e-9;

/// Scalar polynomial `Σ cᵢ tⁱ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs[self.coeffs.len() - 1] == 0.0 {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::constant(0.0);
        }
        Poly::new(self.coeffs.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect())
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let get = |p: &Poly, i: usize| p.coeffs.get(i).copied().unwrap_or(0.0);
        Poly::new((0..n).map(|i| get(self, i) + get(o, i)).collect())
    }

    pub fn scale(&self, c: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Coefficients of `h ↦ p(a + b·h)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Poly {
        let mut out = Poly::constant(0.0);
        let lin = Poly::new(vec![a, b]);
        for &c in self.coeffs.iter().rev() {
            out = out.mul(&lin).add(&Poly::constant(c));
        }
        out
    }

    fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Interval containing `p([a, b])`, from the expansion about the midpoint
    /// padded for rounding.
    pub fn enclosure(&self, a: f64, b: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let shifted = self.compose_affine(m, 1.0);
        let mut spread = 0.0;
        let mut rp = 1.0;
        for &c in &shifted.coeffs[1..] {
            rp *= r;
            spread += c.abs() * rp;
        }
        let scale = 1.0 + m.abs() + r;
        let pad = 32.0 * f64::EPSILON * self.abs_sum() * scale.powi(self.degree() as i32);
        let c0 = shifted.coeffs[0];
        (c0 - spread - pad, c0 + spread + pad)
    }

    /// Upper bound on `sup |p|` over `[0, 1]`.
    pub fn sup_abs(&self) -> f64 {
        (0..SUP_CELLS)
            .map(|i| {
                let (lo, hi) = self.enclosure(i as f64 / SUP_CELLS as f64, (i + 1) as f64 / SUP_CELLS as f64);
                lo.abs().max(hi.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Rounding noise level of a point evaluation on `[0, 1]`.
    fn noise(&self) -> f64 {
        32.0 * f64::EPSILON * self.abs_sum()
    }
}

/// Counter shared by all bisections of one cover.
#[derive(Debug)]
pub struct BisectionBudget {
    used: usize,
    cap: usize,
}

impl BisectionBudget {
    pub fn new(cap: usize) -> Self {
        BisectionBudget { used: 0, cap }
    }

    pub fn used(&self) -> usize {
        self.used
    }

    fn take(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.cap {
            return Err(Error::RootIsolationFailed(self.cap));
        }
        Ok(())
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Disjoint, sorted intervals of width at most `tol` (or merged clusters of
/// them) containing every root of `p` in `[0, 1]`. The zero polynomial has
/// no isolated roots and yields an empty list.
pub fn isolate_roots(p: &Poly, tol: f64, budget: &mut BisectionBudget) -> Result<Vec<(f64, f64)>> {
    if p.is_zero() {
        return Ok(Vec::new());
    }
    let dp = p.derivative();
    let mut roots = Vec::new();
    let mut stack = vec![(0.0, 1.0)];
    while let Some((a, b)) = stack.pop() {
        let (lo, hi) = p.enclosure(a, b);
        if lo > 0.0 || hi < 0.0 {
            continue;
        }
        let (dlo, dhi) = dp.enclosure(a, b);
        if dlo > 0.0 || dhi < 0.0 {
            let (mut a, mut b) = (a, b);
            let (fa, fb) = (p.eval(a), p.eval(b));
            if sign(fa) * sign(fb) > 0 {
                continue;
            }
            let sa = sign(fa);
            while b - a > tol {
                budget.take()?;
                let m = 0.5 * (a + b);
                let fm = p.eval(m);
                if sa != 0 && sign(fm) == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push((a, b));
            continue;
        }
        if b - a <= tol {
            roots.push((a, b));
            continue;
        }
        budget.take()?;
        let m = 0.5 * (a + b);
        stack.push((m, b));
        stack.push((a, m));
    }
    Ok(merge_intervals(roots))
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Vector-valued polynomial curve in 3-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorPoly {
    pub coords: [Poly; 3],
}

impl VectorPoly {
    /// Build from per-power coefficient vectors `[c₀, c₁, …]`.
    pub fn from_coeffs(coeffs: &[[f64; 3]]) -> Self {
        let coord = |i: usize| Poly::new(coeffs.iter().map(|c| c[i]).collect());
        VectorPoly { coords: [coord(0), coord(1), coord(2)] }
    }

    pub fn eval(&self, t: f64) -> [f64; 3] {
        [self.coords[0].eval(t), self.coords[1].eval(t), self.coords[2].eval(t)]
    }

    pub fn derivative(&self) -> VectorPoly {
        VectorPoly { coords: self.coords.clone().map(|p| p.derivative()) }
    }

    pub fn compose_affine(&self, a: f64, b: f64) -> VectorPoly {
        VectorPoly { coords: self.coords.clone().map(|p| p.compose_affine(a, b)) }
    }

    pub fn degree(&self) -> usize {
        self.coords.iter().map(Poly::degree).max().unwrap_or(0)
    }

    /// Upper bound on `sup ‖d^s Q‖` over `[0, 1]` for `s = 1..=k`.
    pub fn derivative_sups(&self, k: usize) -> Vec<f64> {
        let mut d = self.clone();
        (1..=k)
            .map(|_| {
                d = d.derivative();
                d.coords.iter().map(|p| p.sup_abs().powi(2)).sum::<f64>().sqrt()
            })
            .collect()
    }
}

/// Ball of a given radius intersected with the solid torus `λ·V` thickened
/// by `pad`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    pub center: [f64; 3],
    pub radius: f64,
    pub scale: f64,
    pub pad: f64,
}

impl BallRegion {
    /// `radius² − |Q − c|²`, non-negative inside the ball.
    pub fn ball_poly(&self, q: &VectorPoly) -> Poly {
        let mut p = Poly::constant(self.radius * self.radius);
        for i in 0..3 {
            let d = q.coords[i].add(&Poly::constant(-self.center[i]));
            p = p.add(&d.mul(&d).scale(-1.0));
        }
        p
    }

    /// `4R²ρ² − (ρ² + z² + R² − a²)²`, non-negative inside the torus of
    /// core radius `R` and tube radius `a`, where `ρ² = x² + y²`.
    pub fn torus_poly(&self, q: &VectorPoly) -> Poly {
        let big = 1.5 * self.scale;
        let tube = 0.5 * self.scale + self.pad;
        let [x, y, z] = &q.coords;
        let rho2 = x.mul(x).add(&y.mul(y));
        let inner = rho2.add(&z.mul(z)).add(&Poly::constant(big * big - tube * tube));
        rho2.scale(4.0 * big * big).add(&inner.mul(&inner).scale(-1.0))
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|i| (x[i] - self.center[i]).powi(2)).sum();
        let rho = x[0].hypot(x[1]);
        let tube = 0.5 * self.scale + self.pad;
        d2 <= self.radius * self.radius && (rho - 1.5 * self.scale).powi(2) + x[2] * x[2] <= tube * tube
    }
}

/// Connected components of `{t ∈ [0,1] : Q(t) ∈ region}` and their
/// subdivision into pieces on which `Q` is 1/2-normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallCover {
    pub components: Vec<(f64, f64)>,
    pub pieces: Vec<(f64, f64)>,
    pub bisections: usize,
}

/// Cover the preimage of `region` under `q` by at most `α₁·α₂` intervals.
///
/// Roots of the ball and torus inequalities are isolated, `[0, 1]` is cut at
/// them, and cells where both inequalities hold are kept. Root enclosures
/// are absorbed into neighbouring kept cells, or kept on their own when both
/// inequalities hold there, so the result contains every preimage point.
/// Each component is cut into equal pieces, as few as the coefficient
/// bounds on the derivatives allow and never more than `alpha2`.
pub fn polynomial_ball_cover(q: &VectorPoly, region: &BallRegion, k: usize, alpha2: usize) -> Result<BallCover> {
    let ball = region.ball_poly(q);
    let torus = region.torus_poly(q);
    let mut budget = BisectionBudget::new(BISECTION_CAP);
    let mut roots = isolate_roots(&ball, ROOT_TOL, &mut budget)?;
    roots.extend(isolate_roots(&torus, ROOT_TOL, &mut budget)?);
    let roots = merge_intervals(roots);
    let inside = |t: f64, slack: f64| ball.eval(t) >= -slack && torus.eval(t) >= -slack;

    // alternate gap and root cells covering [0, 1]
    let mut cells: Vec<(f64, f64, bool, bool)> = Vec::new();
    let mut cursor = 0.0;
    for &(a, b) in &roots {
        let (a, b) = (a.max(0.0), b.min(1.0));
        if a > cursor {
            cells.push((cursor, a, false, inside(0.5 * (cursor + a), 0.0)));
        }
        cells.push((a, b, true, false));
        cursor = b;
    }
    if cursor < 1.0 || cells.is_empty() {
        cells.push((cursor, 1.0, false, inside(0.5 * (cursor + 1.0), 0.0)));
    }
    let slack = ball.noise().max(torus.noise());
    for i in 0..cells.len() {
        if cells[i].2 {
            let left = i > 0 && cells[i - 1].3;
            let right = i + 1 < cells.len() && cells[i + 1].3;
            cells[i].3 = left || right || inside(0.5 * (cells[i].0 + cells[i].1), slack);
        }
    }

    let mut components: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for &(a, b, _, keep) in &cells {
        if keep {
            open = Some(match open {
                Some((s, _)) => (s, b),
                None => (a, b),
            });
        } else if let Some(c) = open.take() {
            components.push(c);
        }
    }
    components.extend(open);

    let mut pieces = Vec::new();
    for &(a, b) in &components {
        let local = q.compose_affine(a, b - a);
        let needed = local
            .derivative_sups(k)
            .iter()
            .enumerate()
            .map(|(i, &d)| ((2.0 * d).powf(1.0 / (i + 1) as f64) * (1.0 - PIECE_SLACK)).ceil() as usize)
            .max()
            .unwrap_or(1)
            .clamp(1, alpha2.max(1));
        for j in 0..needed {
            let t0 = a + (b - a) * j as f64 / needed as f64;
            let t1 = if j + 1 == needed { b } else { a + (b - a) * (j + 1) as f64 / needed as f64 };
            pieces.push((t0, t1));
        }
    }
    Ok(BallCover { components, pieces, bisections: budget.used() })
}
