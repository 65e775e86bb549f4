//! Scalar normalization: the unique positive root of `a·x^q + b·x^r = 1`
//! and projection of functions onto the constraint set
//! `B^{q,r}_b = { u : ‖u‖^q_{L^q(Ω)} + b‖γu‖^r_{L^r(Σ)} = 1 }`.

use crate::calculus::masked_volume_weights;
use crate::domain::{GridFunction, Metric, RegionPair};
use crate::error::{Error, Result};

/// Exponent/coupling triple `(q, r, b)` of a constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentTriple {
    pub q: f64,
    pub r: f64,
    pub b: f64,
}

impl ExponentTriple {
    /// Requires `q > r > 1`, or `q = r > 1` (the latter solvable only when
    /// `b > -a` at the call site).
    pub fn new(q: f64, r: f64, b: f64) -> Result<Self> {
        if !(r > 1.0) || !(q >= r) {
            return Err(Error::ExponentOutOfRange(format!(
                "need q >= r > 1, got q = {q}, r = {r}"
            )));
        }
        Ok(Self { q, r, b })
    }
}

/// Unique positive solution of `a·x^q + b·x^r = 1`.
///
/// Safeguarded Newton on a sign-changing bracket. For `b < 0` the function
/// vanishes at `x_* = (-b/a)^{1/(q-r)}` and increases beyond it, so the root
/// is bracketed in `(x_*, ∞)`; the upper end starts at
/// `x_* + (1/a)^{1/q} + 1` and doubles until the function exceeds one.
/// The residual `|a·x^q + b·x^r - 1|` reaches `1e-12` whenever the two terms
/// at the root are of moderate size; for ill-conditioned cancellation the
/// root is still accurate to relative machine precision in `x`.
pub fn unit_root(a: f64, b: f64, q: f64, r: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("a = {a} must be positive")));
    }
    if !(r > 1.0) || !(q >= r) {
        return Err(Error::ExponentOutOfRange(format!(
            "need q >= r > 1, got q = {q}, r = {r}"
        )));
    }
    if q == r {
        // degenerate family: (a + b) x^q = 1
        if b <= -a {
            return Err(Error::ConstraintUnsatisfiable);
        }
        return Ok((a + b).powf(-1.0 / q));
    }

    let f = |x: f64| a * x.powf(q) + b * x.powf(r) - 1.0;
    let fp = |x: f64| a * q * x.powf(q - 1.0) + b * r * x.powf(r - 1.0);

    let (mut lo, mut hi);
    if b >= 0.0 {
        lo = 0.0;
        hi = (1.0 / a).powf(1.0 / q);
    } else {
        let x_star = (-b / a).powf(1.0 / (q - r));
        lo = x_star;
        hi = x_star + (1.0 / a).powf(1.0 / q) + 1.0;
        let mut guard = 0;
        while f(hi) < 0.0 && guard < 200 {
            hi *= 2.0;
            guard += 1;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= 1e-14 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = fp(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs() {
            break;
        }
    }
    Ok(x)
}

/// `‖u‖^q_{L^q(Ω)}` with the metric volume measure.
pub(crate) fn lq_power_norm(metric: &Metric, region: &RegionPair, u: &GridFunction, q: f64) -> f64 {
    let w = masked_volume_weights(metric, region);
    w.iter()
        .zip(u.values())
        .map(|(&wi, &ui)| wi * ui.abs().powf(q))
        .sum()
}

/// `‖γu‖^r_{L^r(Σ)}` with the metric boundary measure; zero when the trace
/// degree of freedom is inactive.
pub(crate) fn trace_power_norm(
    metric: &Metric,
    region: &RegionPair,
    u: &GridFunction,
    r: f64,
) -> f64 {
    if region.boundary_active() {
        metric.boundary_area() * u.values()[0].abs().powf(r)
    } else {
        0.0
    }
}

/// Scales `u` onto the constraint set `B^{q,r}_b(Ω,Σ)`: returns `k > 0` and
/// `k·u` with `‖ku‖^q_{L^q(Ω)} + b‖γ(ku)‖^r_{L^r(Σ)} = 1`.
pub fn project_to_constraint(
    u: &GridFunction,
    metric: &Metric,
    region: &RegionPair,
    tri: ExponentTriple,
) -> Result<(f64, GridFunction)> {
    let masked = u.masked(region);
    let a = lq_power_norm(metric, region, &masked, tri.q);
    if !(a > 0.0) {
        return Err(Error::TrivialFunction);
    }
    let b_eff = tri.b * trace_power_norm(metric, region, &masked, tri.r);
    let k = unit_root(a, b_eff, tri.q, tri.r)?;
    Ok((k, masked.scale(k)))
}
