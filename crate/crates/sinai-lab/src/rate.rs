//! The rate functional on step specs and envelope pairs.
//!
//! On a step spec the functional is a finite sum: each index contributes
//! `|x_i - x_{i^-}| / h_i^2` weighted `pi^2/2`, except indices in the final
//! same-sign run, which carry `pi^2/8` (one-sided confinement is cheaper than
//! two-sided). On an envelope pair `(f, g)` with half-plane extents
//! `(s_plus, s_minus)` the functional is
//!
//! ```text
//! I = (pi^2/2) int_{(0, s_plus)} t^-2 d(f + g) + (pi^2/8) int_{[s_plus, inf)} t^-2 dg
//! ```
//!
//! when `s_minus` is infinite; when `s_minus` is finite, `f` and `g` are
//! exchanged and `s_plus` is replaced by `s_minus` before applying the same
//! formula. Both routes are evaluated as exact sums over jumps, and they
//! agree exactly on the envelopes of a step spec's occupation measure.
//!
//! Boundary conventions are fixed by that agreement: the first integral is
//! open at the split point, the second closed. A jump at `t = 0` makes the
//! functional infinite; this is represented, not thrown.

use crate::occupation::{envelopes, Extent, OccupationMeasure, StepSpec};
use crate::{PI2_OVER_2, PI2_OVER_8};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("invalid envelopes: {0}")]
    InvalidEnvelopes(String),
    #[error("refinement budget exhausted; achieved gap {achieved} > requested {requested}")]
    NonConvergence { achieved: f64, requested: f64 },
    #[error("rate of the input is not finite")]
    InfiniteRate,
    #[error(transparent)]
    Occupation(#[from] crate::occupation::OccError),
}

/// One summand of the rate: which jump, which coefficient, how much.
#[derive(Clone, Debug, Serialize)]
pub struct RateTerm {
    pub t: f64,
    pub increment: f64,
    /// true when the term carries the one-sided pi^2/8 coefficient
    pub one_sided: bool,
    pub contribution: f64,
}

/// Value of the rate functional with its per-term breakdown.
#[derive(Clone, Debug, Serialize)]
pub struct RateValue {
    pub value: f64,
    pub infinite: bool,
    pub terms: Vec<RateTerm>,
}

impl RateValue {
    pub fn zero() -> Self {
        RateValue { value: 0.0, infinite: false, terms: Vec::new() }
    }

    pub fn infinite() -> Self {
        RateValue { value: f64::INFINITY, infinite: true, terms: Vec::new() }
    }

    fn from_terms(terms: Vec<RateTerm>) -> Self {
        let value = terms.iter().map(|t| t.contribution).sum();
        RateValue { value, infinite: false, terms }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Rate of a step spec via the finite-sum formula.
pub fn rate_of_spec(spec: &StepSpec) -> RateValue {
    let mut terms = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        let inc = (spec.x()[i] - spec.x_minus(i)).abs();
        let one_sided = spec.in_inf_run(i);
        let coef = if one_sided { PI2_OVER_8 } else { PI2_OVER_2 };
        terms.push(RateTerm {
            t: spec.h()[i],
            increment: inc,
            one_sided,
            contribution: coef * inc / (spec.h()[i] * spec.h()[i]),
        });
    }
    RateValue::from_terms(terms)
}

/// Rate of an envelope pair given as jump lists `(t, value_after)` with the
/// half-plane extents. Implements the exchange rule literally: when
/// `s_minus` is finite the pair is swapped and `s_plus` replaced by
/// `s_minus`.
pub fn rate_of_envelopes(
    f_jumps: &[(f64, f64)],
    g_jumps: &[(f64, f64)],
    s_plus: Extent,
    s_minus: Extent,
) -> Result<RateValue, RateError> {
    // Both envelopes contribute pi^2/2 terms before the split point; the
    // envelope whose support extends past the split also contributes pi^2/8
    // tail terms, and the other must not jump at or beyond it.
    let (env_a, env_b, split) = if s_minus.is_infinite() {
        // a = f (head-only), b = g (head + tail), split = s_plus
        (f_jumps, g_jumps, s_plus)
    } else {
        // exchanged: a = g (head-only), b = f (head + tail), split = s_minus
        (g_jumps, f_jumps, s_minus)
    };

    let mut terms = Vec::new();
    let mut infinite = false;
    let mut prev;

    let bound = split.finite();
    // env_a: all jumps must land strictly before the split
    prev = 0.0;
    for &(t, v) in env_a {
        let inc = v - prev;
        prev = v;
        if inc < -1e-12 {
            return Err(RateError::InvalidEnvelopes(format!("envelope decreases at t = {t}")));
        }
        if inc <= 0.0 {
            continue;
        }
        if t <= 0.0 {
            infinite = true;
            continue;
        }
        if let Some(b) = bound {
            if t >= b {
                return Err(RateError::InvalidEnvelopes(format!(
                    "head envelope jumps at t = {t}, at or beyond its support bound {b}"
                )));
            }
        }
        terms.push(RateTerm { t, increment: inc, one_sided: false, contribution: PI2_OVER_2 * inc / (t * t) });
    }
    // env_b: pi^2/2 before the split (open), pi^2/8 from the split on (closed)
    prev = 0.0;
    for &(t, v) in env_b {
        let inc = v - prev;
        prev = v;
        if inc < -1e-12 {
            return Err(RateError::InvalidEnvelopes(format!("envelope decreases at t = {t}")));
        }
        if inc <= 0.0 {
            continue;
        }
        if t <= 0.0 {
            infinite = true;
            continue;
        }
        let one_sided = match bound {
            Some(b) => t >= b,
            None => false,
        };
        let coef = if one_sided { PI2_OVER_8 } else { PI2_OVER_2 };
        terms.push(RateTerm { t, increment: inc, one_sided, contribution: coef * inc / (t * t) });
    }
    if infinite {
        return Ok(RateValue::infinite());
    }
    terms.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(RateValue::from_terms(terms))
}

/// Rate of an occupation measure through its minimal envelopes.
pub fn rate_of_measure(mu: &OccupationMeasure) -> Result<RateValue, RateError> {
    let env = envelopes(mu)?;
    rate_of_envelopes(&env.f_jumps, &env.g_jumps, env.s_plus, env.s_minus)
}

/// Whether the rate value sits in the unit sublevel set. Boundary membership
/// is accepted up to floating round-off.
pub fn in_k(rate: &RateValue) -> bool {
    !rate.infinite && rate.value <= 1.0 + 4.0 * f64::EPSILON
}

/// Step approximation of an envelope pair by refining partitions until the
/// lower Stieltjes sums of `t^-2` against both envelopes are within `delta`
/// of the exact integrals (bracketed by upper sums).
///
/// Inputs are monotone callables on `[0, horizon]` with `f(0) = g(0) = 0`;
/// the measure is taken to sit on the graph of `-g` up to `s_minus` and on
/// the graph of `f` beyond (the shape produced by every step spec whose final
/// run is positive). The returned spec's rate is within `delta` of the
/// input's and its occupation measure is within `delta` of the input's in
/// the local metric.
pub fn step_approximate(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    horizon: f64,
    s_minus: f64,
    delta: f64,
    budget: usize,
) -> Result<(StepSpec, f64), RateError> {
    assert!(delta > 0.0 && horizon > 0.0 && s_minus < horizon);
    let mut n = 8usize;
    let mut last_gap = f64::INFINITY;
    for _ in 0..budget {
        // geometric partitions refine near zero where t^-2 varies fastest
        let (lo_f, up_f) = stieltjes_bracket(f, 1e-9_f64.max(horizon * 1e-9), horizon, n);
        let (lo_g, up_g) = stieltjes_bracket(g, 1e-9_f64.max(horizon * 1e-9), s_minus.max(1e-12), n);
        // gap measured in rate units (both coefficients bounded by pi^2/2)
        last_gap = PI2_OVER_2 * ((up_f - lo_f) + (up_g - lo_g));
        if !last_gap.is_finite() || up_f > 1e12 {
            return Err(RateError::InfiniteRate);
        }
        if last_gap < delta {
            return Ok((build_spec_from_partitions(f, g, horizon, s_minus, n)?, last_gap));
        }
        n *= 2;
        if n > 1 << 22 {
            break;
        }
    }
    Err(RateError::NonConvergence { achieved: last_gap, requested: delta })
}

/// Lower and upper Stieltjes sums of `t^-2` against a nondecreasing `func`
/// over a geometric partition of `[t0, t1]`.
fn stieltjes_bracket(func: &dyn Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> (f64, f64) {
    if t1 <= t0 {
        return (0.0, 0.0);
    }
    let ratio = (t1 / t0).powf(1.0 / n as f64);
    let mut lo = 0.0;
    let mut up = 0.0;
    let mut a = t0;
    // mass below t0 counts fully at weight t0^-2 in the upper sum
    up += func(t0) / (t0 * t0);
    for _ in 0..n {
        let b = (a * ratio).min(t1);
        let df = func(b) - func(a);
        if df < 0.0 {
            return (f64::NAN, f64::NAN);
        }
        lo += df / (b * b); // inf of t^-2 on [a, b]
        up += df / (a * a); // sup of t^-2 on [a, b]
        a = b;
    }
    (lo, up)
}

fn build_spec_from_partitions(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    horizon: f64,
    s_minus: f64,
    n: usize,
) -> Result<StepSpec, RateError> {
    // negative side on (0, s_minus), positive side on (s_minus, horizon];
    // partition points interleave by construction
    let mut h = Vec::new();
    let mut x = Vec::new();
    if s_minus > 0.0 {
        let t0: f64 = 1e-9_f64.max(horizon * 1e-9);
        let ratio = (s_minus / t0).powf(1.0 / n as f64);
        let mut a = t0;
        let mut prev = 0.0;
        for _ in 0..n {
            let b = (a * ratio).min(s_minus * (1.0 - 1e-12));
            let gv = g(b);
            if gv > prev {
                h.push(b);
                x.push(-gv);
                prev = gv;
            }
            a = b;
        }
    }
    {
        let t0 = s_minus.max(1e-9_f64.max(horizon * 1e-9));
        let ratio = (horizon / t0).powf(1.0 / n as f64);
        let mut a = t0;
        let mut prev = 0.0;
        for _ in 0..n {
            let b = (a * ratio).min(horizon);
            let fv = f(b);
            if fv > prev {
                h.push(b);
                x.push(fv);
                prev = fv;
            }
            a = b;
        }
    }
    // sorted and strictly increasing by construction; merge any coincident
    // depths conservatively
    let mut hh = Vec::new();
    let mut xx = Vec::new();
    for (hi, xi) in h.into_iter().zip(x.into_iter()) {
        if let Some(&last) = hh.last() {
            if hi <= last {
                continue;
            }
        }
        hh.push(hi);
        xx.push(xi);
    }
    StepSpec::new(hh, xx).map_err(RateError::Occupation)
}

/// Segment-level shrink identity helper: the rate of the shrunk measure.
pub fn shrink_rate(mu: &OccupationMeasure, eps: f64) -> Result<RateValue, RateError> {
    rate_of_measure(&mu.shrink(eps))
}

/// Random valid step spec (for property tests and the acceptance suite).
pub fn random_spec(rng: &mut impl rand::Rng, max_len: usize) -> StepSpec {
    let n = rng.gen_range(1..=max_len.max(1));
    let mut h = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        t += rng.gen_range(0.2..2.0);
        h.push(t);
    }
    let mut pos_mag = 0.0f64;
    let mut neg_mag = 0.0f64;
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen::<bool>() {
            pos_mag += rng.gen_range(0.1..1.5);
            x.push(pos_mag);
        } else {
            neg_mag += rng.gen_range(0.1..1.5);
            x.push(-neg_mag);
        }
    }
    StepSpec::new(h, x).expect("constructed valid")
}
