//! Restriction sets of environment paths ("vessels"): block schedules that
//! force the well process of a path to track a prescribed step function.
//!
//! A vessel spec pairs a step spec with small positives `(delta, eps)`. Each
//! index contributes confinement / hole / barrier blocks on the wing of its
//! sign; indices in the final same-sign run constrain the reflection of the
//! wing from its running minimum after a fixed anchor, plus a cap forcing the
//! raw path to stay near its value at the block start. Membership of a path
//! is a finite conjunction of window constraints, all checkable exactly on a
//! grid path.
//!
//! The decay rate of the probability that a Brownian path scaled by `M`
//! satisfies all blocks approaches the rate functional of the spec up to an
//! explicit `O(delta, eps)` correction ([`rate_expansion`]); at finite `M`
//! the short barrier windows add `O(1/M)` log-costs
//! ([`barrier_cost_coefficient`]), which dominate until `M` is far beyond
//! Monte Carlo reach for small `delta`. The Monte Carlo driver therefore
//! pre-checks reachability with both terms and refuses hopeless runs.

use crate::env::GridPath;
use crate::occupation::StepSpec;
use crate::rng::SeedTree;
use crate::sim::Stepper;
use crate::stats::{fit_log_decay, McEstimate, RateFit};
use crate::wells::{well_process, WellProcess};
use crate::{PI2_OVER_2, PI2_OVER_8};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VesselError {
    #[error("eps must lie in (0, mesh/2) = (0, {0})")]
    EpsTooLarge(f64),
    #[error("delta and eps must lie in (0, 1)")]
    BadSmallness,
    #[error("eps too large for the hole ladder: needs eps < 1 - h_{{i-1}}/h_i = {0}")]
    EpsLadder(f64),
    #[error("delta too large: block intervals for index {0} overlap")]
    DeltaOverlap(usize),
    #[error("path domain [{0}, {1}] does not cover the blocks (needs [{2}, {3}])")]
    DomainTooSmall(f64, f64, f64, f64),
    #[error("event unreachable at M = {m}: expected hits {expected:.2e} (rate {rate:.3}, barrier cost {barrier:.0}); {hint}")]
    Unreachable { m: f64, expected: f64, rate: f64, barrier: f64, hint: String },
    #[error("{0}")]
    Fit(String),
}

// ---------------------------------------------------------------------------
// Spec and compiled schedule
// ---------------------------------------------------------------------------

/// A step spec with the block smallness parameters.
#[derive(Clone, Debug, Serialize)]
pub struct VesselSpec {
    pub spec: StepSpec,
    pub delta: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Constraint {
    Stay { lo: f64, hi: f64 },
    VisitBelow(f64),
    VisitAbove(f64),
    EndIn { lo: f64, hi: f64 },
}

/// One window constraint on a wing. Times are absolute distances along the
/// wing; `reflected` constraints apply to the wing's reflection from its
/// running minimum after the schedule's anchor.
#[derive(Clone, Debug, Serialize)]
pub struct WingBlock {
    pub wing: i8,
    pub t0: f64,
    pub t1: f64,
    pub constraint: Constraint,
    pub reflected: bool,
    pub label: String,
}

/// Cap constraint: `f(t) - f(base_t) <= tol` on `[t0, t1]` of a wing.
#[derive(Clone, Debug, Serialize)]
pub struct CapConstraint {
    pub wing: i8,
    pub base_t: f64,
    pub t0: f64,
    pub t1: f64,
    pub tol: f64,
}

/// Compiled block schedule of a vessel spec.
#[derive(Clone, Debug, Serialize)]
pub struct Schedule {
    pub blocks: Vec<WingBlock>,
    pub caps: Vec<CapConstraint>,
    /// Wing and time of the reflection anchor, when the final run uses one.
    pub anchor: Option<(i8, f64)>,
    /// Reach of the schedule on each wing (right, left).
    pub reach: (f64, f64),
}

impl VesselSpec {
    pub fn new(spec: StepSpec, delta: f64, eps: f64) -> Result<Self, VesselError> {
        if !(delta > 0.0 && delta < 1.0 && eps > 0.0 && eps < 1.0) {
            return Err(VesselError::BadSmallness);
        }
        if eps >= spec.mesh() / 2.0 {
            return Err(VesselError::EpsTooLarge(spec.mesh() / 2.0));
        }
        for i in 1..spec.len() {
            if !spec.in_inf_run(i) {
                let cap = 1.0 - spec.h()[i - 1] / spec.h()[i];
                if eps >= cap {
                    return Err(VesselError::EpsLadder(cap));
                }
            }
        }
        for i in 0..spec.len() {
            let w = w_of(&spec, i, delta).abs();
            if w * (1.0 + delta) >= spec.x()[i].abs() * (1.0 - delta) {
                return Err(VesselError::DeltaOverlap(i));
            }
        }
        Ok(VesselSpec { spec, delta, eps })
    }

    pub fn w(&self, i: usize) -> f64 {
        w_of(&self.spec, i, self.delta)
    }

    /// Compiles the block schedule.
    pub fn schedule(&self) -> Schedule {
        let spec = &self.spec;
        let (d, e) = (self.delta, self.eps);
        let mut blocks = Vec::new();
        let mut caps = Vec::new();

        // opening blocks on both sides (sentinels when a sign is absent)
        for (xs, hs) in [spec.alpha_sentinel(), spec.beta_sentinel()] {
            let wing = if xs > 0.0 { 1i8 } else { -1 };
            let t = xs.abs() * d;
            push_plain(&mut blocks, wing, 0.0, t, hs, e, "open/confine", None);
            push_barrier(&mut blocks, wing, t, t * (1.0 + d), hs, e, "open/barrier", false);
        }

        let q = spec.inf_start();
        let sigma = if spec.x()[spec.len() - 1] > 0.0 { 1i8 } else { -1 };
        let anchor = (sigma, w_of(spec, q, d).abs() * (1.0 + d));

        for i in 0..spec.len() {
            let xi = spec.x()[i];
            let wing = if xi > 0.0 { 1i8 } else { -1 };
            let hi = spec.h()[i];
            let hip = spec.h_plus(i);
            let w = w_of(spec, i, d).abs();
            let t_c0 = w * (1.0 + d);
            let t_c1 = xi.abs() * (1.0 - d);
            let t_h1 = xi.abs();
            let t_b1 = xi.abs() * (1.0 + d);
            let tag = format!("E{}", i + 1);
            if !spec.in_inf_run(i) {
                push_plain(&mut blocks, wing, t_c0, t_c1, hi, e, &format!("{tag}/confine"), None);
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::Stay { lo: -e * hi, hi },
                    reflected: false,
                    label: format!("{tag}/hole-stay"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::VisitBelow(-e * hi + e * e * hi),
                    reflected: false,
                    label: format!("{tag}/hole-visit"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::EndIn { lo: 0.0, hi: (1.0 - e) * hi },
                    reflected: false,
                    label: format!("{tag}/hole-end"),
                });
                push_barrier(&mut blocks, wing, t_h1, t_b1, hip, e, &format!("{tag}/barrier"), false);
            } else {
                // reflected blocks, anchored at the start of the final run
                blocks.push(WingBlock {
                    wing,
                    t0: t_c0,
                    t1: t_c1,
                    constraint: Constraint::Stay { lo: -e * e * hi, hi },
                    reflected: true,
                    label: format!("{tag}/confine^R"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c0,
                    t1: t_c1,
                    constraint: Constraint::EndIn { lo: 0.0, hi: (1.0 - e) * hi },
                    reflected: true,
                    label: format!("{tag}/confine^R-end"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::Stay { lo: 0.0, hi },
                    reflected: true,
                    label: format!("{tag}/hole^R-stay"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::VisitBelow(0.0),
                    reflected: true,
                    label: format!("{tag}/hole^R-visit"),
                });
                blocks.push(WingBlock {
                    wing,
                    t0: t_c1,
                    t1: t_h1,
                    constraint: Constraint::EndIn { lo: 0.0, hi: (1.0 - e) * hi },
                    reflected: true,
                    label: format!("{tag}/hole^R-end"),
                });
                push_barrier(&mut blocks, wing, t_h1, t_b1, hip, e, &format!("{tag}/barrier^R"), true);
                caps.push(CapConstraint {
                    wing,
                    base_t: t_c0,
                    t0: t_c0,
                    t1: t_b1,
                    tol: e * e,
                });
            }
        }

        let mut reach = (0.0f64, 0.0f64);
        for b in &blocks {
            if b.wing > 0 {
                reach.0 = reach.0.max(b.t1);
            } else {
                reach.1 = reach.1.max(b.t1);
            }
        }
        Schedule { blocks, caps, anchor: Some(anchor), reach }
    }

    /// The explicit finite-(delta, eps) decay rate of the block construction
    /// (positive). Converges to the spec's rate functional as
    /// `delta, eps -> 0`.
    pub fn rate_expansion(&self) -> f64 {
        let spec = &self.spec;
        let (d, e) = (self.delta, self.eps);
        let mut total = 0.0;
        for (xs, hs) in [spec.alpha_sentinel(), spec.beta_sentinel()] {
            total += PI2_OVER_2 * (xs.abs() * d / (hs * hs))
                * (1.0 / (1.0 + e * e).powi(2) + d / (1.0 + e + e * e).powi(2));
        }
        for i in 0..spec.len() {
            let xi = spec.x()[i];
            let wi = self.w(i);
            let hi = spec.h()[i];
            let hip = spec.h_plus(i);
            if !spec.in_inf_run(i) {
                total += PI2_OVER_2
                    * ((xi - wi - d * (xi + wi)).abs() / (hi * hi * (1.0 + e * e).powi(2))
                        + d * xi.abs() / (hi * hi * (1.0 + e).powi(2))
                        + d * xi.abs() / (hip * hip * (1.0 + e + e * e).powi(2)));
            } else {
                total += PI2_OVER_8
                    * ((xi - wi - d * wi).abs() / (hi * hi)
                        + d * xi.abs() / (hip * hip * (1.0 + e).powi(2)));
            }
        }
        total
    }

    /// Order-of-magnitude coefficient of the `1/M` log-cost from the short
    /// barrier and hole windows (`sum H^2 / (2 window)`), used by the Monte
    /// Carlo preflight and the inverse-term fit.
    pub fn barrier_cost_coefficient(&self) -> f64 {
        let spec = &self.spec;
        let (d, e) = (self.delta, self.eps);
        let mut c = 0.0;
        for (xs, hs) in [spec.alpha_sentinel(), spec.beta_sentinel()] {
            c += hs * hs / (2.0 * xs.abs() * d * d);
        }
        for i in 0..spec.len() {
            let xi = spec.x()[i].abs();
            let hi = spec.h()[i];
            let hip = spec.h_plus(i);
            c += hip * hip / (2.0 * xi * d); // closing barrier
            if !spec.in_inf_run(i) {
                c += (e * hi) * (e * hi) / (2.0 * xi * d); // hole dip
            } else {
                c += ((1.0 - e) * hi).powi(2) / (2.0 * xi * d); // descent to the floor
            }
        }
        c
    }
}

fn w_of(spec: &StepSpec, i: usize, delta: f64) -> f64 {
    let is_first_of_sign = spec.alpha() == Some(i) || spec.beta() == Some(i);
    if is_first_of_sign {
        spec.x()[i] * delta
    } else {
        spec.x_minus(i)
    }
}

fn push_plain(
    blocks: &mut Vec<WingBlock>,
    wing: i8,
    t0: f64,
    t1: f64,
    h: f64,
    e: f64,
    label: &str,
    _anchor: Option<()>,
) {
    blocks.push(WingBlock {
        wing,
        t0,
        t1,
        constraint: Constraint::Stay { lo: -e * e * h, hi: h },
        reflected: false,
        label: label.to_string(),
    });
    blocks.push(WingBlock {
        wing,
        t0,
        t1,
        constraint: Constraint::EndIn { lo: 0.0, hi: (1.0 - e) * h },
        reflected: false,
        label: format!("{label}-end"),
    });
}

fn push_barrier(
    blocks: &mut Vec<WingBlock>,
    wing: i8,
    t0: f64,
    t1: f64,
    h: f64,
    e: f64,
    label: &str,
    reflected: bool,
) {
    let lo = if reflected { 0.0 } else { -e * e * h };
    blocks.push(WingBlock {
        wing,
        t0,
        t1,
        constraint: Constraint::Stay { lo, hi: h + e * h },
        reflected,
        label: label.to_string(),
    });
    blocks.push(WingBlock {
        wing,
        t0,
        t1,
        constraint: Constraint::VisitAbove(h),
        reflected,
        label: format!("{label}-visit"),
    });
    blocks.push(WingBlock {
        wing,
        t0,
        t1,
        constraint: Constraint::EndIn { lo: 0.0, hi: (1.0 - e) * h },
        reflected,
        label: format!("{label}-end"),
    });
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub ok: bool,
    pub first_violation: Option<String>,
    pub checks: Vec<(String, bool)>,
}

/// Values of a wing over a window, including interpolated endpoints.
fn wing_extrema(path: &GridPath, wing: i8, t0: f64, t1: f64) -> (f64, f64) {
    let (a, b) = if wing > 0 { (t0, t1) } else { (-t1, -t0) };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in [path.value_at(a), path.value_at(b)] {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let dt = path.dt();
    let i0 = ((a - path.t_min()) / dt).ceil().max(0.0) as usize;
    let i1 = (((b - path.t_min()) / dt).floor() as usize).min(path.values().len() - 1);
    for i in i0..=i1 {
        let v = path.values()[i];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Reflection of a wing from its running minimum after the anchor, returned
/// as a sampler over wing times.
struct ReflectedWing {
    /// R value at each vertex from the anchor onward, plus the vertex times.
    times: Vec<f64>,
    r: Vec<f64>,
    anchor: f64,
}

impl ReflectedWing {
    fn new(path: &GridPath, wing: i8, anchor: f64) -> ReflectedWing {
        let dt = path.dt();
        let end = if wing > 0 { path.t_max() } else { path.left_n() as f64 * dt };
        let mut times = vec![anchor];
        let mut vals = vec![path.value_at(if wing > 0 { anchor } else { -anchor })];
        let mut t = (anchor / dt).floor() * dt + dt;
        while t <= end + 1e-12 {
            times.push(t);
            vals.push(path.value_at(if wing > 0 { t } else { -t }));
            t += dt;
        }
        let mut r = Vec::with_capacity(vals.len());
        let mut m = f64::INFINITY;
        for &v in &vals {
            m = m.min(v);
            r.push(v - m);
        }
        ReflectedWing { times, r, anchor }
    }

    /// (min, max) of R over [t0, t1] (vertex resolution plus endpoints by
    /// linear interpolation of R, exact off the running minimum).
    fn extrema(&self, t0: f64, t1: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let eval = |t: f64| -> f64 {
            let i = self.times.partition_point(|&s| s <= t);
            if i == 0 {
                return self.r[0];
            }
            if i >= self.times.len() {
                return *self.r.last().unwrap();
            }
            let (ta, tb) = (self.times[i - 1], self.times[i]);
            let w = (t - ta) / (tb - ta);
            self.r[i - 1] * (1.0 - w) + self.r[i] * w
        };
        for v in [eval(t0.max(self.anchor)), eval(t1)] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for (i, &t) in self.times.iter().enumerate() {
            if t >= t0 - 1e-12 && t <= t1 + 1e-12 {
                lo = lo.min(self.r[i]);
                hi = hi.max(self.r[i]);
            }
        }
        (lo, hi)
    }

    fn value(&self, t: f64) -> f64 {
        let (lo, _) = self.extrema(t, t);
        lo
    }
}

/// Evaluates every block of the schedule on a grid path.
pub fn vessel_membership(path: &GridPath, vspec: &VesselSpec) -> Result<MembershipReport, VesselError> {
    let schedule = vspec.schedule();
    let (need_r, need_l) = schedule.reach;
    if path.t_max() < need_r - 1e-9 || -path.t_min() < need_l - 1e-9 {
        return Err(VesselError::DomainTooSmall(path.t_min(), path.t_max(), -need_l, need_r));
    }
    let refl = schedule
        .anchor
        .map(|(wing, t)| (wing, ReflectedWing::new(path, wing, t)));

    let mut checks = Vec::with_capacity(schedule.blocks.len() + schedule.caps.len());
    let mut first = None;
    for b in &schedule.blocks {
        let ok = if b.reflected {
            let (wing, rw) = refl.as_ref().expect("anchored schedule");
            debug_assert_eq!(*wing, b.wing);
            let (lo, hi) = rw.extrema(b.t0, b.t1);
            match b.constraint {
                Constraint::Stay { lo: clo, hi: chi } => lo >= clo - 1e-12 && hi <= chi + 1e-12,
                Constraint::VisitBelow(level) => lo <= level.max(1e-12),
                Constraint::VisitAbove(level) => hi > level,
                Constraint::EndIn { lo: clo, hi: chi } => {
                    let v = rw.value(b.t1);
                    v >= clo - 1e-12 && v <= chi + 1e-12
                }
            }
        } else {
            let (lo, hi) = wing_extrema(path, b.wing, b.t0, b.t1);
            match b.constraint {
                Constraint::Stay { lo: clo, hi: chi } => lo >= clo && hi <= chi,
                Constraint::VisitBelow(level) => lo < level,
                Constraint::VisitAbove(level) => hi > level,
                Constraint::EndIn { lo: clo, hi: chi } => {
                    let v = path.value_at(if b.wing > 0 { b.t1 } else { -b.t1 });
                    v >= clo && v <= chi
                }
            }
        };
        if !ok && first.is_none() {
            first = Some(b.label.clone());
        }
        checks.push((b.label.clone(), ok));
    }
    for c in &schedule.caps {
        let base = path.value_at(if c.wing > 0 { c.base_t } else { -c.base_t });
        let (_, hi) = wing_extrema(path, c.wing, c.t0, c.t1);
        let ok = hi <= base + c.tol + 1e-12;
        if !ok && first.is_none() {
            first = Some(format!("cap after {}", c.base_t));
        }
        checks.push((format!("cap@{}", c.base_t), ok));
    }
    Ok(MembershipReport { ok: first.is_none(), first_violation: first, checks })
}

// ---------------------------------------------------------------------------
// Witness construction
// ---------------------------------------------------------------------------

/// Builds a piecewise-linear path satisfying every block with margin
/// `eps^2 min(h) / 4`.
pub fn construct_witness(vspec: &VesselSpec) -> Result<GridPath, VesselError> {
    let spec = &vspec.spec;
    let (d, e) = (vspec.delta, vspec.eps);
    let margin = e * e * spec.h()[0] / 4.0;

    // the grid must resolve the narrowest window; snap every waypoint to it
    let mut min_window = f64::INFINITY;
    for (xs, _) in [spec.alpha_sentinel(), spec.beta_sentinel()] {
        min_window = min_window.min(xs.abs() * d * d);
    }
    for i in 0..spec.len() {
        min_window = min_window.min(spec.x()[i].abs() * d);
    }
    let dt = min_window / 8.0;
    let snap = |t: f64| (t / dt).round() * dt;

    let sigma = if spec.x()[spec.len() - 1] > 0.0 { 1i8 } else { -1 };
    let q = spec.inf_start();

    let mut wings: [Vec<(f64, f64)>; 2] = [vec![(0.0, 0.0)], vec![(0.0, 0.0)]]; // [right, left]
    let wing_ix = |w: i8| if w > 0 { 0usize } else { 1 };

    // opening corridor + barrier on both sides
    for (xs, hs) in [spec.alpha_sentinel(), spec.beta_sentinel()] {
        let w = if xs > 0.0 { 1i8 } else { -1 };
        let pts = &mut wings[wing_ix(w)];
        let t_c = snap(xs.abs() * d);
        let t_b = snap(xs.abs() * d * (1.0 + d));
        pts.push((t_c, margin));
        pts.push((snap(0.5 * (t_c + t_b)), hs + margin));
        pts.push((t_b, margin));
    }

    for i in 0..spec.len() {
        let xi = spec.x()[i];
        let w = if xi > 0.0 { 1i8 } else { -1 };
        let hi = spec.h()[i];
        let hip = spec.h_plus(i);
        let t_c1 = snap(xi.abs() * (1.0 - d));
        let t_h1 = snap(xi.abs());
        let t_b1 = snap(xi.abs() * (1.0 + d));
        let pts = &mut wings[wing_ix(w)];
        let last_v = pts.last().unwrap().1;
        if !spec.in_inf_run(i) {
            // hold through the corridor, dip in the hole, spike at the barrier
            pts.push((t_c1, last_v));
            pts.push((snap(0.5 * (t_c1 + t_h1)), -e * hi + e * e * hi - margin));
            pts.push((t_h1, margin));
            pts.push((snap(0.5 * (t_h1 + t_b1)), hip + margin));
            pts.push((t_b1, margin));
        } else {
            // descending staircase under the cap; the reflection does the
            // rest. The minimum must not drift past |x_i| under snapping, so
            // its time rounds down.
            let cap = last_v + e * e;
            let peak = cap - margin;
            let floor = peak - (hip + margin);
            let t_bot = (xi.abs() / dt).floor() * dt;
            pts.push((t_bot, floor));
            pts.push((snap(0.5 * (t_h1 + t_b1)), peak));
            pts.push((t_b1, floor + margin));
        }
        let _ = (sigma, q);
    }

    // close both wings with a short strictly-descending tail
    for pts in wings.iter_mut() {
        let (t, v) = *pts.last().unwrap();
        pts.push((t + 4.0 * dt, v - margin / 2.0));
    }

    // assemble: left wing mirrored to negative times
    let mut way: Vec<(f64, f64)> = wings[1].iter().rev().map(|&(t, v)| (-t, v)).collect();
    way.extend(wings[0].iter().copied());
    way.dedup_by(|a, b| (a.0 - b.0).abs() < dt * 1e-6);
    let path = GridPath::from_waypoints(dt, &way).expect("witness waypoints are valid");
    Ok(path)
}

// ---------------------------------------------------------------------------
// The profile of the well process over a member path
// ---------------------------------------------------------------------------

/// Sup of increments of the path in the direction away from the origin:
/// `sup f(t) - f(s)` over `x <= s <= t <= y` (or the mirrored order when
/// `x >= y`).
pub fn directed_variation(path: &GridPath, x: f64, y: f64) -> f64 {
    let dt = path.dt();
    let (a, b) = (x.min(y), x.max(y));
    let mut ts = vec![a];
    let mut t = (a / dt).floor() * dt + dt;
    while t < b {
        ts.push(t);
        t += dt;
    }
    ts.push(b);
    let vals: Vec<f64> = ts.iter().map(|&t| path.value_at(t)).collect();
    let mut best: f64 = 0.0;
    if x <= y {
        let mut run_min = f64::INFINITY;
        for &v in &vals {
            run_min = run_min.min(v);
            best = best.max(v - run_min);
        }
    } else {
        let mut run_min = f64::INFINITY;
        for &v in vals.iter().rev() {
            run_min = run_min.min(v);
            best = best.max(v - run_min);
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct VProfile {
    pub h_tilde_1: f64,
    pub z_1: f64,
    /// `v_1 ... v_{N+1}`
    pub v: Vec<f64>,
    /// per-index (lo, hi, ok) of the depth bracket containing each `v_i`
    pub brackets: Vec<(f64, f64, bool)>,
}

/// Computes the observed jump depths `v_i` of the well process of a member
/// path and checks each against its depth bracket.
pub fn v_profile(path: &GridPath, vspec: &VesselSpec) -> VProfile {
    let spec = &vspec.spec;
    let (d, e) = (vspec.delta, vspec.eps);
    let n = spec.len();
    let x = spec.x();
    let h = spec.h();

    let x1 = x[0];
    // index of the later-starting sign (sentinel when only one sign occurs)
    let ab_x = match (spec.alpha(), spec.beta()) {
        (Some(a), Some(b)) => x[a.max(b)],
        _ => spec.x_inf(),
    };
    let ab_h = match (spec.alpha(), spec.beta()) {
        (Some(a), Some(b)) => h[a.max(b)],
        _ => spec.h_inf(),
    };

    // max of the path between 0 and x_1 d(1+d)
    let lim1 = x1 * d * (1.0 + d);
    let htilde = {
        let (_, hi) = wing_extrema(path, if x1 > 0.0 { 1 } else { -1 }, 0.0, lim1.abs());
        hi
    };
    // closest-to-zero point on the other opening side where the path attains htilde
    let lim2 = ab_x * d * (1.0 + d);
    let z1 = first_attainment(path, lim2, htilde);
    // v_1: htilde minus the minimum between z_1 and x_1 d(1+d)
    let v1 = {
        let lo = z1.min(lim1);
        let hi = z1.max(lim1);
        let dt = path.dt();
        let mut m = path.value_at(lo).min(path.value_at(hi));
        let mut t = (lo / dt).floor() * dt + dt;
        while t < hi {
            m = m.min(path.value_at(t));
            t += dt;
        }
        htilde - m
    };

    let sigma = if x[n - 1] > 0.0 { 1i8 } else { -1 };
    let q = spec.inf_start();
    let anchor = w_of(spec, q, d).abs() * (1.0 + d);
    let refl = ReflectedWing::new(path, sigma, anchor);

    let mut v = vec![v1];
    for i in 1..n {
        let vi = match spec.i_minus(i) {
            Some(im) if spec.in_inf_run(im) => {
                let t0 = x[im].abs();
                let t1 = x[im].abs() * (1.0 + d);
                refl.extrema(t0, t1).1
            }
            _ => {
                let is_ab = x[i].signum() != x[i - 1].signum()
                    && (spec.alpha() == Some(i) || spec.beta() == Some(i));
                if is_ab {
                    directed_variation(path, x[i - 1], x[i] * d * (1.0 + d))
                } else {
                    match spec.i_minus(i) {
                        Some(im) if im == i - 1 => {
                            directed_variation(path, x[i - 1] * (1.0 - d), x[i - 1] * (1.0 + d))
                        }
                        Some(im) => directed_variation(path, x[i - 1], x[im] * (1.0 + d)),
                        None => directed_variation(path, x[i - 1], x[i] * d * (1.0 + d)),
                    }
                }
            }
        };
        v.push(vi);
    }
    v.push(spec.h_inf());

    let mut brackets = Vec::with_capacity(n);
    for (i, &vi) in v.iter().take(n).enumerate() {
        let (lo, hi_b) = if i == 0 {
            (h[0], h[0] + e * (h[0] + e * ab_h))
        } else {
            let im = spec.i_minus(i);
            match im {
                Some(j) if spec.in_inf_run(j) => (h[i], h[i] + e * h[i]),
                _ => (h[i] + (e - e * e) * h[i - 1], h[i] + e * (h[i] + h[i - 1])),
            }
        };
        let ok = vi >= lo - 1e-9 && vi <= hi_b + 1e-9;
        brackets.push((lo, hi_b, ok));
    }
    VProfile { h_tilde_1: htilde, z_1: z1, v, brackets }
}

/// Closest-to-zero point between 0 and `lim` where the path attains `level`
/// (by linear interpolation along the wing of `lim`'s sign).
fn first_attainment(path: &GridPath, lim: f64, level: f64) -> f64 {
    let dt = path.dt();
    let sign = lim.signum();
    let mut t_prev = 0.0;
    let mut v_prev = path.value_at(0.0);
    let mut t = dt;
    while t <= lim.abs() + 1e-12 {
        let tt = sign * t;
        let v = path.value_at(tt.min(lim.abs()) * sign);
        if (v_prev - level) * (v - level) <= 0.0 && (v - v_prev).abs() > 0.0 {
            let w = (level - v_prev) / (v - v_prev);
            return sign * (t_prev + w * (t - t_prev));
        }
        t_prev = t;
        v_prev = v;
        t += dt;
    }
    sign * lim.abs()
}

// ---------------------------------------------------------------------------
// Closeness to the step function
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SkorokhodReport {
    pub distance: f64,
    /// The explicit `O(delta + eps)` bound the distance is checked against.
    pub bound: f64,
    pub xvariation_ok: bool,
}

/// Restricted Skorokhod distance between the path's well process and the
/// spec's step function on `[0, 2 h_N]`, via a time change through matched
/// jumps (an upper bound for the true infimum), plus the location sandwich
/// checks.
pub fn skorokhod_closeness(path: &GridPath, vspec: &VesselSpec) -> SkorokhodReport {
    let spec = &vspec.spec;
    let (d, e) = (vspec.delta, vspec.eps);
    let window = spec.h_inf();
    let wp = well_process(path);
    let phi = spec.step_function();

    // candidate 1: identity time change
    let mut dist = sup_diff(&wp, &phi, window, &|t| t);

    // candidate 2: a time change through matched jump starts. The k-th piece
    // of the well process holds its location on (start_k, end_k]; map the
    // start of the piece carrying a value near x_i to the spec depth h_i.
    let mut pieces: Vec<(f64, f64)> = Vec::new(); // (start, value)
    {
        let mut start = 0.0;
        for j in &wp.jumps {
            pieces.push((start, j.location));
            start = j.depth;
        }
    }
    let mut knots = vec![(0.0, 0.0)];
    let mut matched = 0usize;
    for (i, &xi) in spec.x().iter().enumerate() {
        let hit = pieces.iter().find(|(st, v)| {
            *st > 0.0
                && *st < window
                && v.signum() == xi.signum()
                && (v.abs() - xi.abs()).abs() <= 2.0 * d * xi.abs() + 1e-9
        });
        if let Some(&(st, _)) = hit {
            knots.push((st, spec.h()[i]));
            matched += 1;
        }
    }
    if matched == spec.len() {
        knots.push((window, window));
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            let kn = knots.clone();
            let lam = move |t: f64| -> f64 {
                let i = kn.partition_point(|&(a, _)| a <= t).min(kn.len() - 1).max(1);
                let (a, fa) = kn[i - 1];
                let (b, fb) = kn[i];
                fa + (fb - fa) * (t - a) / (b - a)
            };
            let time_shift = knots.iter().map(|&(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            let vdist = sup_diff(&wp, &phi, window, &lam);
            dist = dist.min(time_shift.max(vdist));
        }
    }

    let abs_max = spec.x().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let bound = d * (1.0 + d) * abs_max + d * abs_max + 2.0 * e * spec.h()[spec.len() - 1];

    // location sandwich: near-zero on (0, v_1], inside [x_i (1-d), x_i] on
    // each later profile window; checked piecewise on the merged partition
    let prof = v_profile(path, vspec);
    let near_bound = d * (1.0 + d)
        * spec
            .alpha_sentinel()
            .0
            .abs()
            .max(spec.beta_sentinel().0.abs());
    let mut cuts: Vec<f64> = prof.v.clone();
    for j in &wp.jumps {
        if j.depth < window {
            cuts.push(j.depth);
        }
    }
    cuts.push(0.0);
    cuts.push(window);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut ok = true;
    for w in cuts.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        if t <= 0.0 || t > window {
            continue;
        }
        // the observed jump depths and the profile depths are two near-exact
        // computations of the same flanks; gaps below the grid scale between
        // them carry no content
        if w[1] - w[0] < 1e-6 {
            continue;
        }
        let x = wp.eval(t);
        let loc_ok = if t <= prof.v[0] {
            x.abs() <= near_bound + 1e-9
        } else {
            let mut good = false;
            for i in 0..spec.len() {
                if t > prof.v[i] && t <= prof.v[i + 1] + 1e-12 {
                    let xi = spec.x()[i];
                    let lo = xi.min(xi * (1.0 - d)) - 1e-9;
                    let hi = xi.max(xi * (1.0 - d)) + 1e-9;
                    good = x >= lo && x <= hi;
                }
            }
            good
        };
        if !loc_ok {
            ok = false;
        }
    }

    SkorokhodReport { distance: dist, bound, xvariation_ok: ok }
}

fn sup_diff(wp: &WellProcess, phi: &crate::occupation::StepFunction, window: f64, lam: &dyn Fn(f64) -> f64) -> f64 {
    // evaluate |x(t) - phi(lam(t))| over merged breakpoints
    let mut cuts: Vec<f64> = vec![0.0, window];
    for j in &wp.jumps {
        if j.depth < window {
            cuts.push(j.depth);
        }
    }
    for &(t, _) in phi.jumps() {
        if t < window {
            cuts.push(t); // compare in the target's own clock as well
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut sup = 0.0f64;
    for w in cuts.windows(2) {
        for frac in [0.25, 0.75] {
            let t = w[0] + (w[1] - w[0]) * frac;
            let a = wp.eval(t);
            let b = phi.eval(lam(t));
            sup = sup.max((a - b).abs());
        }
    }
    sup
}

// ---------------------------------------------------------------------------
// Monte Carlo for the full restriction event
// ---------------------------------------------------------------------------

/// Direct Monte Carlo estimate of `P(B(M .) in the restriction set)` over a
/// grid of scales, with early abort, fitted with an explicit `1/M` term for
/// the short-window barrier costs.
///
/// The preflight estimates the expected hit count at the largest scale from
/// `rate_expansion` and `barrier_cost_coefficient`; hopeless configurations
/// are refused rather than run.
pub fn mc_vessel_prob(
    vspec: &VesselSpec,
    m_grid: &[f64],
    n_samples: u64,
    dt: f64,
    seeds: &SeedTree,
    label: &str,
) -> Result<RateFit, VesselError> {
    let rate = vspec.rate_expansion();
    let barrier = vspec.barrier_cost_coefficient();
    let mut worst_expected = f64::INFINITY;
    let mut worst_m = 0.0;
    for &m in m_grid {
        let nats = rate * m + barrier / m;
        let expected = n_samples as f64 * (-nats).exp();
        if expected < worst_expected {
            worst_expected = expected;
            worst_m = m;
        }
    }
    if worst_expected < 100.0 {
        return Err(VesselError::Unreachable {
            m: worst_m,
            expected: worst_expected,
            rate,
            barrier,
            hint: "increase delta/eps or samples, or use smaller scales".into(),
        });
    }

    let mut pts = Vec::with_capacity(m_grid.len());
    for (gi, &m) in m_grid.iter().enumerate() {
        let est = mc_vessel_point(vspec, m, n_samples, dt, seeds, &format!("{label}/m{gi}"));
        pts.push((m, est));
    }
    fit_log_decay(&pts, true, label).map_err(VesselError::Fit)
}

/// One-scale direct estimate with early abort.
pub fn mc_vessel_point(
    vspec: &VesselSpec,
    m_scale: f64,
    n_samples: u64,
    dt: f64,
    seeds: &SeedTree,
    label: &str,
) -> McEstimate {
    let schedule = vspec.schedule();
    let monitors = [compile_monitor(&schedule, 1, m_scale, dt), compile_monitor(&schedule, -1, m_scale, dt)];
    const CHUNK: u64 = 256;
    let n_chunks = (n_samples + CHUNK - 1) / CHUNK;
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut count = 0u64;
            for s in ci * CHUNK..((ci + 1) * CHUNK).min(n_samples) {
                let mut ok = true;
                for (wi, mon) in monitors.iter().enumerate() {
                    let mut rng = seeds.stream2(label, s, wi as u64);
                    let mut drv = RngDriver(&mut rng);
                    if !run_monitor(mon, dt, &mut drv) {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    count += 1;
                }
            }
            count
        })
        .sum();
    McEstimate::from_hits(hits, n_samples, seeds.master(), format!("{label} M={m_scale}"))
}

/// Step-indexed constraint windows for one wing at one scale.
#[derive(Clone, Debug)]
struct Monitor {
    /// (start_step, end_step, constraint, reflected)
    windows: Vec<(usize, usize, Constraint, bool)>,
    caps: Vec<(usize, usize, usize, f64)>, // (base_step, t0_step, t1_step, tol)
    anchor_step: Option<usize>,
    total_steps: usize,
}

fn compile_monitor(schedule: &Schedule, wing: i8, m_scale: f64, dt: f64) -> Monitor {
    let to_step = |t: f64| ((t * m_scale) / dt).round() as usize;
    let mut windows: Vec<(usize, usize, Constraint, bool)> = schedule
        .blocks
        .iter()
        .filter(|b| b.wing == wing)
        .map(|b| (to_step(b.t0), to_step(b.t1), b.constraint, b.reflected))
        .collect();
    windows.sort_by_key(|w| w.0);
    let caps = schedule
        .caps
        .iter()
        .filter(|c| c.wing == wing)
        .map(|c| (to_step(c.base_t), to_step(c.t0), to_step(c.t1), c.tol))
        .collect();
    let anchor_step = schedule.anchor.and_then(|(w, t)| (w == wing).then(|| to_step(t)));
    let total_steps = windows.iter().map(|w| w.1).max().unwrap_or(0);
    Monitor { windows, caps, anchor_step, total_steps }
}

/// Randomness source for the monitor: Euler increments plus the uniforms
/// consumed by bridge corrections.
trait StepDriver {
    fn increment(&mut self, s: &Stepper) -> f64;
    fn uniform(&mut self) -> f64;
}

struct RngDriver<'a>(&'a mut rand_chacha::ChaCha8Rng);

impl StepDriver for RngDriver<'_> {
    fn increment(&mut self, s: &Stepper) -> f64 {
        s.increment(self.0)
    }
    fn uniform(&mut self) -> f64 {
        self.0.gen()
    }
}

/// Replays a fixed value sequence with bridge draws disabled (uniform 1
/// never triggers a crossing and reproduces endpoint minima exactly), so the
/// monitor's verdict must agree with the membership evaluator on the same
/// polyline.
struct ReplayDriver<'a> {
    values: &'a [f64],
    pos: usize,
}

impl StepDriver for ReplayDriver<'_> {
    fn increment(&mut self, _s: &Stepper) -> f64 {
        let prev = if self.pos == 0 { 0.0 } else { self.values[self.pos - 1] };
        let next = *self.values.get(self.pos).unwrap_or(self.values.last().unwrap());
        self.pos += 1;
        next - prev
    }
    fn uniform(&mut self) -> f64 {
        1.0
    }
}

/// Simulates one wing against its monitor; true iff every window holds.
fn run_monitor<D: StepDriver>(mon: &Monitor, dt: f64, drv: &mut D) -> bool {
    let s = Stepper::new(dt);
    let mut b = 0.0f64;
    let mut bmin = f64::INFINITY; // running min after the anchor
    let mut cap_active: Option<(usize, f64)> = None; // (end_step, cap_value)
    let mut visited: Vec<bool> = vec![false; mon.windows.len()];
    let mut cap_ix = 0usize;

    for step in 0..mon.total_steps {
        if Some(step) == mon.anchor_step {
            bmin = b;
        }
        while cap_ix < mon.caps.len() && mon.caps[cap_ix].0 == step {
            cap_active = Some((mon.caps[cap_ix].2, b + mon.caps[cap_ix].3));
            cap_ix += 1;
        }
        let b1 = b + drv.increment(&s);
        let cell_min = s.bridge_min(b, b1, drv.uniform());
        let new_min = if bmin.is_finite() { cell_min.min(bmin) } else { bmin };
        let (r0, r1) = if bmin.is_finite() { (b - bmin, b1 - new_min) } else { (0.0, 0.0) };

        if let Some((end, cap)) = cap_active {
            if step < end {
                if b1 > cap || drv.uniform() < s.upper_crossing(cap, b, b1) {
                    return false;
                }
            } else {
                cap_active = None;
            }
        }

        for (wi, w) in mon.windows.iter().enumerate() {
            if step < w.0 || step >= w.1 {
                continue;
            }
            let last_step_of_window = step + 1 == w.1;
            match (w.2, w.3) {
                (Constraint::Stay { lo, hi }, false) => {
                    if b1 <= lo || b1 >= hi || cell_min <= lo {
                        return false;
                    }
                    if drv.uniform() < s.upper_crossing(hi, b, b1) {
                        return false;
                    }
                }
                (Constraint::Stay { hi, .. }, true) => {
                    if r1 >= hi || drv.uniform() < s.upper_crossing(bmin + hi, b, b1) {
                        return false;
                    }
                }
                (Constraint::VisitBelow(level), false) => {
                    if !visited[wi] && (b1 < level || cell_min < level) {
                        visited[wi] = true;
                    }
                    if last_step_of_window && !visited[wi] {
                        return false;
                    }
                }
                (Constraint::VisitBelow(_), true) => {
                    // reflected visit to zero: touching the running minimum
                    if !visited[wi] && cell_min <= bmin {
                        visited[wi] = true;
                    }
                    if last_step_of_window && !visited[wi] {
                        return false;
                    }
                }
                (Constraint::VisitAbove(level), refl) => {
                    let v1 = if refl { r1 } else { b1 };
                    let v0 = if refl { r0 } else { b };
                    if !visited[wi]
                        && (v1 > level || drv.uniform() < s.upper_crossing(level, v0, v1))
                    {
                        visited[wi] = true;
                    }
                    if last_step_of_window && !visited[wi] {
                        return false;
                    }
                }
                (Constraint::EndIn { lo, hi }, refl) => {
                    if last_step_of_window {
                        let v = if refl { r1 } else { b1 };
                        if !(v >= lo && v <= hi) {
                            return false;
                        }
                    }
                }
            }
        }
        if bmin.is_finite() {
            bmin = new_min;
        }
        b = b1;
    }
    true
}
