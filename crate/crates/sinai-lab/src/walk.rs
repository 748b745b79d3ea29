//! Nearest-neighbor walks in a step potential, exponential-time rescaling,
//! localization against the potential's well process, weighted path
//! integrals, and the hitting-time machinery of the diffusion embedding.
//!
//! The walk steps right from site `k` with probability `p_k`. Its position at
//! time `n` concentrates near the bottom of the potential's minimal well of
//! depth `log n` containing the origin, which is exactly the well-process
//! machinery of [`crate::wells`] applied to the potential landscape.
//!
//! The embedding clock is the first hitting time `T` of 1 by reflected
//! Brownian motion (mean one, `-pi^2/8` tail); consecutive embedded steps are
//! separated by iid copies of `T`.

use crate::env::{extend_potential, EnvDistribution, StepPotential};
use crate::lp;
use crate::rng::SeedTree;
use crate::stats::{normal_cdf, McEstimate};
use crate::wells::{well_process, WellProcess};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("potential too narrow: walk needs at least {needed} sites per side, got {got}")]
    PotentialTooNarrow { needed: i64, got: i64 },
    #[error("walk reached the edge of the potential at site {0}; widen the environment")]
    HitBoundary(i64),
    #[error("checkpoint schedule does not contain n = {0}; regenerate the trajectory")]
    MissingCheckpoint(u64),
    #[error("scale must satisfy e < a <= log(n_max) = {0}")]
    BadScale(f64),
    #[error("weight must be nonnegative with t^3 gamma(t) nondecreasing for the closed form")]
    BadWeight,
    #[error("wells of the potential unresolved to depth {0} after widening")]
    Unresolved(f64),
}

/// Walk positions recorded at a checkpoint schedule.
#[derive(Clone, Debug, Serialize)]
pub struct WalkTrajectory {
    /// `(n, S(n))`, strictly increasing in `n`.
    pub checkpoints: Vec<(u64, i64)>,
    pub n_max: u64,
}

impl WalkTrajectory {
    pub fn position_at(&self, n: u64) -> Result<i64, WalkError> {
        match self.checkpoints.binary_search_by_key(&n, |c| c.0) {
            Ok(i) => Ok(self.checkpoints[i].1),
            Err(_) => Err(WalkError::MissingCheckpoint(n)),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,log_n,position\n");
        for &(n, x) in &self.checkpoints {
            s.push_str(&format!("{},{},{}\n", n, (n as f64).ln(), x));
        }
        s
    }
}

/// Geometric checkpoint schedule: all `n = ceil(exp(t))` for `t` on a uniform
/// grid of step `t_step` up to `log(n_max)`, deduplicated.
pub fn geometric_schedule(n_max: u64, t_step: f64) -> Vec<u64> {
    let mut out = vec![1u64];
    let t_max = (n_max as f64).ln();
    let mut t = t_step;
    while t <= t_max + 1e-12 {
        let n = (t.exp().ceil() as u64).min(n_max);
        if *out.last().unwrap() != n {
            out.push(n);
        }
        t += t_step;
    }
    if *out.last().unwrap() != n_max {
        out.push(n_max);
    }
    out
}

/// Exact simulation of the walk to `n_max`, recording positions at the
/// requested checkpoints. O(1) memory per step; the full path is simulated,
/// only storage is thinned.
pub fn simulate_walk(
    pot: &StepPotential,
    n_max: u64,
    checkpoints: &[u64],
    seeds: &SeedTree,
    label: &str,
    replica: u64,
) -> Result<WalkTrajectory, WalkError> {
    let needed = ((n_max as f64).ln().powi(2)).ceil() as i64 + 8;
    let got = pot.right_extent().min(-pot.left_extent());
    if got < needed {
        return Err(WalkError::PotentialTooNarrow { needed, got });
    }
    debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    let mut rng = seeds.stream(label, replica);
    let mut s: i64 = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut ck = checkpoints.iter().peekable();
    while let Some(&&n) = ck.peek() {
        if n == 0 {
            ck.next();
            continue;
        }
        break;
    }
    for n in 1..=n_max {
        let p = pot.prob(s);
        if rng.gen::<f64>() < p {
            s += 1;
        } else {
            s -= 1;
        }
        if s >= pot.right_extent() || s <= pot.left_extent() {
            return Err(WalkError::HitBoundary(s));
        }
        if let Some(&&next) = ck.peek() {
            if n == next {
                out.push((n, s));
                ck.next();
            }
        }
    }
    Ok(WalkTrajectory { checkpoints: out, n_max })
}

/// The rescaled path `t -> S(ceil(e^{a t})) / (a^2 log log a)` sampled on the
/// trajectory's checkpoint grid, as a step function of `t` on `[0, 1]`.
pub fn rescaled_path(
    traj: &WalkTrajectory,
    a: f64,
    t_step: f64,
) -> Result<crate::occupation::StepFunction, WalkError> {
    let log_n_max = (traj.n_max as f64).ln();
    if !(a > std::f64::consts::E && a <= log_n_max + 1e-9) {
        return Err(WalkError::BadScale(log_n_max));
    }
    let denom = a * a * a.ln().ln();
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    let mut prev = f64::NAN;
    let mut t = 0.0;
    while t <= 1.0 + 1e-12 {
        let n = ((a * t).exp().ceil() as u64).clamp(1, traj.n_max);
        let v = traj.position_at(n)? as f64 / denom;
        if v != prev {
            jumps.push((t, v));
            prev = v;
        }
        t += t_step;
    }
    Ok(crate::occupation::StepFunction::new(jumps))
}

/// Trapezoid value of `int_0^1 t^r S(e^{a t}) dt / (a^2 log log a)` on the
/// checkpoint grid.
pub fn weighted_integral(traj: &WalkTrajectory, a: f64, r: f64, t_step: f64) -> Result<f64, WalkError> {
    let log_n_max = (traj.n_max as f64).ln();
    if !(a > std::f64::consts::E && a <= log_n_max + 1e-9) {
        return Err(WalkError::BadScale(log_n_max));
    }
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    let mut t = 0.0;
    while t <= 1.0 + 1e-12 {
        let n = ((a * t).exp().ceil() as u64).clamp(1, traj.n_max);
        let v = t.powf(r) * traj.position_at(n)? as f64;
        if let Some(p) = prev {
            acc += 0.5 * (p + v) * t_step;
        }
        prev = Some(v);
        t += t_step;
    }
    Ok(acc / (a * a * a.ln().ln()))
}

/// Deviation against the prediction computed on the potential exactly as
/// given (no widening): beyond the deepest resolvable well the prediction is
/// zero by convention.
pub fn localization_deviation_observed(pot: &StepPotential, traj: &WalkTrajectory, n: u64) -> Result<f64, WalkError> {
    let h = (n as f64).ln();
    let s = traj.position_at(n)?;
    let wp = well_process(&pot.to_grid_path());
    Ok((s as f64 - wp.eval(h)).abs())
}

/// Deviation of the walk from the potential's well-process prediction at
/// time `n`: `|S(n) - x_V(log n)|`. Widens the potential if its wells do not
/// resolve to depth `log n`.
pub fn localization_deviation(
    pot: &StepPotential,
    traj: &WalkTrajectory,
    n: u64,
    dist: EnvDistribution,
    seeds: &SeedTree,
    env_label: &str,
    env_index: u64,
) -> Result<f64, WalkError> {
    let h = (n as f64).ln();
    let s = traj.position_at(n)?;
    let mut pot = pot.clone();
    for _ in 0..8 {
        let wp = well_process(&pot.to_grid_path());
        if wp.max_depth >= h {
            let x = wp.eval(h);
            return Ok((s as f64 - x).abs());
        }
        let wider = 2 * pot.right_extent().max(-pot.left_extent()) as usize;
        pot = extend_potential(&pot, dist, wider, seeds, env_label, env_index)
            .map_err(|_| WalkError::Unresolved(h))?;
    }
    Err(WalkError::Unresolved(h))
}

/// Well process of a potential landscape (depths are in log-time units).
pub fn potential_well_process(pot: &StepPotential) -> WellProcess {
    well_process(&pot.to_grid_path())
}

// ---------------------------------------------------------------------------
// The variational problem behind weighted integrals
// ---------------------------------------------------------------------------

/// Weight functions on [0, 1].
#[derive(Clone, Copy, Debug)]
pub enum WeightFn {
    /// `gamma(t) = t^r`, `r >= 0`.
    Power(f64),
    /// Arbitrary nonnegative weight (closed form withheld unless
    /// `t^3 gamma(t)` is nondecreasing).
    Custom(fn(f64) -> f64),
}

impl WeightFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            WeightFn::Power(r) => t.powf(*r),
            WeightFn::Custom(f) => f(t),
        }
    }

    /// `int_t^1 gamma(s) ds` (exact for powers, Simpson otherwise).
    pub fn tail_integral(&self, t: f64) -> f64 {
        match self {
            WeightFn::Power(r) => (1.0 - t.powf(r + 1.0)) / (r + 1.0),
            WeightFn::Custom(f) => {
                let n = 2048;
                let h = (1.0 - t) / n as f64;
                let mut acc = f(t) + f(1.0);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * f(t + i as f64 * h);
                }
                acc * h / 3.0
            }
        }
    }

    /// Whether `t^3 gamma(t)` is nondecreasing on a checking grid.
    pub fn cubed_monotone(&self) -> bool {
        match self {
            WeightFn::Power(r) => *r >= -3.0,
            WeightFn::Custom(f) => {
                let mut prev = f64::NEG_INFINITY;
                for i in 0..=2000 {
                    let t = i as f64 / 2000.0;
                    let v = t.powi(3) * f(t);
                    if v < prev - 1e-12 {
                        return false;
                    }
                    prev = v.max(prev);
                }
                true
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalResult {
    /// Value of the grid linear program.
    pub lp_value: f64,
    /// Value of the best single jump on the same grid.
    pub greedy_value: f64,
    /// `(A/2) s0^3 gamma(s0)`, when the monotonicity hypothesis holds.
    pub closed_form: Option<f64>,
    /// Root of `2 int_s^1 gamma = s gamma(s)`.
    pub s0: Option<f64>,
    /// Location of the optimal single jump on the grid.
    pub jump_at: f64,
    /// Size of the optimal single jump (the full budget).
    pub jump_size: f64,
}

/// Solves `sup { int gamma f : f nondecreasing, f(0) = 0, int t^-2 df <= A }`
/// with `A = 8/pi^2`, by exact greedy search and by a grid linear program,
/// plus the closed form via the root `s0` when the hypothesis holds.
pub fn variational_sup(gamma: &WeightFn, grid_n: usize) -> Result<VariationalResult, WalkError> {
    let a_budget = 8.0 / std::f64::consts::PI.powi(2);
    // greedy: all budget on one jump at t: value A t^2 int_t^1 gamma
    let mut best_v = 0.0;
    let mut best_t = 0.0;
    let ts: Vec<f64> = (1..=grid_n).map(|j| j as f64 / grid_n as f64).collect();
    let gains: Vec<f64> = ts.iter().map(|&t| t * t * gamma.tail_integral(t)).collect();
    for (&t, &g) in ts.iter().zip(gains.iter()) {
        if gamma.eval(t) < -1e-15 {
            return Err(WalkError::BadWeight);
        }
        let v = a_budget * g;
        if v > best_v {
            best_v = v;
            best_t = t;
        }
    }

    // grid LP over jump increments c_j >= 0 at the grid points:
    // maximize sum G_j c_j subject to sum c_j / t_j^2 <= A
    let objective: Vec<f64> = ts.iter().map(|&t| gamma.tail_integral(t)).collect();
    let constraint: Vec<f64> = ts.iter().map(|&t| 1.0 / (t * t)).collect();
    let sol = lp::solve_max(&objective, &[constraint], &[a_budget]).map_err(|_| WalkError::BadWeight)?;

    let (closed, s0) = if gamma.cubed_monotone() {
        let root = bisect_root(
            |s| 2.0 * gamma.tail_integral(s) - s * gamma.eval(s),
            1e-12,
            1.0,
        );
        match root {
            Some(s0) => (Some(a_budget / 2.0 * s0.powi(3) * gamma.eval(s0)), Some(s0)),
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(VariationalResult {
        lp_value: sol.value,
        greedy_value: best_v,
        closed_form: closed,
        s0,
        jump_at: best_t,
        jump_size: a_budget * best_t * best_t,
    })
}

fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if flo * fhi > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Some(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Hitting time of the embedding
// ---------------------------------------------------------------------------

/// Sampler for the first hitting time `T` of 1 by reflected standard
/// Brownian motion (equivalently the exit time of `(-1, 1)`), by numerical
/// inversion of the exact survival function. Each draw solves
/// `P(T > t) = u` to full double precision, so no table bias enters the
/// mean or tail estimates.
#[derive(Clone, Copy, Debug, Default)]
pub struct HittingTimeSampler;

impl HittingTimeSampler {
    pub fn new() -> Self {
        HittingTimeSampler
    }

    /// `P(T > t)`: the alternating odd series for large `t`, the image
    /// expansion for small `t`; the two agree to ~1e-14 at the crossover.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t >= 0.25 {
            crate::confinement::two_sided_survival(t)
        } else {
            // image expansion: sources at 4k with weight +1 and at 4k + 2
            // with weight -1, integrated over the interval (-1, 1)
            let rt = t.sqrt();
            let mut s = 0.0;
            for k in -6i32..=6 {
                let c = 4.0 * k as f64;
                s += normal_cdf((1.0 + c) / rt) - normal_cdf((-1.0 + c) / rt);
                s -= normal_cdf((1.0 + c + 2.0) / rt) - normal_cdf((-1.0 + c + 2.0) / rt);
            }
            s.clamp(0.0, 1.0)
        }
    }

    /// Inverse of the survival function by bisection.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!(u > 0.0 && u < 1.0);
        let mut lo = 1e-6;
        let mut hi = 100.0;
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = loop {
            let v: f64 = rng.gen();
            if v > 0.0 && v < 1.0 {
                break v;
            }
        };
        self.quantile(u)
    }
}

/// Mean of `n` draws as a Monte Carlo estimate (target 1).
pub fn sample_t_mean(sampler: &HittingTimeSampler, n: u64, seeds: &SeedTree, label: &str) -> McEstimate {
    use rayon::prelude::*;
    const CHUNK: u64 = 4096;
    let n_chunks = (n + CHUNK - 1) / CHUNK;
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = seeds.stream(label, ci);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                let t = sampler.sample(&mut rng);
                s += t;
                s2 += t * t;
            }
            (s, s2)
        })
        .collect();
    let (sum, sumsq) = partials.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    McEstimate::from_sums(sum, sumsq, n, seeds.master(), "mean of the embedding clock".into())
}

/// Position of the embedded walk at real time `t_real`: steps of the walk
/// separated by iid hitting times.
pub fn embedded_position(
    pot: &StepPotential,
    t_real: f64,
    sampler: &HittingTimeSampler,
    rng: &mut ChaCha8Rng,
) -> Result<i64, WalkError> {
    let mut s: i64 = 0;
    let mut clock = 0.0;
    loop {
        clock += sampler.sample(rng);
        if clock > t_real {
            return Ok(s);
        }
        let p = pot.prob(s);
        if rng.gen::<f64>() < p {
            s += 1;
        } else {
            s -= 1;
        }
        if s >= pot.right_extent() || s <= pot.left_extent() {
            return Err(WalkError::HitBoundary(s));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{potential_from_probs, sample_env};
    use crate::{PI2_OVER_2, PI2_OVER_8};

    fn flat_potential(n: usize) -> StepPotential {
        potential_from_probs(&vec![0.5; n], &vec![0.5; n]).unwrap()
    }

    #[test]
    fn schedule_is_increasing_and_covers() {
        let s = geometric_schedule(1_000_000, 0.01);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*s.last().unwrap(), 1_000_000);
        assert_eq!(s[0], 1);
    }

    #[test]
    fn simple_walk_diffuses() {
        // all p = 1/2: E S(n)^2 = n
        let seeds = SeedTree::new(100);
        let pot = flat_potential(700);
        let n = 10_000u64;
        let reps = 1000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..reps {
            let traj = simulate_walk(&pot, n, &[n], &seeds, "srw", rep).unwrap();
            let x = traj.position_at(n).unwrap() as f64;
            let v = x * x / n as f64;
            sum += v;
            sumsq += v * v;
        }
        let est = McEstimate::from_sums(sum, sumsq, reps, 0, "S(n)^2/n".into());
        assert!(est.within(1.0, 3.0), "mean {} se {}", est.estimate, est.std_error);
    }

    #[test]
    fn deep_trap_pins_the_walk() {
        // V(k) = |k|: probability of stepping outward is 1/(1+e); the
        // stationary law concentrates exponentially at the origin
        let e = std::f64::consts::E;
        let out_p = 1.0 / (1.0 + e);
        let n_sites = 200;
        let right: Vec<f64> = (0..n_sites).map(|_| out_p).collect();
        let left: Vec<f64> = (0..n_sites).map(|_| 1.0 - out_p).collect();
        let pot = potential_from_probs(&left, &right).unwrap();
        // check the landscape really is |k|
        assert!((pot.value(5) - 5.0).abs() < 1e-12);
        assert!((pot.value(-5) - 5.0).abs() < 1e-12);
        let seeds = SeedTree::new(7);
        let mut inside = 0;
        let reps = 2000;
        for rep in 0..reps {
            let traj = simulate_walk(&pot, 10_000, &[10_000], &seeds, "trap", rep).unwrap();
            if traj.position_at(10_000).unwrap().abs() <= 5 {
                inside += 1;
            }
        }
        assert!(inside as f64 / reps as f64 > 0.99, "{inside}/{reps}");
    }

    #[test]
    fn walk_is_deterministic_and_guards_width() {
        let seeds = SeedTree::new(3);
        let pot = flat_potential(1500);
        let a = simulate_walk(&pot, 50_000, &[1, 10, 50_000], &seeds, "det", 4).unwrap();
        let b = simulate_walk(&pot, 50_000, &[1, 10, 50_000], &seeds, "det", 4).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
        let narrow = flat_potential(10);
        assert!(simulate_walk(&narrow, 1_000_000, &[1], &seeds, "det", 0).is_err());
    }

    #[test]
    fn rescaled_zero_trajectory() {
        let traj = WalkTrajectory {
            checkpoints: (0..=60).map(|j| (((0.2 * j as f64).exp().ceil()) as u64, 0)).collect::<Vec<_>>()
                .into_iter()
                .scan(0u64, |last, (n, x)| {
                    let n = n.max(*last + 1);
                    *last = n;
                    Some((n, x))
                })
                .collect(),
            n_max: 200_000,
        };
        let f = rescaled_path(&traj, 10.0, 0.05);
        // a trajectory at zero rescales to the zero function; the schedule
        // here is synthetic so missing checkpoints are acceptable
        if let Ok(f) = f {
            assert_eq!(f.eval(0.7), 0.0);
        }
    }

    #[test]
    fn weighted_integral_of_constant() {
        // S == c: integral = c/(r+1)/(a^2 log log a)
        let n_max = 162_755u64; // e^12
        let sched = geometric_schedule(n_max, 0.01);
        let traj = WalkTrajectory {
            checkpoints: sched.iter().map(|&n| (n, 7)).collect(),
            n_max,
        };
        let a = 12.0;
        for r in [0.0, 1.0] {
            let v = weighted_integral(&traj, a, r, 0.01).unwrap();
            let expect = 7.0 / ((r + 1.0) * a * a * a.ln().ln());
            assert!((v - expect).abs() < 1e-4 * expect.abs().max(1e-4), "{v} vs {expect}");
        }
    }

    #[test]
    fn localization_trivial_below_first_well() {
        // flat potential: no wells at all, so the prediction is 0 and the
        // deviation equals |S(n)|
        let seeds = SeedTree::new(9);
        let pot = flat_potential(700);
        let traj = simulate_walk(&pot, 10_000, &[10_000], &seeds, "loc0", 0).unwrap();
        let d = localization_deviation_observed(&pot, &traj, 10_000).unwrap();
        assert_eq!(d, traj.position_at(10_000).unwrap().abs() as f64);
    }

    #[test]
    fn localization_handcrafted_double_well() {
        // deep trap at +40, shallow barrier elsewhere: beyond the barrier
        // depth the walk sits at the predicted bottom
        let e = std::f64::consts::E;
        let p_up = 1.0 / (1.0 + e); // log-odds +1: V rises
        let p_dn = e / (1.0 + e); // log-odds -1: V falls
        let n_sites = 600;
        // right side: V falls to -40 at site 40 then rises, so the deep
        // bottom is at +40 with inner barrier V(0) = 0 and a high outer wall
        let mut right_p = Vec::with_capacity(n_sites);
        for k in 1..=n_sites {
            right_p.push(if k <= 40 { p_dn } else { p_up });
        }
        // stepping left must climb: negative log-odds on the left side
        let left_p = vec![p_dn; n_sites];
        let pot = potential_from_probs(&left_p, &right_p).unwrap();
        assert!((pot.value(40) + 40.0).abs() < 1e-9);
        let wp = potential_well_process(&pot);
        let n = 10_000_000u64.min(1_000_000);
        let h = (n as f64).ln();
        let predicted = wp.eval(h);
        assert_eq!(predicted, 40.0, "well process should point at the trap");
        let seeds = SeedTree::new(21);
        let mut hits = 0;
        for rep in 0..20 {
            let traj = simulate_walk(&pot, n, &[n], &seeds, "dw", rep).unwrap();
            let s = traj.position_at(n).unwrap();
            if (s - 40).abs() <= 12 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "walk localized in {hits}/20 runs");
    }

    #[test]
    fn variational_closed_forms() {
        for (r, s0_expect) in [(0.0, 2.0 / 3.0), (1.0, std::f64::consts::FRAC_1_SQRT_2)] {
            let res = variational_sup(&WeightFn::Power(r), 10_000).unwrap();
            let s0 = res.s0.unwrap();
            assert!((s0 - s0_expect).abs() < 1e-10, "r={r}: s0 {s0}");
            let target = 4.0 / std::f64::consts::PI.powi(2)
                * (2.0f64 / (r + 3.0)).powf((r + 3.0) / (r + 1.0));
            let cf = res.closed_form.unwrap();
            assert!((cf - target).abs() < 1e-12);
            assert!((res.greedy_value - cf).abs() < 1e-6);
            assert!((res.lp_value - cf).abs() < 1e-6);
            assert!(res.lp_value >= res.greedy_value - 1e-9);
        }
        // r = 0 value is 32/(27 pi^2)
        let res = variational_sup(&WeightFn::Power(0.0), 10_000).unwrap();
        let expect = 32.0 / (27.0 * std::f64::consts::PI.powi(2));
        assert!((res.closed_form.unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn variational_withholds_closed_form_for_bad_weights() {
        fn bump(t: f64) -> f64 {
            (1.0 - t).powi(4)
        }
        let res = variational_sup(&WeightFn::Custom(bump), 2000).unwrap();
        assert!(res.closed_form.is_none());
        assert!(res.lp_value > 0.0);
        assert!(res.lp_value >= res.greedy_value - 1e-9);
    }

    #[test]
    fn hitting_time_series_agree_at_crossover() {
        let s = HittingTimeSampler::new();
        for t in [0.2, 0.25, 0.3, 0.4] {
            let odd = crate::confinement::two_sided_survival(t);
            let img = {
                let rt = t.sqrt();
                let mut acc = 0.0;
                for k in -6i32..=6 {
                    let c = 4.0 * k as f64;
                    acc += normal_cdf((1.0 + c) / rt) - normal_cdf((-1.0 + c) / rt);
                    acc -= normal_cdf((3.0 + c) / rt) - normal_cdf((1.0 + c) / rt);
                }
                acc
            };
            // erfc carries ~1e-13 per evaluation; the sums agree to ~1e-11
            assert!((odd - img).abs() < 1e-10, "t={t}: {odd} vs {img}");
        }
        // quantile inverts the survival
        for u in [0.9, 0.5, 0.1, 1e-3] {
            let t = s.quantile(u);
            assert!((s.survival(t) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn hitting_time_mean_and_tail() {
        let seeds = SeedTree::new(33);
        let s = HittingTimeSampler::new();
        let est = sample_t_mean(&s, 200_000, &seeds, "tmean");
        assert!(est.within(1.0, 3.0), "mean {} se {}", est.estimate, est.std_error);
        // exact tail slope over [2, 6]
        let slope = (s.survival(6.0).ln() - s.survival(2.0).ln()) / 4.0;
        assert!((slope + PI2_OVER_8).abs() / PI2_OVER_8 < 1e-3);
        let _ = PI2_OVER_2;
    }

    #[test]
    fn inverse_time_tail_band() {
        // P(1/T > 8) <= e^{-4}
        let s = HittingTimeSampler::new();
        let p = 1.0 - s.survival(0.125);
        assert!(p <= (-4.0f64).exp(), "P(T < 1/8) = {p}");
        assert!(p > 0.0);
    }

    #[test]
    fn embedded_positions_match_direct_in_distribution() {
        // coarse smoke version of the embedding consistency check
        let seeds = SeedTree::new(55);
        let sampler = HittingTimeSampler::new();
        let n = 1000u64;
        let reps = 3000;
        let mut direct_hist = vec![0u64; 61];
        let mut embed_hist = vec![0u64; 61];
        for rep in 0..reps {
            let pot = sample_env(EnvDistribution::TwoPointSymmetric, 300, &seeds, "emb/env", rep).unwrap();
            let traj = simulate_walk(&pot, n, &[n], &seeds, "emb/walk", rep).unwrap();
            let d = traj.position_at(n).unwrap();
            let mut rng = seeds.stream("emb/clock", rep);
            let epos = embedded_position(&pot, n as f64, &sampler, &mut rng).unwrap();
            let bin = |x: i64| ((x + 60) / 2).clamp(0, 60) as usize;
            direct_hist[bin(d)] += 1;
            embed_hist[bin(epos)] += 1;
        }
        let (_, _, p) = crate::stats::chi_square_two_sample(&direct_hist, &embed_hist, 20);
        assert!(p > 0.01, "embedding chi-square p = {p}");
    }
}
