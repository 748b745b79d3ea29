//! Euler path simulation with Brownian-bridge boundary corrections, a
//! deterministic direct Monte Carlo driver, and a fixed-population splitting
//! (sequential resampling) driver for rare confinement events.
//!
//! Naive grids systematically miss within-cell boundary crossings; every
//! stay-in constraint here draws the within-cell crossing indicator from the
//! exact bridge probability `exp(-2 (a - x0)(a - x1) / dt)`, and running
//! minima are updated from the exact bridge-minimum law rather than the grid
//! values.
//!
//! Both drivers are bit-reproducible for a fixed seed regardless of worker
//! count: samples and particles draw from streams keyed by their index, all
//! reductions are over fixed chunk boundaries in index order, and splitting
//! resamples serially between stages.

use crate::rng::SeedTree;
use crate::stats::McEstimate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Euler stepping context for one grid resolution.
#[derive(Clone, Copy, Debug)]
pub struct Stepper {
    pub dt: f64,
    pub sqrt_dt: f64,
}

impl Stepper {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0);
        Stepper { dt, sqrt_dt: dt.sqrt() }
    }

    #[inline]
    pub fn increment(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sqrt_dt * z
    }

    /// Probability that the Brownian bridge from `x0` to `x1` over one cell
    /// crosses the upper barrier `hi` (both endpoints below it).
    #[inline]
    pub fn upper_crossing(&self, hi: f64, x0: f64, x1: f64) -> f64 {
        if x0 >= hi || x1 >= hi {
            return 1.0;
        }
        (-2.0 * (hi - x0) * (hi - x1) / self.dt).exp()
    }

    /// Probability that the bridge crosses the lower barrier `lo`.
    #[inline]
    pub fn lower_crossing(&self, lo: f64, x0: f64, x1: f64) -> f64 {
        if x0 <= lo || x1 <= lo {
            return 1.0;
        }
        (-2.0 * (x0 - lo) * (x1 - lo) / self.dt).exp()
    }

    /// Exact sample of the within-cell minimum of the bridge from `x0` to `x1`.
    #[inline]
    pub fn bridge_min(&self, x0: f64, x1: f64, u: f64) -> f64 {
        let d = x1 - x0;
        0.5 * (x0 + x1 - (d * d - 2.0 * self.dt * u.max(1e-300).ln()).sqrt())
    }

    /// Exact sample of the within-cell maximum.
    #[inline]
    pub fn bridge_max(&self, x0: f64, x1: f64, u: f64) -> f64 {
        let d = x1 - x0;
        0.5 * (x0 + x1 + (d * d - 2.0 * self.dt * u.max(1e-300).ln()).sqrt())
    }
}

/// Direct Monte Carlo over independent samples, each drawing from its own
/// stream. The reduction is over fixed 1024-sample chunks in index order.
pub fn direct_mc<F>(seeds: &SeedTree, label: &str, n_samples: u64, sample: F) -> McEstimate
where
    F: Fn(u64, &mut ChaCha8Rng) -> bool + Sync,
{
    const CHUNK: u64 = 1024;
    let n_chunks = (n_samples + CHUNK - 1) / CHUNK;
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut count = 0u64;
            for s in ci * CHUNK..((ci + 1) * CHUNK).min(n_samples) {
                let mut rng = seeds.stream(label, s);
                if sample(s, &mut rng) {
                    count += 1;
                }
            }
            count
        })
        .sum();
    McEstimate::from_hits(hits, n_samples, seeds.master(), label.to_string())
}

/// A particle evolved stage by stage under a killing dynamic.
pub trait Splittable: Clone + Send + Sync {
    /// Advance by `steps` Euler steps; `false` means killed.
    fn advance(&mut self, steps: usize, rng: &mut ChaCha8Rng) -> bool;
}

/// Per-checkpoint output of a splitting run.
#[derive(Clone, Debug)]
pub struct SplitCheckpoint {
    /// User tag for this checkpoint (typically the time it corresponds to).
    pub tag: f64,
    /// Log-probability estimate of (survival so far) * (acceptance now).
    pub log_p: f64,
    /// Approximate standard error of `log_p` (stagewise binomial, ignoring
    /// resampling correlations).
    pub log_se: f64,
    /// Acceptance fraction among live particles at the checkpoint.
    pub accept_frac: f64,
}

/// Fixed-population splitting estimator for survival-type rare events.
///
/// The population is propagated through `stages` (each a step count); after
/// each stage the survival fraction is recorded and the population is
/// resampled back to `n_particles` uniformly from the survivors. Checkpoints
/// attach to stage boundaries and evaluate an acceptance predicate on the
/// live population, yielding an estimate of
/// `P(survived to the checkpoint and accepts)` from a single run.
pub fn run_splitting<P, I, A>(
    seeds: &SeedTree,
    label: &str,
    n_particles: usize,
    stages: &[usize],
    checkpoints: &[(usize, f64)],
    init: I,
    accept: A,
) -> Result<Vec<SplitCheckpoint>, String>
where
    P: Splittable,
    I: Fn(u64, &mut ChaCha8Rng) -> P + Sync,
    A: Fn(u64, &P) -> bool + Sync,
{
    assert!(n_particles > 1);
    let mut particles: Vec<P> = (0..n_particles as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream2(label, u64::MAX, i);
            init(i, &mut rng)
        })
        .collect();

    let mut cum_log = 0.0f64;
    let mut cum_var = 0.0f64;
    let mut out = Vec::new();
    let mut ck_iter = checkpoints.iter().peekable();

    // checkpoint at stage 0 (before any propagation)
    while let Some(&&(stage_idx, tag)) = ck_iter.peek() {
        if stage_idx == 0 {
            out.push(eval_checkpoint(&particles, tag, cum_log, cum_var, &accept));
            ck_iter.next();
        } else {
            break;
        }
    }

    for (si, &steps) in stages.iter().enumerate() {
        let survivors: Vec<P> = particles
            .into_par_iter()
            .enumerate()
            .filter_map(|(pi, mut p)| {
                let mut rng = seeds.stream3(label, si as u64, pi as u64, 0);
                if p.advance(steps, &mut rng) {
                    Some(p)
                } else {
                    None
                }
            })
            .collect();
        let k = survivors.len();
        if k == 0 {
            return Err(format!(
                "population died out at stage {si} of {label}: increase particles or shorten stages"
            ));
        }
        let s = k as f64 / n_particles as f64;
        cum_log += s.ln();
        cum_var += (1.0 - s) / (s * n_particles as f64);

        // resample back to n_particles, serially, from a stage-keyed stream
        let mut rng = seeds.stream3(label, si as u64, u64::MAX, 1);
        let mut next = Vec::with_capacity(n_particles);
        for _ in 0..n_particles {
            next.push(survivors[rng.gen_range(0..k)].clone());
        }
        particles = next;

        while let Some(&&(stage_idx, tag)) = ck_iter.peek() {
            if stage_idx == si + 1 {
                out.push(eval_checkpoint(&particles, tag, cum_log, cum_var, &accept));
                ck_iter.next();
            } else {
                break;
            }
        }
    }
    Ok(out)
}

fn eval_checkpoint<P: Splittable, A: Fn(u64, &P) -> bool + Sync>(
    particles: &[P],
    tag: f64,
    cum_log: f64,
    cum_var: f64,
    accept: &A,
) -> SplitCheckpoint {
    let n = particles.len();
    let acc = particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| accept(i as u64, p) as u64)
        .sum::<u64>();
    let frac = acc as f64 / n as f64;
    let (log_p, var) = if acc == 0 {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (cum_log + frac.ln(), cum_var + (1.0 - frac) / (frac * n as f64))
    };
    SplitCheckpoint { tag, log_p, log_se: var.sqrt(), accept_frac: frac }
}

/// Converts splitting checkpoints into `(t, McEstimate)` pairs for rate fits.
pub fn checkpoints_to_estimates(cks: &[SplitCheckpoint], seed: u64, meta: &str) -> Vec<(f64, McEstimate)> {
    cks.iter()
        .map(|c| {
            let p = c.log_p.exp();
            (c.tag, McEstimate::with_error(p, p * c.log_se, 0, seed, format!("{meta} @ {}", c.tag)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct IntervalParticle {
        x: f64,
        stepper: Stepper,
        lo: f64,
        hi: f64,
    }

    impl Splittable for IntervalParticle {
        fn advance(&mut self, steps: usize, rng: &mut ChaCha8Rng) -> bool {
            for _ in 0..steps {
                let x1 = self.x + self.stepper.increment(rng);
                if x1 <= self.lo || x1 >= self.hi {
                    return false;
                }
                let pc = self.stepper.upper_crossing(self.hi, self.x, x1)
                    + self.stepper.lower_crossing(self.lo, self.x, x1);
                if pc > 0.0 && rng.gen::<f64>() < pc {
                    return false;
                }
                self.x = x1;
            }
            true
        }
    }

    /// Exact survival of Brownian motion in (0, 1) started at 1/2.
    fn exact_survival(t: f64) -> f64 {
        let mut s = 0.0;
        for n in (1..100).step_by(2) {
            let nf = n as f64;
            let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * (-nf * nf * std::f64::consts::PI.powi(2) * t / 2.0).exp() / nf;
        }
        4.0 / std::f64::consts::PI * s
    }

    #[test]
    fn bridge_correction_removes_grid_bias() {
        // Survival in (0,1) to t = 1 is ~9.16e-3; with dt = 1e-3 an
        // uncorrected grid overestimates it by ~8%, far outside MC error.
        let seeds = SeedTree::new(99);
        let dt = 1e-3;
        let stepper = Stepper::new(dt);
        let n = 200_000u64;
        let est = direct_mc(&seeds, "bridge", n, |_, rng| {
            let mut p = IntervalParticle { x: 0.5, stepper, lo: 0.0, hi: 1.0 };
            p.advance((1.0 / dt) as usize, rng)
        });
        let exact = exact_survival(1.0);
        assert!(
            (est.estimate - exact).abs() <= 3.0 * est.std_error,
            "estimate {} vs exact {exact} (se {})",
            est.estimate,
            est.std_error
        );
    }

    #[test]
    fn splitting_matches_exact_deep_tail() {
        // Survival to t = 4 is ~3.4e-9: unreachable directly, routine for the
        // splitting estimator.
        let seeds = SeedTree::new(7);
        let dt = 1e-3;
        let stepper = Stepper::new(dt);
        let steps_per_stage = (0.25 / dt) as usize;
        let stages: Vec<usize> = vec![steps_per_stage; 16];
        let checkpoints: Vec<(usize, f64)> = (1..=16).map(|i| (i, 0.25 * i as f64)).collect();
        let cks = run_splitting(
            &seeds,
            "split",
            20_000,
            &stages,
            &checkpoints,
            |_, _| IntervalParticle { x: 0.5, stepper, lo: 0.0, hi: 1.0 },
            |_, _| true,
        )
        .unwrap();
        for ck in [&cks[3], &cks[15]] {
            let exact = exact_survival(ck.tag).ln();
            assert!(
                (ck.log_p - exact).abs() <= 4.0 * ck.log_se.max(0.01),
                "t = {}: log_p {} vs exact {exact} (se {})",
                ck.tag,
                ck.log_p,
                ck.log_se
            );
        }
    }

    #[test]
    fn drivers_are_deterministic() {
        let seeds = SeedTree::new(5);
        let run = || {
            direct_mc(&seeds, "det", 4096, |_, rng| rng.gen::<f64>() < 0.3).estimate
        };
        assert_eq!(run(), run());
    }
}
