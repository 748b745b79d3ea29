//! Environments: two-sided Brownian grid paths and step potentials.
//!
//! A [`GridPath`] is a piecewise-linear function on a uniform grid spanning
//! `[-left_n*dt, right_n*dt]`. Sampled environments are pinned to zero at the
//! origin; hand-built test paths may carry any origin value.
//!
//! A [`StepPotential`] is the cumulative log-odds landscape of a site
//! probability family: `V(0) = 0` and `V(k) - V(k-1) = log((1-p_k)/p_k)`.

use crate::rng::SeedTree;
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use thiserror::Error;

/// Cells per RNG block; wing extension re-keys streams at block granularity,
/// so growing a wing never disturbs values already drawn.
pub const WING_BLOCK: usize = 4096;

const MAGIC: &[u8; 4] = b"SINP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("path must contain at least one point")]
    EmptyPath,
    #[error("value count {got} does not match left_n + right_n + 1 = {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("site probability {0} outside the open interval (0,1)")]
    ProbOutOfRange(f64),
    #[error("site count must be at least 1")]
    NoSites,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad path file: {0}")]
    BadFile(String),
}

/// Two-sided piecewise-linear path on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    dt: f64,
    left_n: usize,
    right_n: usize,
    /// `values[left_n]` is the value at time zero.
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(dt: f64, left_n: usize, right_n: usize, values: Vec<f64>) -> Result<Self, EnvError> {
        if !(dt > 0.0) {
            return Err(EnvError::NonPositiveDt(dt));
        }
        let want = left_n + right_n + 1;
        if values.is_empty() {
            return Err(EnvError::EmptyPath);
        }
        if values.len() != want {
            return Err(EnvError::LengthMismatch { got: values.len(), want });
        }
        Ok(GridPath { dt, left_n, right_n, values })
    }

    /// Builds a path from two wings sharing an origin value. Wings are value
    /// sequences indexed outward from the origin, origin excluded.
    pub fn from_wings(dt: f64, origin: f64, left: &[f64], right: &[f64]) -> Result<Self, EnvError> {
        let mut values = Vec::with_capacity(left.len() + right.len() + 1);
        values.extend(left.iter().rev());
        values.push(origin);
        values.extend_from_slice(right);
        GridPath::new(dt, left.len(), right.len(), values)
    }

    /// Builds a path through explицit `(t, value)` waypoints, sampled on a
    /// uniform grid of spacing `dt` spanning the waypoint range. Waypoints
    /// must be strictly increasing in `t` and bracket zero.
    pub fn from_waypoints(dt: f64, pts: &[(f64, f64)]) -> Result<Self, EnvError> {
        if !(dt > 0.0) {
            return Err(EnvError::NonPositiveDt(dt));
        }
        if pts.len() < 2 {
            return Err(EnvError::EmptyPath);
        }
        let t0 = pts[0].0;
        let t1 = pts[pts.len() - 1].0;
        let left_n = (-t0 / dt).ceil().max(0.0) as usize;
        let right_n = (t1 / dt).ceil().max(0.0) as usize;
        let eval = |t: f64| -> f64 {
            if t <= pts[0].0 {
                return pts[0].1;
            }
            if t >= pts[pts.len() - 1].0 {
                return pts[pts.len() - 1].1;
            }
            let i = pts.partition_point(|p| p.0 <= t);
            let (ta, va) = pts[i - 1];
            let (tb, vb) = pts[i];
            va + (vb - va) * (t - ta) / (tb - ta)
        };
        let values: Vec<f64> = (0..=left_n + right_n)
            .map(|i| eval((i as f64 - left_n as f64) * dt))
            .collect();
        GridPath::new(dt, left_n, right_n, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn left_n(&self) -> usize {
        self.left_n
    }
    pub fn right_n(&self) -> usize {
        self.right_n
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn origin_value(&self) -> f64 {
        self.values[self.left_n]
    }
    pub fn t_min(&self) -> f64 {
        -(self.left_n as f64) * self.dt
    }
    pub fn t_max(&self) -> f64 {
        self.right_n as f64 * self.dt
    }

    /// Linear interpolation between grid points; clamped at the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = t / self.dt + self.left_n as f64;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = (self.values.len() - 1) as f64;
        if x >= last {
            return *self.values.last().unwrap();
        }
        let i = x.floor() as usize;
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Wing values outward from the origin (origin included at index 0).
    /// `side > 0` is the right wing, `side < 0` the left.
    pub fn wing(&self, side: i8) -> Vec<f64> {
        if side >= 0 {
            self.values[self.left_n..].to_vec()
        } else {
            self.values[..=self.left_n].iter().rev().copied().collect()
        }
    }

    /// The path `t -> c * f(t / c^2)`, represented exactly on the scaled grid.
    pub fn scaled(&self, c: f64) -> GridPath {
        GridPath {
            dt: self.dt * c * c,
            left_n: self.left_n,
            right_n: self.right_n,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// The time-mirrored path `t -> f(-t)`.
    pub fn mirrored(&self) -> GridPath {
        GridPath {
            dt: self.dt,
            left_n: self.right_n,
            right_n: self.left_n,
            values: self.values.iter().rev().copied().collect(),
        }
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<(), EnvError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.left_n as u64).to_le_bytes())?;
        w.write_all(&(self.right_n as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self, EnvError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EnvError::BadFile("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(EnvError::BadFile(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let dt = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let left_n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let right_n = u64::from_le_bytes(b8) as usize;
        let n = left_n + right_n + 1;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        GridPath::new(dt, left_n, right_n, values)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), EnvError> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            let t = (i as f64 - self.left_n as f64) * self.dt;
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Samples a two-sided Brownian grid path pinned at zero. Increments over
/// each cell are independent `N(0, dt)`, drawn from block-keyed streams so
/// the same `(seeds, label, index)` always yields the same path even when
/// wings are grown afterwards.
pub fn sample_brownian(
    dt: f64,
    left_n: usize,
    right_n: usize,
    seeds: &SeedTree,
    label: &str,
    index: u64,
) -> Result<GridPath, EnvError> {
    if !(dt > 0.0) {
        return Err(EnvError::NonPositiveDt(dt));
    }
    let right = sample_wing(dt, right_n, seeds, label, index, 0);
    let left = sample_wing(dt, left_n, seeds, label, index, 1);
    GridPath::from_wings(dt, 0.0, &left, &right)
}

/// One Brownian wing as cumulative values (origin excluded), extendable by
/// calling again with a larger `n`: the first `min(n, old_n)` values agree.
pub fn sample_wing(dt: f64, n: usize, seeds: &SeedTree, label: &str, index: u64, side: u64) -> Vec<f64> {
    let mut wing = Vec::with_capacity(n);
    extend_wing(&mut wing, dt, n, seeds, label, index, side);
    wing
}

/// Grows `wing` in place to `n` cumulative values without disturbing the
/// prefix already drawn.
pub fn extend_wing(
    wing: &mut Vec<f64>,
    dt: f64,
    n: usize,
    seeds: &SeedTree,
    label: &str,
    index: u64,
    side: u64,
) {
    let start = wing.len();
    let from = *wing.last().unwrap_or(&0.0);
    wing_values(dt, start, n, from, seeds, label, index, side, |v| wing.push(v));
}

/// Streams the cumulative wing values for cells `[start, n)`, continuing
/// from `from`; the draws are identical to those of [`extend_wing`].
#[allow(clippy::too_many_arguments)]
pub fn wing_values(
    dt: f64,
    start: usize,
    n: usize,
    from: f64,
    seeds: &SeedTree,
    label: &str,
    index: u64,
    side: u64,
    mut sink: impl FnMut(f64),
) {
    if n <= start {
        return;
    }
    let sd = dt.sqrt();
    let mut sum = from;
    let mut cell = start;
    let mut rng = seeds.stream_n(label, &[index, side, (cell / WING_BLOCK) as u64]);
    // Replay into the current block if extension starts mid-block.
    for _ in 0..(cell % WING_BLOCK) {
        let _: f64 = rng.sample(StandardNormal);
    }
    while cell < n {
        if cell % WING_BLOCK == 0 {
            rng = seeds.stream_n(label, &[index, side, (cell / WING_BLOCK) as u64]);
        }
        let z: f64 = rng.sample(StandardNormal);
        sum += sd * z;
        sink(sum);
        cell += 1;
    }
}

/// Step potential over integer sites: `V(0) = 0`, jumps by the site log-odds.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPotential {
    /// p_k for k = 1, 2, ... (right side).
    right_p: Vec<f64>,
    /// p_k for k = -1, -2, ... (left side).
    left_p: Vec<f64>,
    /// Transition probability at the origin. The landscape never uses it
    /// (V is pinned at 0), but a walk does.
    p_zero: f64,
    /// V(k) for k = 1..=right_p.len().
    right_v: Vec<f64>,
    /// V(k) for k = -1..=-left_p.len() (index 0 holds V(-1)).
    left_v: Vec<f64>,
}

impl StepPotential {
    /// Right-side range of sites (largest k with a defined probability).
    pub fn right_extent(&self) -> i64 {
        self.right_p.len() as i64
    }
    pub fn left_extent(&self) -> i64 {
        -(self.left_p.len() as i64)
    }

    pub fn prob(&self, k: i64) -> f64 {
        if k > 0 {
            self.right_p[(k - 1) as usize]
        } else if k < 0 {
            self.left_p[(-k - 1) as usize]
        } else {
            self.p_zero
        }
    }

    pub fn with_p_zero(mut self, p: f64) -> Result<Self, EnvError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(EnvError::ProbOutOfRange(p));
        }
        self.p_zero = p;
        Ok(self)
    }

    pub fn value(&self, k: i64) -> f64 {
        if k == 0 {
            0.0
        } else if k > 0 {
            self.right_v[(k - 1) as usize]
        } else {
            self.left_v[(-k - 1) as usize]
        }
    }

    /// The potential as a grid path (dt = 1, polyline through integer sites).
    pub fn to_grid_path(&self) -> GridPath {
        GridPath::from_wings(1.0, 0.0, &self.left_v, &self.right_v).expect("valid potential grid")
    }
}

/// Builds the step potential from site probabilities.
///
/// `left` holds `p_{-1}, p_{-2}, ...` outward; `right` holds `p_1, p_2, ...`.
/// `V(k) = sum_{j=1..k} log((1-p_j)/p_j)` for `k > 0`, and mirrored on the
/// left: `V(-k) = -sum_{j=0..k-1} log((1-p_{-j})/p_{-j})` so that increments
/// `V(k) - V(k-1) = log((1-p_k)/p_k)` hold at every site.
pub fn potential_from_probs(left: &[f64], right: &[f64]) -> Result<StepPotential, EnvError> {
    for &p in left.iter().chain(right.iter()) {
        if !(p > 0.0 && p < 1.0) {
            return Err(EnvError::ProbOutOfRange(p));
        }
    }
    let log_odds = |p: f64| ((1.0 - p) / p).ln();
    let mut right_v = Vec::with_capacity(right.len());
    let mut acc = 0.0;
    for &p in right {
        acc += log_odds(p);
        right_v.push(acc);
    }
    // Mirrored on the left: stepping outward over site -k subtracts its
    // log-odds, so V(-k+1) - V(-k) = log_odds(p_{-k}) at every site.
    let mut left_v = Vec::with_capacity(left.len());
    acc = 0.0;
    for &p in left {
        acc -= log_odds(p);
        left_v.push(acc);
    }
    Ok(StepPotential { right_p: right.to_vec(), left_p: left.to_vec(), right_v, left_v, p_zero: 0.5 })
}

/// Catalogue of zero-mean unit-variance log-odds laws.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum EnvDistribution {
    /// log((1-p)/p) = +/-1 with probability 1/2 each.
    TwoPointSymmetric,
    /// log((1-p)/p) = c * Z with Z standard normal truncated to [-b, b] and
    /// c chosen so the variance is exactly 1.
    TruncatedGaussian { bound: f64 },
}

impl EnvDistribution {
    pub fn parse(s: &str) -> Option<EnvDistribution> {
        match s {
            "two-point" | "two_point" | "twopoint" => Some(EnvDistribution::TwoPointSymmetric),
            "trunc-gauss" | "truncated-gaussian" => Some(EnvDistribution::TruncatedGaussian { bound: 4.0 }),
            _ => None,
        }
    }

    /// Draws one log-odds value.
    pub fn sample_log_odds(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            EnvDistribution::TwoPointSymmetric => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EnvDistribution::TruncatedGaussian { bound } => {
                let scale = 1.0 / truncated_normal_sd(bound);
                loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= bound {
                        return scale * z;
                    }
                }
            }
        }
    }

    /// Draws one site probability p with log((1-p)/p) from the law.
    pub fn sample_prob(&self, rng: &mut impl Rng) -> f64 {
        let y = self.sample_log_odds(rng);
        1.0 / (1.0 + y.exp())
    }
}

/// Standard deviation of a standard normal truncated to [-b, b].
fn truncated_normal_sd(b: f64) -> f64 {
    use statrs::function::erf::erf;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = erf(b / std::f64::consts::SQRT_2);
    (1.0 - 2.0 * b * phi(b) / mass).sqrt()
}

/// Samples a step potential with `n` iid sites on each side.
///
/// Sites are drawn from per-site-block streams keyed by the zig-zag site
/// index, so a potential can later be widened (`extend_potential`) without
/// disturbing sites already drawn.
pub fn sample_env(
    dist: EnvDistribution,
    n: usize,
    seeds: &SeedTree,
    label: &str,
    index: u64,
) -> Result<StepPotential, EnvError> {
    if n == 0 {
        return Err(EnvError::NoSites);
    }
    let right = sample_sites(dist, n, seeds, label, index, 1);
    let left = sample_sites(dist, n, seeds, label, index, -1);
    let p0 = dist.sample_prob(&mut seeds.stream_n(label, &[index, 3, 0]));
    potential_from_probs(&left, &right)?.with_p_zero(p0)
}

/// Widens a potential to `n` sites per side, preserving existing sites.
pub fn extend_potential(
    pot: &StepPotential,
    dist: EnvDistribution,
    n: usize,
    seeds: &SeedTree,
    label: &str,
    index: u64,
) -> Result<StepPotential, EnvError> {
    let n = n.max(pot.right_p.len()).max(pot.left_p.len());
    let right = sample_sites(dist, n, seeds, label, index, 1);
    let left = sample_sites(dist, n, seeds, label, index, -1);
    debug_assert!(right[..pot.right_p.len()] == pot.right_p[..]);
    potential_from_probs(&left, &right)?.with_p_zero(pot.p_zero)
}

fn sample_sites(
    dist: EnvDistribution,
    n: usize,
    seeds: &SeedTree,
    label: &str,
    index: u64,
    sign: i64,
) -> Vec<f64> {
    // Sites are drawn sequentially from the start of each block. Rejection
    // sampling consumes a variable number of raw draws per site, so blocks
    // are never entered mid-way.
    let side_code = if sign > 0 { 2u64 } else { 1u64 };
    let mut out = Vec::with_capacity(n);
    let mut rng = seeds.stream_n(label, &[index, side_code, 0]);
    for idx in 0..n {
        if idx % WING_BLOCK == 0 {
            rng = seeds.stream_n(label, &[index, side_code, (idx / WING_BLOCK) as u64]);
        }
        out.push(dist.sample_prob(&mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_path_is_single_point() {
        let p = sample_brownian(1.0, 0, 0, &SeedTree::new(1), "t", 0).unwrap();
        assert_eq!(p.values(), &[0.0]);
    }

    #[test]
    fn sampled_paths_are_pinned_and_deterministic() {
        let t = SeedTree::new(42);
        let a = sample_brownian(0.01, 50, 80, &t, "env", 3).unwrap();
        let b = sample_brownian(0.01, 50, 80, &t, "env", 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.origin_value(), 0.0);
        assert_eq!(a.values().len(), 131);
    }

    #[test]
    fn wing_extension_preserves_prefix() {
        let t = SeedTree::new(9);
        let short = sample_wing(0.01, 100, &t, "w", 5, 0);
        let long = sample_wing(0.01, 9000, &t, "w", 5, 0);
        assert_eq!(&long[..100], &short[..]);
    }

    #[test]
    fn terminal_variance_matches_brownian_scaling() {
        // Var B(1) = 1; sample mean of B(1)^2 over 10^4 draws within 3 SE.
        let t = SeedTree::new(2024);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let p = sample_brownian(0.01, 0, 100, &t, "var", i).unwrap();
            let x = *p.values().last().unwrap();
            sum += x * x;
            sumsq += x.powi(4);
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn potential_examples() {
        // all p = 1/2 -> V = 0
        let p = potential_from_probs(&[0.5; 4], &[0.5; 4]).unwrap();
        for k in -4..=4 {
            assert!(p.value(k).abs() < 1e-15);
        }
        // p1 = 1/(1+e) -> V(1) = 1
        let e = std::f64::consts::E;
        let p = potential_from_probs(&[], &[1.0 / (1.0 + e)]).unwrap();
        assert!((p.value(1) - 1.0).abs() < 1e-12);
        // canceling increments
        let p = potential_from_probs(&[], &[1.0 / (1.0 + e), e / (1.0 + e)]).unwrap();
        assert!((p.value(1) - 1.0).abs() < 1e-12);
        assert!(p.value(2).abs() < 1e-12);
    }

    #[test]
    fn potential_round_trip_recovers_log_odds() {
        let t = SeedTree::new(5);
        let pot = sample_env(EnvDistribution::TruncatedGaussian { bound: 4.0 }, 200, &t, "rt", 0).unwrap();
        for k in 1..=200i64 {
            let lo = ((1.0 - pot.prob(k)) / pot.prob(k)).ln();
            assert!((pot.value(k) - pot.value(k - 1) - lo).abs() < 1e-12);
            let lo_m = ((1.0 - pot.prob(-k)) / pot.prob(-k)).ln();
            assert!((pot.value(-k + 1) - pot.value(-k) - lo_m).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_probs() {
        assert!(potential_from_probs(&[], &[0.0]).is_err());
        assert!(potential_from_probs(&[1.0], &[]).is_err());
    }

    #[test]
    fn env_law_moments() {
        let t = SeedTree::new(77);
        for dist in [EnvDistribution::TwoPointSymmetric, EnvDistribution::TruncatedGaussian { bound: 4.0 }] {
            let n = 100_000usize;
            let mut rng = t.stream("mom", 0);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let y = dist.sample_log_odds(&mut rng);
                s += y;
                s2 += y * y;
            }
            let mean = s / n as f64;
            let var = s2 / n as f64 - mean * mean;
            // SE of the mean is sqrt(1/n); SE of the variance ~ sqrt(2/n).
            assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{dist:?} mean {mean}");
            assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{dist:?} var {var}");
        }
    }

    #[test]
    fn same_seed_same_potential() {
        let t = SeedTree::new(1);
        let a = sample_env(EnvDistribution::TwoPointSymmetric, 64, &t, "p", 9).unwrap();
        let b = sample_env(EnvDistribution::TwoPointSymmetric, 64, &t, "p", 9).unwrap();
        assert_eq!(a, b);
        let wider = extend_potential(&a, EnvDistribution::TwoPointSymmetric, 128, &t, "p", 9).unwrap();
        for k in 1..=64 {
            assert_eq!(wider.value(k), a.value(k));
            assert_eq!(wider.value(-k), a.value(-k));
        }
    }

    #[test]
    fn binary_round_trip() {
        let t = SeedTree::new(3);
        let p = sample_brownian(0.5, 7, 9, &t, "io", 0).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        let q = GridPath::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn scaled_path_transforms_grid() {
        let p = GridPath::new(0.5, 1, 1, vec![1.0, 0.0, 2.0]).unwrap();
        let s = p.scaled(2.0);
        assert_eq!(s.dt(), 2.0);
        assert_eq!(s.values(), &[2.0, 0.0, 4.0]);
        // g(t) = c f(t/c^2): value at scaled grid point equals c * original.
        assert_eq!(s.value_at(2.0), 2.0 * p.value_at(0.5));
    }

    #[test]
    fn interpolation_between_grid_points() {
        let p = GridPath::new(1.0, 1, 1, vec![2.0, 0.0, 4.0]).unwrap();
        assert_eq!(p.value_at(0.5), 2.0);
        assert_eq!(p.value_at(-0.5), 1.0);
        assert_eq!(p.value_at(10.0), 4.0);
    }
}
