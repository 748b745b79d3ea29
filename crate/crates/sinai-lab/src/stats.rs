//! Monte Carlo estimates, weighted log-decay fits, and small test statistics.

use serde::Serialize;

/// A Monte Carlo result with its sampling error.
#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub meta: String,
}

impl McEstimate {
    /// Binomial estimate from a hit count.
    pub fn from_hits(hits: u64, n: u64, seed: u64, meta: String) -> Self {
        assert!(n > 0);
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        McEstimate { estimate: p, std_error: se, n_samples: n, seed, meta }
    }

    /// Mean estimate from running sums.
    pub fn from_sums(sum: f64, sumsq: f64, n: u64, seed: u64, meta: String) -> Self {
        assert!(n > 1);
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        McEstimate { estimate: mean, std_error: (var / nf).sqrt(), n_samples: n, seed, meta }
    }

    /// Direct construction for estimators with externally derived errors.
    pub fn with_error(estimate: f64, std_error: f64, n: u64, seed: u64, meta: String) -> Self {
        McEstimate { estimate, std_error, n_samples: n, seed, meta }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        (self.estimate - target).abs() <= n_se * self.std_error
    }
}

/// One point of a decay fit: a probability estimate at scale `t`.
#[derive(Clone, Debug, Serialize)]
pub struct FitPoint {
    pub t: f64,
    pub log_p: f64,
    pub log_se: f64,
    pub p: f64,
    pub hits: Option<u64>,
}

/// Weighted least-squares fit of `log p` against the scale parameter.
///
/// The model is `log p = intercept + slope * t`, optionally augmented with a
/// `coeff / t` term that absorbs short-window barrier costs, which enter the
/// log-probability at order `1/t`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub inverse_coeff: Option<f64>,
    pub points: Vec<FitPoint>,
    pub meta: String,
}

impl RateFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Fits `log p = b0 + b1 t (+ b2 / t)` by least squares weighted with the
/// delta-method variances `(se_p / p)^2`. Returns the fit or an error message
/// naming unusable points (zero estimates abort the fit).
pub fn fit_log_decay(points: &[(f64, McEstimate)], with_inverse: bool, meta: &str) -> Result<RateFit, String> {
    let mut fps = Vec::with_capacity(points.len());
    for (t, est) in points {
        if est.estimate <= 0.0 {
            return Err(format!(
                "zero-hit cell at t = {t} ({}): increase the sample budget",
                est.meta
            ));
        }
        let log_se = (est.std_error / est.estimate).max(1e-12);
        fps.push(FitPoint {
            t: *t,
            log_p: est.estimate.ln(),
            log_se,
            p: est.estimate,
            hits: None,
        });
    }
    let k = if with_inverse { 3 } else { 2 };
    if fps.len() < k + 1 {
        return Err(format!("need at least {} points for the fit, got {}", k + 1, fps.len()));
    }
    // normal equations
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for p in &fps {
        let w = 1.0 / (p.log_se * p.log_se);
        let row = [1.0, p.t, if with_inverse { 1.0 / p.t } else { 0.0 }];
        for i in 0..k {
            for j in 0..k {
                xtx[i][j] += w * row[i] * row[j];
            }
            xty[i] += w * row[i] * p.log_p;
        }
    }
    let inv = invert(&xtx, k).ok_or("singular normal equations in decay fit")?;
    let mut beta = [0.0f64; 3];
    for i in 0..k {
        for j in 0..k {
            beta[i] += inv[i][j] * xty[j];
        }
    }
    Ok(RateFit {
        slope: beta[1],
        slope_std_error: inv[1][1].max(0.0).sqrt(),
        intercept: beta[0],
        inverse_coeff: if with_inverse { Some(beta[2]) } else { None },
        points: fps,
        meta: meta.to_string(),
    })
}

fn invert(a: &[[f64; 3]; 3], k: usize) -> Option<[[f64; 3]; 3]> {
    let mut m = [[0.0f64; 6]; 3];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = a[i][j];
        }
        m[i][k + i] = 1.0;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&r, &s| m[r][col].abs().partial_cmp(&m[s][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for j in 0..2 * k {
            m[col][j] /= d;
        }
        for r in 0..k {
            if r != col {
                let f = m[r][col];
                for j in 0..2 * k {
                    m[r][j] -= f * m[col][j];
                }
            }
        }
    }
    let mut out = [[0.0f64; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            out[i][j] = m[i][k + j];
        }
    }
    Some(out)
}

/// Two-sample chi-square test on aligned histograms. Adjacent bins are pooled
/// until every pooled bin holds at least `min_count` observations combined.
/// Returns `(statistic, degrees_of_freedom, p_value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_count: u64) -> (f64, usize, f64) {
    assert_eq!(a.len(), b.len());
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0u64, 0u64);
    for i in 0..a.len() {
        acc.0 += a[i];
        acc.1 += b[i];
        if acc.0 + acc.1 >= min_count {
            pooled.push((acc.0 as f64, acc.1 as f64));
            acc = (0, 0);
        }
    }
    if acc.0 + acc.1 > 0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0 as f64;
            last.1 += acc.1 as f64;
        } else {
            pooled.push((acc.0 as f64, acc.1 as f64));
        }
    }
    let n1: f64 = pooled.iter().map(|p| p.0).sum();
    let n2: f64 = pooled.iter().map(|p| p.1).sum();
    let total = n1 + n2;
    let mut stat = 0.0;
    for (x, y) in &pooled {
        let e1 = (x + y) * n1 / total;
        let e2 = (x + y) * n2 / total;
        if e1 > 0.0 {
            stat += (x - e1) * (x - e1) / e1;
        }
        if e2 > 0.0 {
            stat += (y - e2) * (y - e2) / e2;
        }
    }
    let df = pooled.len().saturating_sub(1).max(1);
    let p = chi_square_sf(stat, df as f64);
    (stat, df, p)
}

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df).expect("positive df");
    (1.0 - d.cdf(x)).clamp(0.0, 1.0)
}

/// Standard normal upper tail.
pub fn normal_sf(x: f64) -> f64 {
    use statrs::function::erf::erfc;
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    1.0 - normal_sf(x)
}

/// Median of a sample (without mutating the input).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
