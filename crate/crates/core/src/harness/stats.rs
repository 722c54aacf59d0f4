use serde::Serialize;

use crate::decoders::DecoderKind;
use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `errors` successes in `trials` Bernoulli draws.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if errors == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Error-rate estimate of one decoder at one length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub decoder: DecoderKind,
    pub n: usize,
    pub errors: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `-ln(p_hat) / n`; infinite when no error was observed.
    pub emp_exponent: f64,
}

impl ErrorEstimate {
    pub fn new(decoder: DecoderKind, n: usize, errors: u64, trials: u64) -> Result<Self> {
        if trials == 0 || errors > trials || n == 0 {
            return Err(Error::InvalidParameter(format!("errors {errors} of {trials} trials at n = {n}")));
        }
        let p_hat = errors as f64 / trials as f64;
        let (ci_lo, ci_hi) = wilson_interval(errors, trials, Z_95);
        Ok(Self { decoder, n, errors, trials, p_hat, ci_lo, ci_hi, emp_exponent: -p_hat.ln() / n as f64 })
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }

    /// CSV row in the column order of [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.10e},{:.10e},{:.10e},{}",
            self.decoder,
            self.n,
            self.trials,
            self.errors,
            self.p_hat,
            self.ci_lo,
            self.ci_hi,
            if self.emp_exponent.is_finite() { format!("{:.10e}", self.emp_exponent) } else { "inf".into() }
        )
    }
}

pub const CSV_HEADER: &str = "decoder,n,trials,errors,p_hat,ci_lo,ci_hi,emp_exponent";

/// Least-squares line through `(n, -ln p)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Points used, as `(n, -ln p)`.
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    /// Lengths dropped because `p = 0`.
    pub excluded: Vec<usize>,
}

/// Slope of `-ln p_hat` against `n`; a trend statistic, not an asymptotic claim.
pub fn exponent_regression(points: &[(usize, f64)]) -> Result<Regression> {
    let (used, excluded): (Vec<_>, Vec<_>) = points.iter().partition(|(_, p)| *p > 0.0);
    if used.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "exponent slope undefined: {} lengths with a positive error rate, need 3",
            used.len()
        )));
    }
    let pts: Vec<(f64, f64)> = used.iter().map(|&&(n, p)| (n as f64, -p.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("exponent slope undefined: all lengths equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = pts.iter().map(|p| p.1 - (slope * p.0 + intercept)).collect();
    Ok(Regression {
        slope,
        intercept,
        points: pts,
        residuals,
        excluded: excluded.iter().map(|p| p.0).collect(),
    })
}

/// Kendall rank correlation with the tau-b tie correction; values closer than `tol`
/// count as tied. `None` when either ranking is constant.
pub fn kendall_tau_b(a: &[f64], b: &[f64], tol: f64) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let sign = |d: f64| if d.abs() <= tol { 0 } else if d > 0.0 { 1 } else { -1 };
    let (mut concordant, mut discordant, mut tied_a, mut tied_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (sign(a[i] - a[j]), sign(b[i] - b[j])) {
                (0, 0) => {}
                (0, _) => tied_a += 1,
                (_, 0) => tied_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tied_a) * (concordant + discordant + tied_b)) as f64).sqrt();
    (denom > 0.0).then(|| (concordant - discordant) as f64 / denom)
}
