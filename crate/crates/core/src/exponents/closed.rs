use serde::Serialize;

use super::fixed::{exponent_curve, ExponentOptions};
use super::objective::{ContinuousMapping, RateRule};
use super::optimize::{pattern_search_max, Blocks, LocalConfig};
use crate::ensemble::{kernel_grid, mi_yz_through};
use crate::error::{Error, Result};
use crate::types::{mutual_information_flat, ConditionalKernel, Distribution};

/// Zero-rate exponents of the noiseless, uncompressed system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroRateForms {
    /// `E(0) = -ln sum G(x)^2`.
    pub e0: f64,
    /// `E_DD(0) = -ln max G(x)`.
    pub e0_dd: f64,
    /// Minimizer `Q*(x) = G(x)^2 / sum G^2` of `2 D(Q||G) + H(Q)`.
    pub q_star: Vec<f64>,
}

pub fn zero_rate_closed_forms(source: &Distribution) -> ZeroRateForms {
    let g = source.probs();
    let s: f64 = g.iter().map(|p| p * p).sum();
    let max = g.iter().copied().fold(0.0, f64::max);
    ZeroRateForms {
        e0: (-s.ln()).max(0.0),
        e0_dd: (-max.ln()).max(0.0),
        q_star: g.iter().map(|p| p * p / s).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearityRow {
    pub rate: f64,
    pub value: f64,
    pub predicted: f64,
    pub deviation: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearityReport {
    pub e0: f64,
    pub tolerance: f64,
    pub rows: Vec<LinearityRow>,
    /// Largest rate of the initial run of rows satisfying `|E(R) - (E(0) - R)| <= tolerance`.
    pub largest_linear_rate: Option<f64>,
}

/// Compares `E(R)` with `E(0) - R` on the given rates (sorted internally).
pub fn low_rate_linearity_check(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    rates: &[f64],
    tolerance: f64,
    opts: &ExponentOptions,
) -> Result<LinearityReport> {
    let mut grid: Vec<f64> = rates.iter().copied().filter(|r| *r > 0.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.insert(0, 0.0);
    let curve = exponent_curve(source, channel, mapping, &grid, RateRule::Ensemble, opts)?;
    let e0 = curve[0].value;
    let rows: Vec<LinearityRow> = grid
        .iter()
        .zip(&curve)
        .map(|(&rate, e)| {
            let predicted = e0 - rate;
            let deviation = (e.value - predicted).abs();
            LinearityRow { rate, value: e.value, predicted, deviation, within: deviation <= tolerance }
        })
        .collect();
    let largest_linear_rate = rows.iter().take_while(|r| r.within).map(|r| r.rate).last();
    Ok(LinearityReport { e0, tolerance, rows, largest_linear_rate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityResult {
    /// `max I(Y;Z)` subject to `I(X;Y) <= R_C`.
    pub value: f64,
    pub kernel: ConditionalKernel,
    pub i_xy: f64,
}

fn i_xy_of(g: &[f64], kernel: &[f64], ky: usize) -> f64 {
    let joint: Vec<f64> = (0..g.len() * ky).map(|i| g[i / ky] * kernel[i]).collect();
    mutual_information_flat(&joint, g.len(), ky)
}

const CAPACITY_GRID_CAP: usize = 4_000_000;

/// `max over Q_{Y|X}` of `I(Y;Z)` for `Y <- X -> Z`, `X ~ G`, under `I(X;Y) <= R_C`.
///
/// `I(Y;Z)` is convex in the kernel, so the maximum is searched on a kernel grid
/// followed by a feasibility-preserving pattern search; `warm` adds a starting kernel.
pub fn identification_capacity(
    source: &Distribution,
    channel: &ConditionalKernel,
    k_y: usize,
    r_c: f64,
    opts: &ExponentOptions,
    warm: Option<&ConditionalKernel>,
) -> Result<CapacityResult> {
    let (kx, g) = (source.len(), source.probs());
    if channel.k_in() != kx || k_y == 0 {
        return Err(Error::DimensionMismatch("capacity: alphabets".into()));
    }
    if !(r_c >= 0.0) {
        return Err(Error::InvalidParameter(format!("R_C = {r_c}")));
    }
    let feasible = |k: &[f64]| i_xy_of(g, k, k_y) <= r_c + 1e-12;
    let objective = |k: &[f64]| if feasible(k) { mi_yz_through(g, k, k_y, channel) } else { f64::NEG_INFINITY };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut offer = |k: Vec<f64>| {
        let v = objective(&k);
        if v.is_finite() && best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, k));
        }
    };
    for k in kernel_grid(kx, k_y, opts.kernel_grid_step, CAPACITY_GRID_CAP)? {
        offer(k);
    }
    if let Some(w) = warm {
        if w.k_in() == kx && w.k_out() == k_y {
            offer(w.as_flat().to_vec());
        }
    }
    // The constant kernel is always feasible.
    let (v0, k0) = best.unwrap_or_else(|| (0.0, vec![1.0 / k_y as f64; kx * k_y]));
    let blocks = Blocks::new(vec![k_y; kx]);
    let cfg = LocalConfig { floor: 0.0, pattern_step: opts.kernel_grid_step / 2.0, min_step: 1e-7, ..LocalConfig::default() };
    let (k, v) = pattern_search_max(&objective, k0, v0, &blocks, &cfg);
    let kernel = ConditionalKernel::normalized(kx, k_y, k)?;
    let value = mi_yz_through(g, kernel.as_flat(), k_y, channel).max(0.0);
    let i_xy = i_xy_of(g, kernel.as_flat(), k_y);
    debug_assert!(value >= v - 1e-9);
    Ok(CapacityResult { value, kernel, i_xy })
}

/// Capacities over ascending `R_C`, each warm-started from its predecessor's kernel.
pub fn identification_capacity_curve(
    source: &Distribution,
    channel: &ConditionalKernel,
    k_y: usize,
    rates: &[f64],
    opts: &ExponentOptions,
) -> Result<Vec<CapacityResult>> {
    if rates.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("R_C grid must be ascending".into()));
    }
    let mut out: Vec<CapacityResult> = Vec::new();
    for &r in rates {
        let warm = out.last().map(|c| c.kernel.clone());
        out.push(identification_capacity(source, channel, k_y, r, opts, warm.as_ref())?);
    }
    Ok(out)
}
