//! Observed convergence orders over mesh sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders below this are flagged as not converging.
pub const MIN_ORDER: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Fitted order `p` in `|q(h) − q(h')| ~ h^p`; `None` when the
    /// differences vanish.
    pub order: Option<f64>,
    /// Richardson-extrapolated value from the two finest meshes.
    pub extrapolated: f64,
    /// `|q(h_fine) − extrapolated|`.
    pub error_estimate: f64,
    pub converged: bool,
}

/// Least-squares slope of `ln|q_j − q_{j+1}|` against `ln h_j`.
///
/// For geometric `h` this is the classical three-mesh estimate
/// `ln(|d_1|/|d_2|)/ln r`. Differences that vanish to rounding are treated
/// as converged.
pub fn observed_order(h: &[f64], q: &[f64]) -> Result<OrderEstimate> {
    if h.len() != q.len() {
        return Err(Error::InvalidParameter(format!(
            "{} mesh sizes for {} values",
            h.len(),
            q.len()
        )));
    }
    if h.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "an order estimate needs at least 3 meshes, got {}",
            h.len()
        )));
    }
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
    let hs: Vec<f64> = order.iter().map(|&i| h[i]).collect();
    let qs: Vec<f64> = order.iter().map(|&i| q[i]).collect();
    if hs.iter().any(|&x| !(x > 0.0)) || hs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("mesh sizes must be positive and distinct".into()));
    }
    let scale = qs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = qs
        .windows(2)
        .zip(&hs)
        .filter(|(w, _)| (w[0] - w[1]).abs() > floor)
        .map(|(w, &hj)| (hj.ln(), (w[0] - w[1]).abs().ln()))
        .collect();
    let n = qs.len();
    let fine = qs[n - 1];
    if pts.len() < 2 {
        return Ok(OrderEstimate {
            order: None,
            extrapolated: fine,
            error_estimate: (qs[n - 2] - fine).abs(),
            converged: true,
        });
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    let r = hs[n - 2] / hs[n - 1];
    let extrapolated = if p > 0.0 {
        fine + (fine - qs[n - 2]) / (r.powf(p) - 1.0)
    } else {
        fine
    };
    Ok(OrderEstimate {
        order: Some(p),
        extrapolated,
        error_estimate: (fine - extrapolated).abs(),
        converged: p >= MIN_ORDER,
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` if fewer than two
/// positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}
