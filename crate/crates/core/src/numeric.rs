//! Floating-point helpers shared by the environment, baselines and training.

/// Split `total` across `weights` so the parts sum to `total` *exactly* in
/// floating point. Every part except the last is snapped down to a
/// power-of-two grid about 2^-33 below `total`'s magnitude; the last part
/// absorbs the remainder. Because all leading parts sit on one binary grid,
/// their partial sums are exact, and the final subtraction reconstructs
/// `total` bit for bit.
pub fn allocate_exact(total: f64, weights: &[f64]) -> Vec<f64> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![total];
    }
    if total == 0.0 {
        return vec![0.0; n];
    }
    debug_assert!(total > 0.0 && total.is_finite());
    let sum_w: f64 = weights.iter().sum();
    let uniform = 1.0 / n as f64;
    let grid = (total.log2().floor() - 33.0).exp2();
    let mut out = Vec::with_capacity(n);
    let mut allocated = 0.0;
    for &w in &weights[..n - 1] {
        let share = if sum_w > 0.0 { w / sum_w } else { uniform };
        let ideal = total * share.clamp(0.0, 1.0);
        let v = (ideal / grid).floor().max(0.0) * grid;
        out.push(v);
        allocated += v;
    }
    out.push(total - allocated);
    out
}

/// Snap onto the 2^-40 grid. Values produced this way form a lattice on
/// which sums and differences below 2^13 in magnitude are exact, so
/// telescoping identities over snapped values hold bit for bit.
pub fn snap_q40(x: f64) -> f64 {
    const SCALE: f64 = 1099511627776.0; // 2^40
    (x * SCALE).round() / SCALE
}
