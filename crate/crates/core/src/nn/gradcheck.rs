//! Central finite-difference verification of analytic gradients.
//!
//! The relative error of a coordinate compares the analytic and numeric
//! values against a floor tied to the gradient's overall scale, so
//! near-zero coordinates are judged in absolute terms relative to the
//! largest gradient component rather than against themselves.

pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Compare `analytic` against central differences of `f` at `point` on the
/// given coordinates (all coordinates if `coords` is empty).
pub fn finite_diff_check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len());
    let all: Vec<usize>;
    let coords = if coords.is_empty() {
        all = (0..point.len()).collect();
        &all
    } else {
        coords
    };

    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        numeric.push((up - down) / (2.0 * step));
    }

    let scale = numeric
        .iter()
        .chain(coords.iter().map(|&i| &analytic[i]))
        .fold(0.0f64, |acc, &g| acc.max(g.abs()));
    let floor = 1e-2 * scale + 1e-12;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        checked: coords.len(),
    };
    for (&i, &fd) in coords.iter().zip(&numeric) {
        let ad = analytic[i];
        let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(floor);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coord = i;
        }
    }
    report
}
