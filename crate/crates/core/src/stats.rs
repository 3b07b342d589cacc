//! Small fitting helpers shared by the order diagnostics.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Least-squares slope of `log y` against `log x`.
///
/// Points with non-positive or non-finite `y` are dropped; at least two
/// must remain.
pub fn fit_loglog_slope<T: Real>(xs: &[T], ys: &[T]) -> Result<T> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > T::lit(0.0) && **y > T::lit(0.0) && Float::is_finite(**y))
        .map(|(x, y)| (x.to_f64_lossy().ln(), y.to_f64_lossy().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "{} usable points for a log-log fit",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(T::lit(sxy / sxx))
}

/// `log₂(e(2h) / e(h))` for consecutive pairs of a grid sorted by `h`,
/// where each pair is exactly a factor two apart.
pub fn pairwise_log2_ratios(hs: &[f64], errs: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut idx: Vec<usize> = (0..hs.len()).collect();
    idx.sort_by(|a, b| hs[*a].total_cmp(&hs[*b]));
    let mut out = Vec::new();
    for (i, &a) in idx.iter().enumerate() {
        for &b in &idx[i + 1..] {
            if ((hs[b] / hs[a]) - 2.0).abs() < 1e-9 && errs[a] > 0.0 && errs[b] > 0.0 {
                out.push((hs[a], hs[b], (errs[b] / errs[a]).log2()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let hs = [0.01, 0.02, 0.04, 0.08];
        let es: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        let s = fit_loglog_slope(&hs, &es).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        let r = pairwise_log2_ratios(&hs, &es);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|p| (p.2 - 2.0).abs() < 1e-12));
    }

    #[test]
    fn degenerate() {
        assert!(fit_loglog_slope(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
