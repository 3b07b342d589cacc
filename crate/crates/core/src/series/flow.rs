use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};
use crate::series::{field::check_dim, field_on_jet, Jet, VectorField};

/// Taylor coefficients of the exact flow `t ↦ φ_{t,f}(x)` up to order `k + 1`.
///
/// Uses `y_{m+1} = [f(y(t))]_m / (m + 1)`, so coefficient 1 is `f(x)` and
/// coefficient 2 is `½ f'f(x)`. The base point may itself be jet-valued.
pub fn exact_flow_jet<F, S>(f: &F, x: &[S], k: usize) -> Result<Vec<Jet<S>>>
where
    F: VectorField,
    S: Scalar<Real = F::Real>,
{
    check_dim(f.dim(), x.len())?;
    let mut coeffs: Vec<Vec<S>> = x.iter().map(|c| vec![c.clone()]).collect();
    for m in 0..=k {
        let y: Vec<Jet<S>> = coeffs.iter().map(|c| Jet::from_vec(c.clone())).collect();
        let fy = field_on_jet(f, &y)?;
        let inv = F::Real::lit(1.0 / (m + 1) as f64);
        for (c, v) in coeffs.iter_mut().zip(&fy) {
            c.push(v.coeff(m).scale(inv));
        }
    }
    Ok(coeffs.into_iter().map(Jet::from_vec).collect())
}

/// Taylor order used by [`reference_flow`].
pub const REFERENCE_ORDER: usize = 16;
/// Largest allowed substep count for [`reference_flow`].
pub const MAX_SUBSTEPS: usize = 1 << 10;

/// High-accuracy flow `φ_{t,f}(x)` by order-16 Taylor series.
///
/// The interval is split into `2^m` equal substeps, with `m` raised until
/// the order-16 term of every substep is at most `1e-14 · max(‖y‖∞, 1)`.
pub fn reference_flow<F>(f: &F, x: &[F::Real], t: F::Real) -> Result<Vec<F::Real>>
where
    F: VectorField,
{
    check_dim(f.dim(), x.len())?;
    let tol = F::Real::lit(1e-14);
    let one = F::Real::lit(1.0);
    let mut n = 1usize;
    while n <= MAX_SUBSTEPS {
        let tau = t / F::Real::lit(n as f64);
        if let Some(y) = taylor_substeps(f, x, tau, n, tol, one)? {
            return Ok(y);
        }
        n *= 2;
    }
    Err(Error::Stiffness {
        max_substeps: MAX_SUBSTEPS,
    })
}

fn taylor_substeps<F: VectorField>(
    f: &F,
    x: &[F::Real],
    tau: F::Real,
    n: usize,
    tol: F::Real,
    one: F::Real,
) -> Result<Option<Vec<F::Real>>> {
    let mut y = x.to_vec();
    let tail_scale = Float::powi(Float::abs(tau), REFERENCE_ORDER as i32);
    for _ in 0..n {
        let c = exact_flow_jet(f, &y, REFERENCE_ORDER - 1)?;
        let tail = c
            .iter()
            .map(|j| Float::abs(*j.coeff(REFERENCE_ORDER)))
            .fold(F::Real::lit(0.0), Float::max)
            * tail_scale;
        let norm = y.iter().map(|v| Float::abs(*v)).fold(one, Float::max);
        if !(tail <= tol * norm) {
            return Ok(None);
        }
        y = c.iter().map(|j| j.eval_at(tau)).collect();
    }
    if y.iter().any(|v| !Float::is_finite(*v)) {
        return Ok(None);
    }
    Ok(Some(y))
}

/// Samples `φ_{t,f}(x)` on `t = 0, dt, 2dt, ..., steps·dt`.
pub fn reference_trajectory<F: VectorField>(
    f: &F,
    x: &[F::Real],
    dt: F::Real,
    steps: usize,
) -> Result<Vec<Vec<F::Real>>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.to_vec());
    let mut y = x.to_vec();
    for _ in 0..steps {
        y = reference_flow(f, &y, dt)?;
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ConstantField, LinearField};
    use approx::assert_relative_eq;

    #[test]
    fn flow_of_linear_is_exponential() {
        let f = LinearField::scalar(1.0);
        let c = exact_flow_jet(&f, &[1.0], 2).unwrap();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0];
        for (a, b) in c[0].coeffs().iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn flow_of_constant_is_a_line() {
        let f = ConstantField {
            value: vec![2.0, -1.0],
        };
        let c = exact_flow_jet(&f, &[0.5, 0.25], 2).unwrap();
        assert_eq!(c[0].coeffs(), &[0.5, 2.0, 0.0, 0.0]);
        assert_eq!(c[1].coeffs(), &[0.25, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn reference_flow_linear() {
        let f = LinearField::scalar(1.0);
        let z = reference_flow(&f, &[1.0], 0.1).unwrap();
        assert!((z[0] - 0.1f64.exp()).abs() < 1e-14);
        let z = reference_flow(&f, &[1.0], 3.0).unwrap();
        assert_relative_eq!(z[0], 3.0f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn stiff_flow_rejected() {
        let f = LinearField::scalar(-1.0e5);
        assert!(matches!(
            reference_flow(&f, &[1.0], 1.0),
            Err(Error::Stiffness { .. })
        ));
    }
}
