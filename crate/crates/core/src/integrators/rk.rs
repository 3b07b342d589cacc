use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::integrators::ButcherTableau;
use crate::scalar::{from_lifted_point, into_lifted_point, lift_constant, Real, Scalar};
use crate::series::{check_dim, FieldSeries, Jet, VectorField};

/// Residual tolerance for implicit numeric stages (scaled by `max(‖Z‖∞, 1)`).
pub const STAGE_TOLERANCE: f64 = 1e-14;
/// Iteration cap for implicit numeric stages.
pub const STAGE_MAX_ITERATIONS: usize = 50;

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// One step written as an increment: returns `Φ_h(x) - x`.
///
/// Keeping the increment separate from `x` avoids cancellation when local
/// errors are compared at small steps.
pub fn rk_increment<F: VectorField>(
    tab: &ButcherTableau<F::Real>,
    f: &F,
    x: &[F::Real],
    h: F::Real,
) -> Result<Vec<F::Real>> {
    check_dim(f.dim(), x.len())?;
    if !Float::is_finite(h) {
        return Err(Error::invalid("step size must be finite"));
    }
    let derivs = if tab.is_explicit() {
        explicit_stage_derivatives(tab, f, x, h)?
    } else {
        implicit_stage_derivatives(tab, f, x, h)?
    };
    let mut inc = vec![F::Real::zero(); x.len()];
    for (bi, k) in tab.b().iter().zip(&derivs) {
        if !bi.is_zero() {
            axpy(&mut inc, h * *bi, k);
        }
    }
    Ok(inc)
}

fn explicit_stage_derivatives<F: VectorField>(
    tab: &ButcherTableau<F::Real>,
    f: &F,
    x: &[F::Real],
    h: F::Real,
) -> Result<Vec<Vec<F::Real>>> {
    let mut derivs: Vec<Vec<F::Real>> = Vec::with_capacity(tab.stages());
    for row in tab.a() {
        let mut z = vec![F::Real::zero(); x.len()];
        for (aij, k) in row.iter().zip(&derivs) {
            if !aij.is_zero() {
                axpy(&mut z, h * *aij, k);
            }
        }
        let v: Vec<F::Real> = x.iter().zip(&z).map(|(a, b)| *a + *b).collect();
        derivs.push(f.eval(&v)?);
    }
    Ok(derivs)
}

/// Fixed-point iteration on the stage increments `Z_i = h Σ_j a_ij f(x + Z_j)`,
/// seeded at `Z = 0`.
fn implicit_stage_derivatives<F: VectorField>(
    tab: &ButcherTableau<F::Real>,
    f: &F,
    x: &[F::Real],
    h: F::Real,
) -> Result<Vec<Vec<F::Real>>> {
    let n = tab.stages();
    let tol = F::Real::lit(STAGE_TOLERANCE);
    let one = F::Real::lit(1.0);
    let mut z = vec![vec![F::Real::zero(); x.len()]; n];
    let mut residual = F::Real::infinity();
    for _ in 0..STAGE_MAX_ITERATIONS {
        let derivs = stage_evals(f, x, &z)?;
        let mut next = vec![vec![F::Real::zero(); x.len()]; n];
        for (zi, row) in next.iter_mut().zip(tab.a()) {
            for (aij, k) in row.iter().zip(&derivs) {
                if !aij.is_zero() {
                    axpy(zi, h * *aij, k);
                }
            }
        }
        let mut scale = one;
        residual = F::Real::zero();
        for (a, b) in next.iter().zip(&z) {
            for (p, q) in a.iter().zip(b) {
                residual = residual.max((*p - *q).abs());
                scale = scale.max(p.abs());
            }
        }
        z = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol * scale {
            return stage_evals(f, x, &z);
        }
    }
    Err(Error::Convergence {
        residual: residual.to_f64_lossy(),
    })
}

fn stage_evals<F: VectorField>(
    f: &F,
    x: &[F::Real],
    z: &[Vec<F::Real>],
) -> Result<Vec<Vec<F::Real>>> {
    z.iter()
        .map(|zi| {
            let v: Vec<F::Real> = x.iter().zip(zi).map(|(a, b)| *a + *b).collect();
            f.eval(&v)
        })
        .collect()
}

/// `(Φ_{h,f})^S(x)`: `compositions` successive steps of size `h`.
pub fn rk_step<F: VectorField>(
    tab: &ButcherTableau<F::Real>,
    f: &F,
    x: &[F::Real],
    h: F::Real,
    compositions: usize,
) -> Result<Vec<F::Real>> {
    if compositions == 0 {
        return Err(Error::invalid("composition count must be at least 1"));
    }
    let mut y = x.to_vec();
    for _ in 0..compositions {
        let inc = rk_increment(tab, f, &y, h)?;
        for (yi, d) in y.iter_mut().zip(inc) {
            *yi += d;
        }
    }
    Ok(y)
}

/// Evaluates `Σ_m h^m g_m(v)` at a jet-valued point, truncated to the
/// order of `v`.
fn series_field_at<G, S>(g: &G, v: &[Jet<S>]) -> Result<Vec<Jet<S>>>
where
    G: FieldSeries,
    S: Scalar<Real = G::Real>,
{
    let order = v[0].order();
    let count = g.terms().min(order + 1);
    let terms: Vec<Vec<Jet<S>>> = if v.iter().all(Jet::is_constant) {
        // g_m of a constant series is the constant series of g_m.
        let base: Vec<S> = v.iter().map(|c| c.coeff(0).clone()).collect();
        g.eval_terms(&base, count)?
            .into_iter()
            .map(|t| lift_constant(&t, order))
            .collect()
    } else {
        let lifted = into_lifted_point::<S>(v.to_vec())?;
        g.eval_terms(&lifted, count)?
            .into_iter()
            .map(from_lifted_point::<S>)
            .collect()
    };
    let mut out: Vec<Jet<S>> = terms[0].clone();
    for (m, term) in terms.iter().enumerate().skip(1) {
        for (o, t) in out.iter_mut().zip(term) {
            *o += t.shifted(m, order);
        }
    }
    Ok(out)
}

/// `x + h Σ_j w_j G_j`, truncated to `order`.
fn stage_point<S: Scalar>(
    x: &[S],
    weights: &[S::Real],
    derivs: &[Vec<Jet<S>>],
    order: usize,
) -> Vec<Jet<S>> {
    let mut v = lift_constant(x, order);
    for (w, g) in weights.iter().zip(derivs) {
        if w.is_zero() {
            continue;
        }
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi += gi.scale(*w).shifted(1, order);
        }
    }
    v
}

/// Power series in `h` of `Φ_{h, g_h}(x)` where `g_h = Σ_k h^k g_k`,
/// returned to order `k + 1`.
///
/// Stages are jets of order `k`. Explicit tableaux resolve them in one
/// forward pass; implicit ones use `k` fixed-point sweeps from `v_i = x`,
/// each gaining one order in `h`, plus the final evaluation.
pub fn rk_step_series<G, S>(
    tab: &ButcherTableau<G::Real>,
    g: &G,
    x: &[S],
    k: usize,
) -> Result<Vec<Jet<S>>>
where
    G: FieldSeries,
    S: Scalar<Real = G::Real>,
{
    check_dim(g.dim(), x.len())?;
    if g.terms() == 0 {
        return Err(Error::invalid("field series has no terms"));
    }
    let n = tab.stages();
    let derivs: Vec<Vec<Jet<S>>> = if tab.is_explicit() {
        let mut derivs = Vec::with_capacity(n);
        for row in tab.a() {
            let v = stage_point(x, &row[..derivs.len()], &derivs, k);
            derivs.push(series_field_at(g, &v)?);
        }
        derivs
    } else {
        let mut stages: Vec<Vec<Jet<S>>> = vec![lift_constant(x, k); n];
        for _ in 0..k {
            let derivs = stages
                .iter()
                .map(|v| series_field_at(g, v))
                .collect::<Result<Vec<_>>>()?;
            stages = tab
                .a()
                .iter()
                .map(|row| stage_point(x, row, &derivs, k))
                .collect();
        }
        stages
            .iter()
            .map(|v| series_field_at(g, v))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(stage_point(x, tab.b(), &derivs, k + 1))
}
