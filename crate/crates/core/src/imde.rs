//! Inverse modified differential equations of Runge-Kutta methods.
//!
//! For a method `Φ_h` and a field `f`, the coefficients `f_0 = f, f_1, ...`
//! are fixed order by order so that `Φ_{h, f_h}` reproduces the exact flow
//! `φ_{h, f}` as a power series in `h`, where `f_h = Σ h^k f_k`. Coefficient
//! `m` is the `h^{m+1}` mismatch between the exact flow and one step of the
//! method applied to the partial sum `f_0 + ... + h^{m-1} f_{m-1}`. Since the
//! stages of that step sit at `h`-dependent points, the partial sum is
//! evaluated on jets, and the recursion re-enters itself one nesting level
//! deeper for each coefficient.

use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::integrators::{rk_increment, rk_step_series, ButcherTableau};
use crate::scalar::{Real, Scalar};
use crate::series::{
    check_dim, exact_flow_jet, reference_flow, single, FieldSeries, Jet, VectorField,
    REFERENCE_ORDER,
};
use crate::stats::fit_loglog_slope;

/// Largest truncation order accepted by [`imde_coeffs`].
pub const MAX_TRUNCATION: usize = 8;

/// Defects at or below this size carry no slope information.
pub const DEFECT_FLOOR: f64 = 1e-14;

/// `[f_0(x), ..., f_K(x)]`. The point may be numeric or jet-valued.
pub fn imde_coeffs<F, S>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    x: &[S],
    k: usize,
) -> Result<Vec<Vec<S>>>
where
    F: VectorField,
    S: Scalar<Real = F::Real>,
{
    if k > MAX_TRUNCATION {
        return Err(Error::invalid(format!(
            "truncation order {k} exceeds the cap {MAX_TRUNCATION}"
        )));
    }
    check_dim(f.dim(), x.len())?;
    let mut out = vec![f.eval(x)?];
    if k == 0 {
        return Ok(out);
    }
    let flow = exact_flow_jet(f, x, k)?;
    for m in 1..=k {
        let partial = ImdePartial { f, tab, terms: m };
        let step = rk_step_series(tab, &partial, x, m)?;
        let fm = flow
            .iter()
            .zip(&step)
            .map(|(e, n)| e.coeff(m + 1).clone() - n.coeff(m + 1).clone())
            .collect();
        out.push(fm);
    }
    Ok(out)
}

/// The partial sum `f_0 + h f_1 + ... + h^{terms-1} f_{terms-1}` as a field series.
struct ImdePartial<'a, F: VectorField> {
    f: &'a F,
    tab: &'a ButcherTableau<F::Real>,
    terms: usize,
}

impl<F: VectorField> FieldSeries for ImdePartial<'_, F> {
    type Real = F::Real;

    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn terms(&self) -> usize {
        self.terms
    }

    fn eval_terms<S: Scalar<Real = F::Real>>(&self, y: &[S], count: usize) -> Result<Vec<Vec<S>>> {
        let count = count.min(self.terms);
        if count == 0 {
            return Ok(Vec::new());
        }
        imde_coeffs(self.f, self.tab, y, count - 1)
    }
}

/// The truncated IMDE `f_h^K = Σ_{k≤K} h^k f_k` at a fixed step `h`.
#[derive(Clone, Debug)]
pub struct ImdeTruncation<F: VectorField> {
    field: F,
    tableau: ButcherTableau<F::Real>,
    order: usize,
    step: F::Real,
}

impl<F: VectorField> ImdeTruncation<F> {
    pub fn new(
        field: F,
        tableau: ButcherTableau<F::Real>,
        order: usize,
        step: F::Real,
    ) -> Result<Self> {
        if order > MAX_TRUNCATION {
            return Err(Error::invalid(format!(
                "truncation order {order} exceeds the cap {MAX_TRUNCATION}"
            )));
        }
        if !Float::is_finite(step) {
            return Err(Error::invalid("step must be finite"));
        }
        Ok(ImdeTruncation {
            field,
            tableau,
            order,
            step,
        })
    }

    pub fn field(&self) -> &F {
        &self.field
    }

    pub fn tableau(&self) -> &ButcherTableau<F::Real> {
        &self.tableau
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn step(&self) -> F::Real {
        self.step
    }

    pub fn with_step(&self, step: F::Real) -> Result<Self>
    where
        F: Clone,
    {
        Self::new(self.field.clone(), self.tableau.clone(), self.order, step)
    }

    /// `[f_0(x), ..., f_K(x)]`.
    pub fn coeffs_at<S: Scalar<Real = F::Real>>(&self, x: &[S]) -> Result<Vec<Vec<S>>> {
        imde_coeffs(&self.field, &self.tableau, x, self.order)
    }
}

/// Horner evaluation of `Σ_{k≥first} h^k c_k`.
fn horner<S: Scalar>(coeffs: &[Vec<S>], h: S::Real, first: usize) -> Vec<S> {
    let mut acc = coeffs[coeffs.len() - 1].clone();
    for c in coeffs[first..coeffs.len() - 1].iter().rev() {
        acc = acc
            .iter()
            .zip(c)
            .map(|(a, ci)| a.scale(h) + ci.clone())
            .collect();
    }
    acc
}

impl<F: VectorField> VectorField for ImdeTruncation<F> {
    type Real = F::Real;

    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval<S: Scalar<Real = F::Real>>(&self, y: &[S]) -> Result<Vec<S>> {
        if self.step.is_zero() {
            return self.field.eval(y);
        }
        let c = self.coeffs_at(y)?;
        Ok(horner(&c, self.step, 0))
    }
}

/// `f_h^K(y)` for the truncation's `K` at step `h`.
pub fn imde_field_eval<F: VectorField>(
    tr: &ImdeTruncation<F>,
    h: F::Real,
    y: &[F::Real],
) -> Result<Vec<F::Real>> {
    if h.is_zero() {
        return tr.field.eval(y);
    }
    let c = tr.coeffs_at(y)?;
    Ok(horner(&c, h, 0))
}

/// `f_h^K(y) - f(y) = Σ_{1≤k≤K} h^k f_k(y)`, formed without cancellation.
pub fn imde_field_offset<F: VectorField>(coeffs: &[Vec<F::Real>], h: F::Real) -> Vec<F::Real> {
    if coeffs.len() < 2 {
        return vec![F::Real::zero(); coeffs.first().map_or(0, Vec::len)];
    }
    horner(coeffs, h, 1).into_iter().map(|v| v * h).collect()
}

/// `φ_{h,f}(x) - x` from the order-16 Taylor polynomial when its last term is
/// negligible, and from the subdivided reference flow otherwise.
pub fn flow_increment<F: VectorField>(f: &F, x: &[F::Real], h: F::Real) -> Result<Vec<F::Real>> {
    let jet = exact_flow_jet(f, x, REFERENCE_ORDER - 1)?;
    let scale = x
        .iter()
        .fold(F::Real::lit(1.0), |m, v| Float::max(m, Float::abs(*v)));
    let tail = jet
        .iter()
        .map(|c| {
            Float::abs(c.coeff(REFERENCE_ORDER).clone())
                * Float::powi(Float::abs(h), REFERENCE_ORDER as i32)
        })
        .fold(F::Real::zero(), Float::max);
    if tail <= F::Real::lit(1e-14) * scale {
        Ok(jet
            .iter()
            .map(|c| {
                let mut acc = F::Real::zero();
                for m in (1..=REFERENCE_ORDER).rev() {
                    acc = (acc + *c.coeff(m)) * h;
                }
                acc
            })
            .collect())
    } else {
        let y = reference_flow(f, x, h)?;
        Ok(y.iter().zip(x).map(|(a, b)| *a - *b).collect())
    }
}

/// Fitted log-log slope of `‖Φ_{h, f_h^K}(x) - φ_{h,f}(x)‖∞` against `h`.
///
/// Expected value `K + 2`. Both maps are taken as increments over `x` so the
/// defect does not drown in the rounding of `x`; keep the defects above
/// roughly `1e-12` for a clean fit.
pub fn defining_defect_order<F>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    k: usize,
    x: &[F::Real],
    h_grid: &[F::Real],
) -> Result<F::Real>
where
    F: VectorField + Clone,
{
    let defects = defining_defects(f, tab, k, x, h_grid)?;
    let floor = F::Real::lit(DEFECT_FLOOR);
    if defects.iter().all(|d| *d <= floor) {
        return Err(Error::DegenerateFit(
            "defect vanishes at every step; the method is exact on this field".into(),
        ));
    }
    fit_loglog_slope(h_grid, &defects)
}

/// The raw defects behind [`defining_defect_order`].
pub fn defining_defects<F>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    k: usize,
    x: &[F::Real],
    h_grid: &[F::Real],
) -> Result<Vec<F::Real>>
where
    F: VectorField + Clone,
{
    h_grid
        .iter()
        .map(|&h| {
            let tr = ImdeTruncation::new(f.clone(), tab.clone(), k, h)?;
            let num = rk_increment(tab, &tr, x, h)?;
            let exact = flow_increment(f, x, h)?;
            Ok(num
                .iter()
                .zip(&exact)
                .map(|(a, b)| Float::abs(*a - *b))
                .fold(F::Real::zero(), Float::max))
        })
        .collect()
}

/// `(f_p(x), -δ_f(x))` where `δ_f` is the `h^{p+1}` coefficient of the local
/// error `Φ_{h,f}(x) - φ_{h,f}(x)`. The two agree for a method of order `p`.
pub fn leading_term_delta<F: VectorField>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    x: &[F::Real],
) -> Result<(Vec<F::Real>, Vec<F::Real>)> {
    let p = tab.order();
    let fp = imde_coeffs(f, tab, x, p)?
        .pop()
        .expect("p + 1 coefficients");
    let num = rk_step_series(tab, &single(f), x, p)?;
    let exact = exact_flow_jet(f, x, p)?;
    let neg_delta = exact
        .iter()
        .zip(&num)
        .map(|(e, n)| *e.coeff(p + 1) - *n.coeff(p + 1))
        .collect();
    Ok((fp, neg_delta))
}

/// Jacobian of `f_k` at `x`, row `i` holding `∂(f_k)_i/∂x_j`, by first-order
/// jets along the coordinate directions.
pub fn imde_jacobian<F: VectorField>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    k: usize,
    x: &[F::Real],
) -> Result<Vec<Vec<F::Real>>> {
    let d = x.len();
    check_dim(f.dim(), d)?;
    let mut jac = vec![vec![F::Real::zero(); d]; d];
    for j in 0..d {
        let point: Vec<Jet<F::Real>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == j {
                    Jet::variable(v, 1)
                } else {
                    Jet::constant(v, 1)
                }
            })
            .collect();
        let fk = imde_coeffs(f, tab, &point, k)?
            .pop()
            .expect("k + 1 coefficients");
        for (i, c) in fk.iter().enumerate() {
            jac[i][j] = *c.coeff(1);
        }
    }
    Ok(jac)
}

/// Asymmetry of `J f_k'(x)` with `J = [[0, I], [-I, 0]]`, measured as
/// `Σ_{i,j} |M_ij - M_ji|`. Zero iff `J f_k` is locally a gradient, i.e. `f_k`
/// is Hamiltonian near `x`.
pub fn symplectic_defect<F: VectorField>(
    f: &F,
    tab: &ButcherTableau<F::Real>,
    k: usize,
    x: &[F::Real],
) -> Result<F::Real> {
    let d = f.dim();
    if d % 2 != 0 {
        return Err(Error::UnsupportedStructure(format!(
            "odd dimension {d} has no canonical symplectic form"
        )));
    }
    if !f.is_hamiltonian() {
        return Err(Error::UnsupportedStructure(
            "field is not declared Hamiltonian".into(),
        ));
    }
    let jac = imde_jacobian(f, tab, k, x)?;
    let n = d / 2;
    let m: Vec<Vec<F::Real>> = (0..d)
        .map(|i| {
            if i < n {
                jac[i + n].clone()
            } else {
                jac[i - n].iter().map(|v| -*v).collect()
            }
        })
        .collect();
    let mut defect = F::Real::zero();
    for i in 0..d {
        for j in 0..d {
            defect += Float::abs(m[i][j] - m[j][i]);
        }
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ConstantField, LinearField};
    use crate::systems::BuiltinSystem;
    use approx::assert_relative_eq;

    #[test]
    fn euler_on_linear_field() {
        let f = LinearField::scalar(1.0);
        let c = imde_coeffs(&f, &ButcherTableau::euler(), &[1.0], 3).unwrap();
        let want = [1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (got, w) in c.iter().zip(want) {
            assert_relative_eq!(got[0], w, epsilon = 1e-14);
        }
    }

    #[test]
    fn pendulum_examples() {
        let p = BuiltinSystem::<f64>::pendulum();
        let e = imde_coeffs(&p, &ButcherTableau::euler(), &[0.0, 1.0], 1).unwrap();
        assert!(e[1][0].abs() <= 1e-14);
        assert_relative_eq!(e[1][1], -4.20735492, epsilon = 1e-8);
        let m = imde_coeffs(&p, &ButcherTableau::midpoint(), &[0.0, 1.0], 2).unwrap();
        assert!(m[1][0].abs() <= 1e-13 && m[1][1].abs() <= 1e-13);
        // (1/6) f'f'f(0, 1) = (100/6) sin 1 cos 1
        let want = 100.0 / 6.0 * 1f64.sin() * 1f64.cos();
        assert_relative_eq!(m[2][0], want, epsilon = 1e-12);
        assert!(m[2][1].abs() <= 1e-12);
    }

    #[test]
    fn truncation_cap() {
        let f = LinearField::scalar(1.0);
        assert!(matches!(
            imde_coeffs(&f, &ButcherTableau::euler(), &[1.0], MAX_TRUNCATION + 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn field_eval_examples() {
        let f = LinearField::scalar(1.0);
        let tr = ImdeTruncation::new(f, ButcherTableau::euler(), 3, 0.1).unwrap();
        assert_relative_eq!(
            imde_field_eval(&tr, 0.1, &[1.0]).unwrap()[0],
            1.05170833,
            epsilon = 1e-8
        );
        assert_eq!(imde_field_eval(&tr, 0.0, &[1.0]).unwrap()[0], 1.0);
        assert_relative_eq!(tr.eval(&[1.0]).unwrap()[0], 1.05170833, epsilon = 1e-8);

        let c = ConstantField {
            value: vec![0.3, -2.0],
        };
        let tr = ImdeTruncation::new(c, ButcherTableau::euler(), 4, 0.37).unwrap();
        assert_eq!(tr.eval(&[5.0, 1.0]).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn defect_order_examples() {
        let p = BuiltinSystem::<f64>::pendulum();
        let hs: Vec<f64> = (7..=10).map(|e| 2f64.powi(-e)).collect();
        let s = defining_defect_order(&p, &ButcherTableau::euler(), 1, &[0.0, 1.0], &hs).unwrap();
        assert!((s - 3.0).abs() <= 0.1, "slope {s}");
        let s =
            defining_defect_order(&p, &ButcherTableau::midpoint(), 2, &[0.0, 1.0], &hs).unwrap();
        assert!((s - 4.0).abs() <= 0.1, "slope {s}");
        let c = ConstantField {
            value: vec![1.0, 2.0],
        };
        assert!(matches!(
            defining_defect_order(&c, &ButcherTableau::euler(), 2, &[0.0, 1.0], &hs),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn leading_term_examples() {
        let f = LinearField::scalar(1.0);
        let (a, b) = leading_term_delta(&f, &ButcherTableau::euler(), &[1.0]).unwrap();
        assert_relative_eq!(a[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(b[0], 0.5, epsilon = 1e-14);
        let p = BuiltinSystem::<f64>::pendulum();
        let (a, b) = leading_term_delta(&p, &ButcherTableau::euler(), &[0.0, 1.0]).unwrap();
        assert_relative_eq!(a[1], -4.20735492, epsilon = 1e-8);
        assert_relative_eq!(b[1], -4.20735492, epsilon = 1e-8);
        let (a, b) = leading_term_delta(&p, &ButcherTableau::midpoint(), &[0.0, 1.0]).unwrap();
        let want = 100.0 / 6.0 * 1f64.sin() * 1f64.cos();
        assert_relative_eq!(a[0], want, epsilon = 1e-12);
        assert_relative_eq!(b[0], want, epsilon = 1e-12);
    }

    #[test]
    fn symplectic_defect_examples() {
        let p = BuiltinSystem::<f64>::pendulum();
        let x = [0.0, 1.0];
        let e = symplectic_defect(&p, &ButcherTableau::euler(), 1, &x).unwrap();
        assert_relative_eq!(e, 10.80604612, epsilon = 1e-6);
        let m = symplectic_defect(&p, &ButcherTableau::implicit_midpoint(), 2, &x).unwrap();
        assert!(m <= 1e-8, "{m}");
        for name in ["euler", "midpoint", "rk4"] {
            let d = symplectic_defect(&p, &ButcherTableau::builtin(name).unwrap(), 0, &x).unwrap();
            assert!(d <= 1e-10);
        }
        let l = BuiltinSystem::<f64>::lorenz();
        assert!(matches!(
            symplectic_defect(&l, &ButcherTableau::euler(), 1, &[0.0, 0.0, 1.0]),
            Err(Error::UnsupportedStructure(_))
        ));
        let o = BuiltinSystem::<f64>::damped_oscillator();
        assert!(symplectic_defect(&o, &ButcherTableau::euler(), 1, &x).is_err());
    }
}
