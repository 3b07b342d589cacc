use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::rk_step_series;
use crate::scalar::{Real, Scalar};
use crate::series::{exact_flow_jet, single, Jet, VectorField};
use crate::stats::fit_loglog_slope;

/// Names accepted by [`ButcherTableau::builtin`].
pub const BUILTIN_TABLEAUX: [&str; 5] = [
    "euler",
    "midpoint",
    "rk4",
    "implicit_euler",
    "implicit_midpoint",
];

/// Coefficients `a_ij`, `b_i` of an `I`-stage Runge–Kutta method.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau<T> {
    name: String,
    a: Vec<Vec<T>>,
    b: Vec<T>,
    order: usize,
    explicit: bool,
}

/// Plain description of a custom tableau, as found in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableauSpec {
    #[serde(default = "TableauSpec::default_name")]
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub order: usize,
}

impl TableauSpec {
    fn default_name() -> String {
        "custom".into()
    }
}

impl<T: Real> ButcherTableau<T> {
    /// Validates shape and consistency (`Σ b_i = 1`), then checks the
    /// declared order empirically.
    pub fn new(name: impl Into<String>, a: Vec<Vec<T>>, b: Vec<T>, order: usize) -> Result<Self> {
        let tab = Self::unverified(name, a, b, order)?;
        tab.verify_order()?;
        Ok(tab)
    }

    fn unverified(
        name: impl Into<String>,
        a: Vec<Vec<T>>,
        b: Vec<T>,
        order: usize,
    ) -> Result<Self> {
        let name = name.into();
        let stages = b.len();
        if stages == 0 {
            return Err(Error::InvalidTableau(format!("{name}: no stages")));
        }
        if a.len() != stages || a.iter().any(|row| row.len() != stages) {
            return Err(Error::InvalidTableau(format!(
                "{name}: `a` must be {stages}x{stages}"
            )));
        }
        if order == 0 {
            return Err(Error::InvalidTableau(format!(
                "{name}: declared order must be positive"
            )));
        }
        if a.iter().flatten().chain(&b).any(|v| !Float::is_finite(*v)) {
            return Err(Error::InvalidTableau(format!("{name}: non-finite entry")));
        }
        let sum: T = b.iter().copied().sum();
        if Float::abs(sum - T::lit(1.0)) > T::lit(1e-12) {
            return Err(Error::InvalidTableau(format!(
                "{name}: inconsistent, weights sum to {sum}"
            )));
        }
        let explicit = a
            .iter()
            .enumerate()
            .all(|(i, row)| row[i..].iter().all(|v| *v == T::lit(0.0)));
        Ok(ButcherTableau {
            name,
            a,
            b,
            order,
            explicit,
        })
    }

    pub fn from_spec(spec: &TableauSpec) -> Result<Self> {
        Self::new(
            spec.name.clone(),
            spec.a
                .iter()
                .map(|r| r.iter().map(|v| T::lit(*v)).collect())
                .collect(),
            spec.b.iter().map(|v| T::lit(*v)).collect(),
            spec.order,
        )
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(Self::euler()),
            "midpoint" => Ok(Self::midpoint()),
            "rk4" => Ok(Self::rk4()),
            "implicit_euler" => Ok(Self::implicit_euler()),
            "implicit_midpoint" => Ok(Self::implicit_midpoint()),
            _ => Err(Error::UnknownName {
                what: "tableau",
                name: name.into(),
            }),
        }
    }

    fn fixed(name: &str, a: &[&[f64]], b: &[f64], order: usize) -> Self {
        Self::unverified(
            name,
            a.iter()
                .map(|r| r.iter().map(|v| T::lit(*v)).collect())
                .collect(),
            b.iter().map(|v| T::lit(*v)).collect(),
            order,
        )
        .expect("builtin tableau is well formed")
    }

    pub fn euler() -> Self {
        Self::fixed("euler", &[&[0.0]], &[1.0], 1)
    }

    pub fn midpoint() -> Self {
        Self::fixed("midpoint", &[&[0.0, 0.0], &[0.5, 0.0]], &[0.0, 1.0], 2)
    }

    pub fn rk4() -> Self {
        Self::fixed(
            "rk4",
            &[
                &[0.0, 0.0, 0.0, 0.0],
                &[0.5, 0.0, 0.0, 0.0],
                &[0.0, 0.5, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            4,
        )
    }

    pub fn implicit_euler() -> Self {
        Self::fixed("implicit_euler", &[&[1.0]], &[1.0], 1)
    }

    pub fn implicit_midpoint() -> Self {
        Self::fixed("implicit_midpoint", &[&[0.5]], &[1.0], 2)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn a(&self) -> &[Vec<T>] {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// Stage abscissae `c_i = Σ_j a_ij`.
    pub fn c(&self) -> Vec<T> {
        self.a.iter().map(|r| r.iter().copied().sum()).collect()
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    /// `μ = Σ |b_i|`.
    pub fn mu(&self) -> T {
        self.b.iter().map(|v| Float::abs(*v)).sum()
    }

    /// `κ = max_i Σ_j |a_ij|`.
    pub fn kappa(&self) -> T {
        self.a
            .iter()
            .map(|r| r.iter().map(|v| Float::abs(*v)).sum::<T>())
            .fold(T::lit(0.0), Float::max)
    }

    /// `b_i a_ij + b_j a_ji - b_i b_j = 0` for all `i, j` (to 1e-14).
    pub fn is_symplectic(&self) -> bool {
        let n = self.stages();
        let tol = T::lit(1e-14);
        (0..n).all(|i| {
            (0..n).all(|j| {
                let m = self.b[i] * self.a[i][j] + self.b[j] * self.a[j][i] - self.b[i] * self.b[j];
                Float::abs(m) <= tol
            })
        })
    }

    /// `S` steps of size `h` written as a single method with step `S·h`.
    pub fn compose(&self, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::invalid("composition count must be at least 1"));
        }
        if s == 1 {
            return Ok(self.clone());
        }
        let n = self.stages();
        let inv = T::lit(1.0 / s as f64);
        let total = n * s;
        let mut a = vec![vec![T::lit(0.0); total]; total];
        let mut b = vec![T::lit(0.0); total];
        for r in 0..s {
            for i in 0..n {
                let row = r * n + i;
                for rp in 0..r {
                    for j in 0..n {
                        a[row][rp * n + j] = self.b[j] * inv;
                    }
                }
                for j in 0..n {
                    a[row][r * n + j] = self.a[i][j] * inv;
                }
                b[row] = self.b[i] * inv;
            }
        }
        Self::unverified(format!("{}^{s}", self.name), a, b, self.order)
    }

    /// Local-error slope of the declared order on a nonlinear probe field.
    ///
    /// The defect `Φ_h(x) - φ_h(x)` is formed coefficient-wise in `h` and
    /// summed afterwards, so the fit is free of cancellation in `x`.
    pub fn local_error_slope(&self) -> Result<T> {
        let probe = Probe::<T>::default();
        let x = [T::lit(0.3), T::lit(0.7)];
        let k = self.order + 3;
        let num = rk_step_series(self, &single(&probe), &x, k)?;
        let exact = exact_flow_jet(&probe, &x, k)?;
        // Coefficients the order conditions make zero come out as rounding
        // noise, which would swamp a small leading term (e.g. after composition).
        let diffs: Vec<_> = num
            .iter()
            .zip(&exact)
            .map(|(a, b)| {
                let d = a.checked_sub(b)?;
                let coeffs = d
                    .coeffs()
                    .iter()
                    .zip(b.coeffs())
                    .enumerate()
                    .map(|(m, (v, e))| {
                        let noise =
                            T::epsilon() * T::lit(1024.0) * Float::max(T::lit(1.0), Float::abs(*e));
                        if m <= self.order && Float::abs(*v) <= noise {
                            T::lit(0.0)
                        } else {
                            *v
                        }
                    })
                    .collect();
                Jet::new(coeffs)
            })
            .collect::<Result<_>>()?;
        let hs: Vec<T> = (0..8)
            .map(|i| T::lit(10f64.powf(-3.0 + i as f64 / 7.0)))
            .collect();
        let errs: Vec<T> = hs
            .iter()
            .map(|h| {
                diffs
                    .iter()
                    .map(|d| Float::abs(d.eval_at(*h)))
                    .fold(T::lit(0.0), Float::max)
            })
            .collect();
        fit_loglog_slope(&hs, &errs)
    }

    fn verify_order(&self) -> Result<()> {
        let slope = self.local_error_slope()?;
        let want = T::lit((self.order + 1) as f64);
        if Float::abs(slope - want) > T::lit(0.1) {
            return Err(Error::InvalidTableau(format!(
                "{}: declared order {} but local error slope is {slope:.3}",
                self.name, self.order
            )));
        }
        Ok(())
    }
}

/// Probe field for order checks: a pendulum with a quadratic coupling, so
/// that no elementary differential vanishes identically.
#[derive(Default)]
struct Probe<T>(std::marker::PhantomData<T>);

impl<T: Real> VectorField for Probe<T> {
    type Real = T;

    fn dim(&self) -> usize {
        2
    }

    fn eval<S: Scalar<Real = T>>(&self, y: &[S]) -> Result<Vec<S>> {
        let f0 = y[1].sin().scale(T::lit(-3.0)) + y[0].mul_ref(&y[0]).scale(T::lit(0.4));
        let f1 =
            y[0].clone() + y[0].mul_ref(&y[1]).scale(T::lit(0.5)) + y[1].exp().scale(T::lit(0.2));
        Ok(vec![f0, f1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_verify_their_order() {
        for name in BUILTIN_TABLEAUX {
            let tab = ButcherTableau::<f64>::builtin(name).unwrap();
            let slope = tab.local_error_slope().unwrap();
            assert!(
                (slope - (tab.order() as f64 + 1.0)).abs() <= 0.1,
                "{name}: {slope}"
            );
        }
    }

    #[test]
    fn wrong_declared_order_rejected() {
        let r = ButcherTableau::<f64>::new("e2", vec![vec![0.0]], vec![1.0], 2);
        assert!(matches!(r, Err(Error::InvalidTableau(_))));
        let rk4 = ButcherTableau::<f64>::rk4();
        let r = ButcherTableau::new("rk4-3", rk4.a().to_vec(), rk4.b().to_vec(), 3);
        assert!(r.is_err());
    }

    #[test]
    fn inconsistent_rejected() {
        let r = ButcherTableau::<f64>::new("bad", vec![vec![0.0]], vec![0.9], 1);
        assert!(matches!(r, Err(Error::InvalidTableau(_))));
        let r = ButcherTableau::<f64>::new("bad", vec![vec![0.0, 0.0]], vec![0.5, 0.5], 1);
        assert!(r.is_err());
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            ButcherTableau::<f64>::builtin("rk45"),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn symplecticity() {
        assert!(ButcherTableau::<f64>::implicit_midpoint().is_symplectic());
        assert!(!ButcherTableau::<f64>::euler().is_symplectic());
        assert!(!ButcherTableau::<f64>::rk4().is_symplectic());
        assert!(!ButcherTableau::<f64>::midpoint().is_symplectic());
        assert!(!ButcherTableau::<f64>::implicit_euler().is_symplectic());
    }

    #[test]
    fn explicit_stages_never_look_ahead() {
        for name in BUILTIN_TABLEAUX {
            let tab = ButcherTableau::<f64>::builtin(name).unwrap();
            let structural = tab
                .a()
                .iter()
                .enumerate()
                .all(|(i, r)| r[i..].iter().all(|v| *v == 0.0));
            assert_eq!(tab.is_explicit(), structural, "{name}");
        }
        assert!(ButcherTableau::<f64>::rk4().is_explicit());
        assert!(!ButcherTableau::<f64>::implicit_midpoint().is_explicit());
    }

    #[test]
    fn derived_accessors() {
        let rk4 = ButcherTableau::<f64>::rk4();
        assert!((rk4.mu() - 1.0).abs() < 1e-15);
        assert_eq!(rk4.kappa(), 1.0);
        assert_eq!(rk4.c(), vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn composition_keeps_order_and_structure() {
        let m3 = ButcherTableau::<f64>::midpoint().compose(3).unwrap();
        assert_eq!(m3.stages(), 6);
        assert!(m3.is_explicit());
        assert_eq!(m3.order(), 2);
        let slope = m3.local_error_slope().unwrap();
        assert!((slope - 3.0).abs() <= 0.1, "{slope}");
    }

    #[test]
    fn spec_round_trip() {
        let spec: TableauSpec =
            serde_json::from_str(r#"{"name":"heun","a":[[0,0],[1,0]],"b":[0.5,0.5],"order":2}"#)
                .unwrap();
        let tab = ButcherTableau::<f64>::from_spec(&spec).unwrap();
        assert_eq!(tab.stages(), 2);
        assert!(tab.is_explicit());
    }
}
