//! The IMDE invariant suite behind the `verify` subcommand.

use rayon::prelude::*;
use serde_json::json;

use crate::error::Result;
use crate::experiments::common::probe_seed;
use crate::experiments::config::ExperimentConfig;
use crate::experiments::error_order::{base_meta, with_pool};
use crate::experiments::output::{ResultRow, RunOutput};
use crate::imde::{
    defining_defect_order, imde_coeffs, imde_field_offset, leading_term_delta, symplectic_defect,
    ImdeTruncation,
};
use crate::integrators::ButcherTableau;
use crate::neural::sample_region;
use crate::scalar::Scalar;
use crate::series::{reference_trajectory, Jet, VectorField};
use crate::stats::fit_loglog_slope;

/// Outcome of one invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    /// Observed quantity (an error, a slope offset or a band ratio).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub output: RunOutput,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `k! · [s^k] f(x + s v)`, i.e. `f^(k)(x)(v, ..., v)`.
pub fn directional_derivative<F: VectorField<Real = f64>>(
    f: &F,
    x: &[f64],
    v: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    let pt: Vec<Jet<f64>> = x
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let mut c = vec![0.0; k + 1];
            c[0] = *a;
            if k >= 1 {
                c[1] = *b;
            }
            Jet::new(c)
        })
        .collect::<Result<_>>()?;
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    Ok(f.eval(&pt)?.iter().map(|j| j.coeff(k) * fact).collect())
}

/// `f''(x)(a, b)` by polarization of the diagonal second derivative.
fn mixed_second<F: VectorField<Real = f64>>(
    f: &F,
    x: &[f64],
    a: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let plus: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + v).collect();
    let minus: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    let p = directional_derivative(f, x, &plus, 2)?;
    let m = directional_derivative(f, x, &minus, 2)?;
    Ok(p.iter().zip(&m).map(|(u, v)| (u - v) / 4.0).collect())
}

fn combo(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let d = terms[0].1.len();
    (0..d)
        .map(|i| terms.iter().map(|(c, v)| c * v[i]).sum())
        .collect()
}

/// Closed-form `[f_1, f_2, f_3]` for explicit Euler or the explicit midpoint
/// rule, built from directional derivatives of `f`.
pub fn closed_form_coeffs<F: VectorField<Real = f64>>(
    f: &F,
    tableau: &str,
    x: &[f64],
) -> Result<Option<[Vec<f64>; 3]>> {
    let ff = f.eval(x)?;
    let f1f = directional_derivative(f, x, &ff, 1)?;
    let f2ff = directional_derivative(f, x, &ff, 2)?;
    let f1f1f = directional_derivative(f, x, &f1f, 1)?;
    let f3fff = directional_derivative(f, x, &ff, 3)?;
    let f2_f1f_f = mixed_second(f, x, &f1f, &ff)?;
    let f1_f2ff = directional_derivative(f, x, &f2ff, 1)?;
    let f1f1f1f = directional_derivative(f, x, &f1f1f, 1)?;
    Ok(match tableau {
        "euler" => Some([
            combo(&[(0.5, &f1f)]),
            combo(&[(1.0 / 6.0, &f2ff), (1.0 / 6.0, &f1f1f)]),
            combo(&[
                (1.0 / 24.0, &f3fff),
                (3.0 / 24.0, &f2_f1f_f),
                (1.0 / 24.0, &f1_f2ff),
                (1.0 / 24.0, &f1f1f1f),
            ]),
        ]),
        "midpoint" => Some([
            vec![0.0; x.len()],
            combo(&[(1.0 / 24.0, &f2ff), (1.0 / 6.0, &f1f1f)]),
            combo(&[(-1.0 / 16.0, &f1_f2ff), (-1.0 / 8.0, &f1f1f1f)]),
        ]),
        _ => None,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Largest `‖computed - closed‖∞ / max(‖closed‖∞, 1)` over `points`, per `k = 1..3`.
pub fn closed_form_error<F: VectorField<Real = f64>>(
    f: &F,
    tableau: &str,
    points: &[Vec<f64>],
) -> Result<Option<[f64; 3]>> {
    let tab = ButcherTableau::<f64>::builtin(tableau)?;
    let errs = points
        .par_iter()
        .map(|x| -> Result<Option<[f64; 3]>> {
            let Some(closed) = closed_form_coeffs(f, tableau, x)? else {
                return Ok(None);
            };
            let got = imde_coeffs(f, &tab, x, 3)?;
            let mut e = [0.0; 3];
            for k in 0..3 {
                e[k] = max_abs_diff(&got[k + 1], &closed[k]) / max_norm(&closed[k]).max(1.0);
            }
            Ok(Some(e))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst = [0.0f64; 3];
    for e in errs {
        let Some(e) = e else { return Ok(None) };
        for k in 0..3 {
            worst[k] = worst[k].max(e[k]);
        }
    }
    Ok(Some(worst))
}

/// Largest `|S^k F_k - f_k|` between the IMDE of `Φ_h` and that of the
/// `S`-fold composition viewed as one step of size `S h`.
pub fn composition_gap<F: VectorField<Real = f64>>(
    f: &F,
    tab: &ButcherTableau<f64>,
    s: usize,
    k: usize,
    points: &[Vec<f64>],
) -> Result<f64> {
    let comp = tab.compose(s)?;
    let gaps = points
        .par_iter()
        .map(|x| {
            let base = imde_coeffs(f, tab, x, k)?;
            let big = imde_coeffs(f, &comp, x, k)?;
            let mut g = 0.0f64;
            for (j, (a, b)) in base.iter().zip(&big).enumerate() {
                let sk = (s as f64).powi(j as i32);
                let scaled: Vec<f64> = b.iter().map(|v| v * sk).collect();
                g = g.max(max_abs_diff(a, &scaled));
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

/// Fitted slope of the mean `‖f_h^K - f‖∞` over `points` against `h`.
pub fn truncation_order<F: VectorField<Real = f64>>(
    f: &F,
    tab: &ButcherTableau<f64>,
    k: usize,
    points: &[Vec<f64>],
    hs: &[f64],
) -> Result<f64> {
    let coeffs = points
        .par_iter()
        .map(|x| imde_coeffs(f, tab, x, k))
        .collect::<Result<Vec<_>>>()?;
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            coeffs
                .iter()
                .map(|c| max_norm(&imde_field_offset::<F>(c, h)))
                .sum::<f64>()
                / points.len() as f64
        })
        .collect();
    fit_loglog_slope(hs, &errs)
}

/// `f(x) ↦ A f(A⁻¹ x)` for an invertible 2×2 matrix `A`.
#[derive(Clone, Debug)]
pub struct AffineConjugate<F> {
    pub inner: F,
    pub a: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
}

impl<F: VectorField<Real = f64>> AffineConjugate<F> {
    pub fn new(inner: F, a: [[f64; 2]; 2]) -> Option<Self> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-8 || inner.dim() != 2 {
            return None;
        }
        let inv = [
            [a[1][1] / det, -a[0][1] / det],
            [-a[1][0] / det, a[0][0] / det],
        ];
        Some(AffineConjugate { inner, a, inv })
    }

    fn apply<S: Scalar<Real = f64>>(m: &[[f64; 2]; 2], y: &[S]) -> Vec<S> {
        (0..2)
            .map(|i| y[0].scale(m[i][0]) + y[1].scale(m[i][1]))
            .collect()
    }

    pub fn to_inner(&self, y: &[f64]) -> Vec<f64> {
        Self::apply(&self.inv, y)
    }

    pub fn from_inner(&self, y: &[f64]) -> Vec<f64> {
        Self::apply(&self.a, y)
    }
}

impl<F: VectorField<Real = f64>> VectorField for AffineConjugate<F> {
    type Real = f64;

    fn dim(&self) -> usize {
        2
    }

    fn eval<S: Scalar<Real = f64>>(&self, y: &[S]) -> Result<Vec<S>> {
        let z = Self::apply(&self.inv, y);
        Ok(Self::apply(&self.a, &self.inner.eval(&z)?))
    }
}

/// Largest `|g_k(y) - A f_k(A⁻¹ y)|` with `g` the conjugated field.
pub fn affine_gap<F: VectorField<Real = f64> + Clone>(
    f: &F,
    tab: &ButcherTableau<f64>,
    a: [[f64; 2]; 2],
    k: usize,
    points: &[Vec<f64>],
) -> Result<f64> {
    let g = AffineConjugate::new(f.clone(), a)
        .ok_or_else(|| crate::error::Error::invalid("affine map must be invertible and 2-D"))?;
    let gaps = points
        .par_iter()
        .map(|y| {
            let lhs = imde_coeffs(&g, tab, y, k)?;
            let rhs = imde_coeffs(f, tab, &g.to_inner(y), k)?;
            Ok(lhs
                .iter()
                .zip(&rhs)
                .map(|(l, r)| max_abs_diff(l, &g.from_inner(r)) / max_norm(l).max(1.0))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

/// Spread `max/min` of `e(t) / (e^{C₁ t} - 1)` minimised over a grid of `C₁`,
/// where `e(t)` is the distance between the flows of `f` and `f_h^K`.
pub fn gronwall_band<F: VectorField<Real = f64> + Clone>(
    f: &F,
    tab: &ButcherTableau<f64>,
    k: usize,
    h: f64,
    x0: &[f64],
    horizon: f64,
    samples: usize,
) -> Result<(f64, f64)> {
    let dt = horizon / samples as f64;
    let tr = ImdeTruncation::new(f.clone(), tab.clone(), k, h)?;
    let a = reference_trajectory(f, x0, dt, samples)?;
    let b = reference_trajectory(&tr, x0, dt, samples)?;
    let errs: Vec<(f64, f64)> = (1..=samples)
        .map(|i| (i as f64 * dt, max_abs_diff(&a[i], &b[i])))
        .filter(|(_, e)| *e > 0.0)
        .collect();
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..=400 {
        let c1 = 1e-3 * 10f64.powf(j as f64 / 100.0);
        let ratios: Vec<f64> = errs.iter().map(|(t, e)| e / (c1 * t).exp_m1()).collect();
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi / lo < best.0 {
            best = (hi / lo, c1);
        }
    }
    Ok(best)
}

/// Runs every invariant over the configured system and tableaux.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    with_pool(cfg, || verify_inner(cfg))?
}

fn verify_inner(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let sys = cfg.system()?;
    let name = sys.name();
    let region = sys.sampling_region();
    let pts20 = sample_region(&region, 20, probe_seed(cfg, 1));
    let pts10: Vec<Vec<f64>> = pts20[..10].to_vec();
    let cloud = sample_region(&region, 200, probe_seed(cfg, 2));
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let tabs: Vec<ButcherTableau<f64>> = cfg
        .solver
        .tableaux
        .iter()
        .map(|t| ButcherTableau::builtin(t))
        .collect::<Result<_>>()?;

    for tab in &tabs {
        let tn = tab.name().to_string();
        let p = tab.order();

        if let Some(err) = closed_form_error(&sys, &tn, &pts20)? {
            for (i, e) in err.iter().enumerate() {
                checks.push(Check::at_most(
                    format!("closed_form/{tn}/f{}", i + 1),
                    *e,
                    1e-9,
                ));
            }
            if tn == "midpoint" {
                let f1 = pts20
                    .iter()
                    .map(|x| Ok(max_norm(&imde_coeffs(&sys, tab, x, 1)?[1])))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                checks.push(Check::at_most("closed_form/midpoint/f1_zero", f1, 1e-12));
            }
        }

        let kc = cfg.imde.order.min(4);
        for s in [2, 3, 6] {
            let gap = composition_gap(&sys, tab, s, kc, &pts10)?;
            checks.push(Check::at_most(format!("composition/{tn}/S{s}"), gap, 1e-9));
        }

        let kt = if p < 4 { p + 1 } else { p };
        let hs: Vec<f64> = (0..8).map(|i| 1e-4 * 10f64.powf(i as f64 / 7.0)).collect();
        let slope = truncation_order(&sys, tab, kt, &cloud, &hs)?;
        rows.push(
            ResultRow::new("imde_verify", name, "truncation_order", slope)
                .tableau(&tn)
                .k(kt),
        );
        checks.push(Check::at_most(
            format!("truncation_order/{tn}"),
            (slope - p as f64).abs(),
            0.05,
        ));

        let mut lt = 0.0f64;
        for x in &pts10 {
            let (fp, nd) = leading_term_delta(&sys, tab, x)?;
            lt = lt.max(max_abs_diff(&fp, &nd));
        }
        checks.push(Check::at_most(format!("leading_term/{tn}"), lt, 1e-9));

        if p <= 2 {
            let hs: Vec<f64> = (0..=6).map(|i| 2f64.powf(-10.0 + i as f64 / 2.0)).collect();
            let x0 = sys.initial_point();
            for k in p.max(1)..=cfg.imde.order.min(3) {
                let slope = defining_defect_order(&sys, tab, k, &x0, &hs)?;
                rows.push(
                    ResultRow::new("imde_verify", name, "defect_order", slope)
                        .tableau(&tn)
                        .k(k),
                );
                checks.push(Check::at_most(
                    format!("defect_order/{tn}/K{k}"),
                    (slope - (k + 2) as f64).abs(),
                    0.1,
                ));
            }
        }

        if sys.dim() == 2 {
            let a = [[1.3, -0.4], [0.7, 0.9]];
            let gap = affine_gap(&sys, tab, a, cfg.imde.order.min(3), &pts10)?;
            checks.push(Check::at_most(format!("affine/{tn}"), gap, 1e-9));
        }
    }

    if sys.is_hamiltonian() {
        let x0 = sys.initial_point();
        let euler = ButcherTableau::euler();
        let d = symplectic_defect(&sys, &euler, 1, &x0)?;
        if name == "pendulum" && sys.param("g") == 10.0 && x0 == [0.0, 1.0] {
            checks.push(Check::at_most(
                "symplectic/euler/k1",
                (d - 10.80604612).abs(),
                1e-6,
            ));
        }
        let imp = ButcherTableau::implicit_midpoint();
        let mut worst = 0.0f64;
        for x in &pts10 {
            for k in 0..=4 {
                worst = worst.max(symplectic_defect(&sys, &imp, k, x)?);
            }
        }
        checks.push(Check::at_most("symplectic/implicit_midpoint", worst, 1e-8));
        let mut k0 = 0.0f64;
        for tab in &tabs {
            for x in &pts10 {
                k0 = k0.max(symplectic_defect(&sys, tab, 0, x)?);
            }
        }
        checks.push(Check::at_most("symplectic/k0", k0, 1e-10));
    }

    if tabs.iter().any(|t| t.name() == "euler") && sys.dim() == 2 {
        let (band, c1) = gronwall_band(
            &sys,
            &ButcherTableau::euler(),
            cfg.imde.order,
            0.02,
            &sys.initial_point(),
            5.0,
            50,
        )?;
        rows.push(ResultRow::new("imde_verify", name, "gronwall_c1", c1).tableau("euler"));
        checks.push(Check::at_most("gronwall/euler", band, 10.0));
    }

    let mut out = RunOutput {
        meta: base_meta(cfg),
        ..Default::default()
    };
    for c in &checks {
        out.table.push(ResultRow::new(
            "imde_verify",
            name,
            &format!("{}:value", c.name),
            c.value,
        ));
        out.table.push(ResultRow::new(
            "imde_verify",
            name,
            &format!("{}:pass", c.name),
            if c.passed { 1.0 } else { 0.0 },
        ));
        if !c.passed {
            out.flagged.push(format!(
                "{} = {:e} exceeds {:e}",
                c.name, c.value, c.tolerance
            ));
        }
    }
    for r in rows {
        out.table.push(r);
    }
    out.meta.insert(
        "checks".into(),
        json!(checks
            .iter()
            .map(|c| json!({"name": c.name, "value": c.value, "tolerance": c.tolerance, "passed": c.passed}))
            .collect::<Vec<_>>()),
    );
    Ok(VerifyReport {
        checks,
        output: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::BuiltinSystem;

    #[test]
    fn directional_derivative_of_sine() {
        let sys = BuiltinSystem::pendulum();
        let d3 = directional_derivative(&sys, &[0.0, 1.0], &[0.0, 2.0], 3).unwrap();
        // (-10 sin q)''' along 2 = 10 cos(1) * 8
        assert!((d3[0] - 80.0 * 1f64.cos()).abs() < 1e-12);
        assert_eq!(d3[1], 0.0);
    }

    #[test]
    fn affine_conjugate_roundtrip() {
        let g = AffineConjugate::new(BuiltinSystem::pendulum(), [[2.0, 1.0], [1.0, 1.0]]).unwrap();
        let y = [0.3, -0.7];
        let back = g.from_inner(&g.to_inner(&y));
        assert!(max_abs_diff(&back, &y) < 1e-15);
        assert!(
            AffineConjugate::new(BuiltinSystem::pendulum(), [[1.0, 2.0], [2.0, 4.0]]).is_none()
        );
    }
}
