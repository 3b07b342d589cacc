//! Benchmark vector fields: pendulum, damped cubic oscillator, rescaled
//! Lorenz system and the scalar linear test equation.

use std::collections::BTreeMap;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};
use crate::series::{check_dim, VectorField};

pub const SYSTEM_NAMES: [&str; 4] = ["pendulum", "damped_oscillator", "lorenz", "linear"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    Pendulum,
    DampedOscillator,
    Lorenz,
    Linear,
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug, PartialEq)]
pub struct Region<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> Region<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid(
                "region bounds must be non-empty and equal length",
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("region lower bound exceeds upper bound"));
        }
        Ok(Region { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[T]) -> Vec<T> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (a, b))| *a + *u * (*b - *a))
            .collect()
    }
}

/// One of the benchmark systems with its parameters and experiment defaults.
///
/// The pendulum state is `(p, q)`, so the field is `J⁻¹∇H` with
/// `H = p²/2 - g cos q` and `J = [[0, I], [-I, 0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinSystem<T> {
    kind: SystemKind,
    params: BTreeMap<String, T>,
}

fn defaults(kind: SystemKind) -> &'static [(&'static str, f64)] {
    match kind {
        SystemKind::Pendulum => &[("g", 10.0)],
        SystemKind::DampedOscillator => &[("damping", 0.1), ("coupling", 2.0)],
        SystemKind::Lorenz => &[
            ("sigma", 10.0),
            ("rho", 28.0),
            ("beta", 8.0 / 3.0),
            ("scale", 10.0),
        ],
        SystemKind::Linear => &[("lambda", 1.0)],
    }
}

impl<T: Real> BuiltinSystem<T> {
    /// Looks up a system by name and applies parameter overrides. Unknown
    /// names and unknown parameter keys are rejected.
    pub fn new(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let kind = match name {
            "pendulum" => SystemKind::Pendulum,
            "damped_oscillator" => SystemKind::DampedOscillator,
            "lorenz" => SystemKind::Lorenz,
            "linear" => SystemKind::Linear,
            _ => {
                return Err(Error::UnknownName {
                    what: "system",
                    name: name.into(),
                })
            }
        };
        let mut params: BTreeMap<String, T> = defaults(kind)
            .iter()
            .map(|(k, v)| (k.to_string(), T::lit(*v)))
            .collect();
        for (k, v) in overrides {
            match params.get_mut(k) {
                Some(slot) => *slot = T::lit(*v),
                None => {
                    return Err(Error::UnknownName {
                        what: "system parameter",
                        name: format!("{name}.{k}"),
                    })
                }
            }
        }
        Ok(BuiltinSystem { kind, params })
    }

    pub fn named(name: &str) -> Result<Self> {
        Self::new(name, &BTreeMap::new())
    }

    pub fn pendulum() -> Self {
        Self::named("pendulum").expect("builtin")
    }

    pub fn damped_oscillator() -> Self {
        Self::named("damped_oscillator").expect("builtin")
    }

    pub fn lorenz() -> Self {
        Self::named("lorenz").expect("builtin")
    }

    pub fn linear(lambda: T) -> Self {
        let mut s = Self::named("linear").expect("builtin");
        s.params.insert("lambda".into(), lambda);
        s
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SystemKind::Pendulum => "pendulum",
            SystemKind::DampedOscillator => "damped_oscillator",
            SystemKind::Lorenz => "lorenz",
            SystemKind::Linear => "linear",
        }
    }

    pub fn param(&self, key: &str) -> T {
        self.params[key]
    }

    pub fn params(&self) -> &BTreeMap<String, T> {
        &self.params
    }

    /// Default sampling box for region-sampled datasets.
    pub fn sampling_region(&self) -> Region<T> {
        let (lo, hi): (&[f64], &[f64]) = match self.kind {
            SystemKind::Pendulum => (&[-3.8, -1.2], &[3.8, 1.2]),
            SystemKind::DampedOscillator => (&[-2.2, -2.2], &[2.2, 2.2]),
            SystemKind::Lorenz => (&[-2.0, -2.0, 0.0], &[2.0, 2.0, 4.0]),
            SystemKind::Linear => (&[-2.0], &[2.0]),
        };
        Region {
            lo: lo.iter().map(|v| T::lit(*v)).collect(),
            hi: hi.iter().map(|v| T::lit(*v)).collect(),
        }
    }

    /// Default data step `T`.
    pub fn data_step(&self) -> T {
        T::lit(match self.kind {
            SystemKind::Pendulum => 0.04,
            SystemKind::DampedOscillator => 0.02,
            SystemKind::Lorenz => 0.04,
            SystemKind::Linear => 0.1,
        })
    }

    /// Start point of the plotted trajectories (and of the Lorenz dataset).
    pub fn initial_point(&self) -> Vec<T> {
        let p: &[f64] = match self.kind {
            SystemKind::Pendulum => &[0.0, 1.0],
            SystemKind::DampedOscillator => &[2.0, 0.0],
            SystemKind::Lorenz => &[-0.8, 0.7, 2.6],
            SystemKind::Linear => &[1.0],
        };
        p.iter().map(|v| T::lit(*v)).collect()
    }

    /// Default plotting horizon.
    pub fn horizon(&self) -> T {
        T::lit(match self.kind {
            SystemKind::Lorenz => 2.0,
            _ => 5.0,
        })
    }

    /// Lorenz data come from one trajectory; the others are region-sampled.
    pub fn single_trajectory_data(&self) -> bool {
        self.kind == SystemKind::Lorenz
    }
}

impl<T: Real> VectorField for BuiltinSystem<T> {
    type Real = T;

    fn dim(&self) -> usize {
        match self.kind {
            SystemKind::Pendulum | SystemKind::DampedOscillator => 2,
            SystemKind::Lorenz => 3,
            SystemKind::Linear => 1,
        }
    }

    fn eval<S: Scalar<Real = T>>(&self, y: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), y.len())?;
        let p = |k: &str| self.params[k];
        Ok(match self.kind {
            SystemKind::Pendulum => {
                vec![y[1].sin().scale(-p("g")), y[0].clone()]
            }
            SystemKind::DampedOscillator => {
                let c1 = y[0].pow_n(3);
                let c2 = y[1].pow_n(3);
                let (d, c) = (p("damping"), p("coupling"));
                vec![c1.scale(-d) + c2.scale(c), c1.scale(-c) - c2.scale(d)]
            }
            SystemKind::Lorenz => {
                let (sigma, rho, beta, scale) = (p("sigma"), p("rho"), p("beta"), p("scale"));
                let dy1 = (y[1].clone() - y[0].clone()).scale(sigma);
                let dy2 = y[0].mul_ref(&y[2].scale(-scale).add_real(rho)) - y[1].clone();
                let dy3 = y[0].mul_ref(&y[1]).scale(scale) - y[2].scale(beta);
                vec![dy1, dy2, dy3]
            }
            SystemKind::Linear => vec![y[0].scale(p("lambda"))],
        })
    }

    fn energy(&self, y: &[T]) -> Option<T> {
        match self.kind {
            SystemKind::Pendulum if y.len() == 2 => {
                Some(y[0] * y[0] * T::lit(0.5) - self.params["g"] * Float::cos(y[1]))
            }
            _ => None,
        }
    }

    fn is_hamiltonian(&self) -> bool {
        self.kind == SystemKind::Pendulum
    }
}

/// `H(x)` for a Hamiltonian system.
pub fn hamiltonian_energy<F: VectorField>(sys: &F, x: &[F::Real]) -> Result<F::Real> {
    check_dim(sys.dim(), x.len())?;
    if !sys.is_hamiltonian() {
        return Err(Error::UnsupportedStructure(
            "system carries no Hamiltonian".into(),
        ));
    }
    sys.energy(x)
        .ok_or_else(|| Error::UnsupportedStructure("energy unavailable".into()))
}

/// `‖f(y) - J⁻¹∇H(y)‖∞` with `∇H` by fourth-order central differences.
pub fn hamiltonian_residual<F: VectorField>(sys: &F, y: &[F::Real]) -> Result<F::Real> {
    let d = sys.dim();
    if d % 2 != 0 {
        return Err(Error::UnsupportedStructure(format!(
            "odd dimension {d} has no canonical symplectic form"
        )));
    }
    hamiltonian_energy(sys, y)?;
    let eps = F::Real::lit(1e-3);
    let at = |i: usize, s: f64| {
        let mut z = y.to_vec();
        z[i] += eps * F::Real::lit(s);
        sys.energy(&z).expect("checked")
    };
    let grad: Vec<F::Real> = (0..d)
        .map(|i| {
            (at(i, -2.0) - at(i, 2.0) + F::Real::lit(8.0) * (at(i, 1.0) - at(i, -1.0)))
                / (F::Real::lit(12.0) * eps)
        })
        .collect();
    // J⁻¹ = [[0, -I], [I, 0]]
    let half = d / 2;
    let f = sys.eval(y)?;
    let mut res = F::Real::lit(0.0);
    for i in 0..d {
        let target = if i < half {
            -grad[i + half]
        } else {
            grad[i - half]
        };
        res = Float::max(res, Float::abs(f[i] - target));
    }
    Ok(res)
}
