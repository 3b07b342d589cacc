use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};
use crate::series::Jet;

/// A smooth autonomous vector field `f: R^D -> R^D`.
///
/// `eval` must work for any scalar, so the same field can be evaluated on
/// plain points and on (nested) jet-valued points.
pub trait VectorField: Sync {
    type Real: Real;

    fn dim(&self) -> usize;

    fn eval<S: Scalar<Real = Self::Real>>(&self, y: &[S]) -> Result<Vec<S>>;

    /// Energy `H` when the field is `J⁻¹∇H` with the canonical block `J`.
    fn energy(&self, _y: &[Self::Real]) -> Option<Self::Real> {
        None
    }

    fn is_hamiltonian(&self) -> bool {
        false
    }
}

impl<F: VectorField> VectorField for &F {
    type Real = F::Real;

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval<S: Scalar<Real = Self::Real>>(&self, y: &[S]) -> Result<Vec<S>> {
        (**self).eval(y)
    }

    fn energy(&self, y: &[Self::Real]) -> Option<Self::Real> {
        (**self).energy(y)
    }

    fn is_hamiltonian(&self) -> bool {
        (**self).is_hamiltonian()
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// A series of vector fields `g_0 + h g_1 + h² g_2 + ...`.
pub trait FieldSeries: Sync {
    type Real: Real;

    fn dim(&self) -> usize;

    /// Number of available terms.
    fn terms(&self) -> usize;

    /// `[g_0(y), ..., g_{count-1}(y)]` with `count <= terms()`.
    fn eval_terms<S: Scalar<Real = Self::Real>>(
        &self,
        y: &[S],
        count: usize,
    ) -> Result<Vec<Vec<S>>>;
}

/// A finite list of fields used as series terms.
#[derive(Clone, Copy, Debug)]
pub struct FieldList<'a, F>(pub &'a [F]);

impl<F: VectorField> FieldSeries for FieldList<'_, F> {
    type Real = F::Real;

    fn dim(&self) -> usize {
        self.0.first().map_or(0, VectorField::dim)
    }

    fn terms(&self) -> usize {
        self.0.len()
    }

    fn eval_terms<S: Scalar<Real = Self::Real>>(
        &self,
        y: &[S],
        count: usize,
    ) -> Result<Vec<Vec<S>>> {
        self.0[..count.min(self.0.len())]
            .iter()
            .map(|g| g.eval(y))
            .collect()
    }
}

/// A single field viewed as a one-term series.
pub fn single<F: VectorField>(f: &F) -> FieldList<'_, F> {
    FieldList(std::slice::from_ref(f))
}

/// Taylor-mode evaluation: coefficient `k` of the result is the `k`-th
/// Taylor coefficient of `s ↦ f(x(s))`.
pub fn field_on_jet<F, S>(f: &F, x: &[Jet<S>]) -> Result<Vec<Jet<S>>>
where
    F: VectorField,
    S: Scalar<Real = F::Real>,
{
    check_dim(f.dim(), x.len())?;
    if let Some(first) = x.first() {
        if let Some(bad) = x.iter().find(|c| c.order() != first.order()) {
            return Err(Error::OrderMismatch {
                left: first.order(),
                right: bad.order(),
            });
        }
    }
    let lifted = crate::scalar::into_lifted_point::<S>(x.to_vec())?;
    let out = f.eval(&lifted)?;
    Ok(crate::scalar::from_lifted_point::<S>(out))
}

/// `f(y) = c`.
#[derive(Clone, Debug)]
pub struct ConstantField<T> {
    pub value: Vec<T>,
}

impl<T: Real> VectorField for ConstantField<T> {
    type Real = T;

    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval<S: Scalar<Real = T>>(&self, y: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), y.len())?;
        Ok(self.value.iter().map(|c| y[0].constant_like(*c)).collect())
    }
}

/// `f(y) = A y` for a square matrix `A` (row-major).
#[derive(Clone, Debug)]
pub struct LinearField<T> {
    pub dim: usize,
    pub matrix: Vec<T>,
}

impl<T: Real> LinearField<T> {
    pub fn new(dim: usize, matrix: Vec<T>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        Ok(LinearField { dim, matrix })
    }

    pub fn scalar(lambda: T) -> Self {
        LinearField {
            dim: 1,
            matrix: vec![lambda],
        }
    }
}

impl<T: Real> VectorField for LinearField<T> {
    type Real = T;

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval<S: Scalar<Real = T>>(&self, y: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim, y.len())?;
        Ok(self
            .matrix
            .chunks(self.dim)
            .map(|row| {
                let mut acc = y[0].scale(row[0]);
                for (yj, a) in y.iter().zip(row).skip(1) {
                    acc += yj.scale(*a);
                }
                acc
            })
            .collect())
    }
}
