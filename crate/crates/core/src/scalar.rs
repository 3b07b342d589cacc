//! Scalar abstraction shared by plain floats and (nested) truncated series.
//!
//! Every numerical routine that has to run on jet-valued points is written
//! against [`Scalar`]. A [`Real`] (`f32` or `f64`) is the depth-0 scalar; a
//! [`Jet`] over a scalar of depth `d` is a scalar of depth `d + 1`. The
//! inverse-modified-equation recursion re-enters itself one nesting level
//! deeper per coefficient, so each scalar names the type one level up
//! through [`Scalar::Lifted`]. The chain stops at [`MAX_NESTING`], where the
//! lifted type is the scalar itself and lifting fails at run time.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

use crate::error::{Error, Result};
use crate::series::Jet;

/// Deepest jet nesting supported by the type-level lifting chain.
pub const MAX_NESTING: usize = 10;

/// Base floating-point type.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
    + Scalar<Real = Self>
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Elementwise tanh over a buffer; the batched network passes go through here.
    fn tanh_in_place(xs: &mut [Self]) {
        for x in xs {
            *x = Float::tanh(*x);
        }
    }
}

impl Real for f32 {
    fn tanh_in_place(xs: &mut [f32]) {
        // Same arithmetic on every path; wider registers only change throughput.
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                return unsafe { tanh_f32_avx512(xs) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                return unsafe { tanh_f32_avx2(xs) };
            }
        }
        tanh_f32(xs)
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn tanh_f32_avx512(xs: &mut [f32]) {
    tanh_f32(xs)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_f32_avx2(xs: &mut [f32]) {
    tanh_f32(xs)
}

/// Rational minimax approximation, a few ulp from `tanhf` and vectorizable.
#[inline(always)]
fn tanh_f32(xs: &mut [f32]) {
    const CLAMP: f32 = 7.905_311;
    const A: [f32; 7] = [
        4.893_524_6e-3,
        6.372_619_3e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_672e-11,
        2.000_188e-13,
        -2.760_768_5e-16,
    ];
    const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347_1e-4, 1.198_258_4e-6];
    for x in xs {
        let v = x.clamp(-CLAMP, CLAMP);
        let v2 = v * v;
        let mut p = A[6];
        for a in A[..6].iter().rev() {
            p = p * v2 + a;
        }
        let q = ((B[3] * v2 + B[2]) * v2 + B[1]) * v2 + B[0];
        *x = v * p / q;
    }
}

impl Real for f64 {}

/// A value that supports ring arithmetic and the elementary functions needed
/// to evaluate smooth vector fields.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    type Real: Real;
    /// Series with coefficients of this type (one nesting level deeper).
    type Lifted: Scalar<Real = Self::Real>;
    const DEPTH: usize;

    /// A constant with the same series shape as `self`.
    fn constant_like(&self, r: Self::Real) -> Self;

    fn zero_like(&self) -> Self {
        self.constant_like(<Self::Real as num_traits::Zero>::zero())
    }

    fn scale(&self, r: Self::Real) -> Self;
    fn add_real(&self, r: Self::Real) -> Self;
    fn mul_ref(&self, other: &Self) -> Self;

    /// Innermost order-0 part.
    fn value(&self) -> Self::Real;
    /// Largest absolute value over every stored coefficient.
    fn max_abs(&self) -> Self::Real;
    fn is_exact_zero(&self) -> bool;
    fn all_finite(&self) -> bool;

    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sin_cos(&self) -> (Self, Self);
    fn exp(&self) -> Self;
    fn tanh(&self) -> Self;
    fn try_recip(&self) -> Result<Self>;
    fn try_powf(&self, p: Self::Real) -> Result<Self>;

    fn pow_n(&self, n: u32) -> Self {
        let mut result = self.constant_like(<Self::Real as num_traits::One>::one());
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul_ref(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul_ref(&base);
            }
        }
        result
    }

    fn into_lifted(j: Jet<Self>) -> Result<Self::Lifted>;
    fn from_lifted(l: Self::Lifted) -> Jet<Self>;
}

macro_rules! real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;
            type Lifted = Jet<$t>;
            const DEPTH: usize = 0;

            fn constant_like(&self, r: $t) -> $t {
                r
            }
            fn scale(&self, r: $t) -> $t {
                self * r
            }
            fn add_real(&self, r: $t) -> $t {
                self + r
            }
            fn mul_ref(&self, other: &$t) -> $t {
                self * other
            }
            fn value(&self) -> $t {
                *self
            }
            fn max_abs(&self) -> $t {
                <$t>::abs(*self)
            }
            fn is_exact_zero(&self) -> bool {
                *self == 0.0
            }
            fn all_finite(&self) -> bool {
                <$t>::is_finite(*self)
            }
            fn sin(&self) -> $t {
                <$t>::sin(*self)
            }
            fn cos(&self) -> $t {
                <$t>::cos(*self)
            }
            fn sin_cos(&self) -> ($t, $t) {
                <$t>::sin_cos(*self)
            }
            fn exp(&self) -> $t {
                <$t>::exp(*self)
            }
            fn tanh(&self) -> $t {
                <$t>::tanh(*self)
            }
            fn try_recip(&self) -> Result<$t> {
                if *self == 0.0 {
                    Err(Error::Singular("reciprocal of zero".into()))
                } else {
                    Ok(1.0 / *self)
                }
            }
            fn try_powf(&self, p: $t) -> Result<$t> {
                if *self < 0.0 && p.fract() != 0.0 {
                    return Err(Error::Singular(format!(
                        "non-integer power {p} of negative base {self}"
                    )));
                }
                Ok(<$t>::powf(*self, p))
            }
            fn into_lifted(j: Jet<$t>) -> Result<Jet<$t>> {
                Ok(j)
            }
            fn from_lifted(l: Jet<$t>) -> Jet<$t> {
                l
            }
        }
    };
}

real_scalar!(f32);
real_scalar!(f64);

macro_rules! jet_scalar_common {
    ($depth:expr) => {
        type Real = T;
        const DEPTH: usize = $depth;

        fn constant_like(&self, r: T) -> Self {
            Jet::constant(self.coeff(0).constant_like(r), self.order())
        }
        fn scale(&self, r: T) -> Self {
            Jet::scale(self, r)
        }
        fn add_real(&self, r: T) -> Self {
            Jet::add_real(self, r)
        }
        fn mul_ref(&self, other: &Self) -> Self {
            Jet::mul_ref(self, other)
        }
        fn value(&self) -> T {
            self.coeff(0).value()
        }
        fn max_abs(&self) -> T {
            Jet::max_abs(self)
        }
        fn is_exact_zero(&self) -> bool {
            self.coeffs().iter().all(Scalar::is_exact_zero)
        }
        fn all_finite(&self) -> bool {
            self.coeffs().iter().all(Scalar::all_finite)
        }
        fn sin(&self) -> Self {
            Jet::sin_cos(self).0
        }
        fn cos(&self) -> Self {
            Jet::sin_cos(self).1
        }
        fn sin_cos(&self) -> (Self, Self) {
            Jet::sin_cos(self)
        }
        fn exp(&self) -> Self {
            Jet::exp(self)
        }
        fn tanh(&self) -> Self {
            Jet::tanh(self)
        }
        fn try_recip(&self) -> Result<Self> {
            Jet::try_recip(self)
        }
        fn try_powf(&self, p: T) -> Result<Self> {
            Jet::try_powf(self, p)
        }
    };
}

macro_rules! nested_scalar {
    ($depth:expr, $ty:ty => $lifted:ty) => {
        impl<T: Real> Scalar for $ty {
            type Lifted = $lifted;
            jet_scalar_common!($depth);

            fn into_lifted(j: Jet<Self>) -> Result<Self::Lifted> {
                Ok(j)
            }
            fn from_lifted(l: Self::Lifted) -> Jet<Self> {
                l
            }
        }
    };
    (cap $depth:expr, $ty:ty) => {
        impl<T: Real> Scalar for $ty {
            type Lifted = Self;
            jet_scalar_common!($depth);

            fn into_lifted(_: Jet<Self>) -> Result<Self::Lifted> {
                Err(Error::NestingTooDeep {
                    depth: $depth + 1,
                    max: MAX_NESTING,
                })
            }
            fn from_lifted(l: Self::Lifted) -> Jet<Self> {
                let order = l.order();
                Jet::constant(l, order)
            }
        }
    };
}

type J1<T> = Jet<T>;
type J2<T> = Jet<J1<T>>;
type J3<T> = Jet<J2<T>>;
type J4<T> = Jet<J3<T>>;
type J5<T> = Jet<J4<T>>;
type J6<T> = Jet<J5<T>>;
type J7<T> = Jet<J6<T>>;
type J8<T> = Jet<J7<T>>;
type J9<T> = Jet<J8<T>>;
type J10<T> = Jet<J9<T>>;

nested_scalar!(1, J1<T> => J2<T>);
nested_scalar!(2, J2<T> => J3<T>);
nested_scalar!(3, J3<T> => J4<T>);
nested_scalar!(4, J4<T> => J5<T>);
nested_scalar!(5, J5<T> => J6<T>);
nested_scalar!(6, J6<T> => J7<T>);
nested_scalar!(7, J7<T> => J8<T>);
nested_scalar!(8, J8<T> => J9<T>);
nested_scalar!(9, J9<T> => J10<T>);
nested_scalar!(cap 10, J10<T>);

/// Lifts a point to constant series of the given order, one level deeper.
pub fn lift_constant<S: Scalar>(x: &[S], order: usize) -> Vec<Jet<S>> {
    x.iter().map(|c| Jet::constant(c.clone(), order)).collect()
}

/// Converts a jet point to the lifted scalar type.
pub fn into_lifted_point<S: Scalar>(x: Vec<Jet<S>>) -> Result<Vec<S::Lifted>> {
    x.into_iter().map(S::into_lifted).collect()
}

pub fn from_lifted_point<S: Scalar>(x: Vec<S::Lifted>) -> Vec<Jet<S>> {
    x.into_iter().map(S::from_lifted).collect()
}

/// Max-norm of a point, measured over all stored coefficients.
pub fn max_norm<S: Scalar>(x: &[S]) -> S::Real {
    x.iter()
        .map(Scalar::max_abs)
        .fold(<S::Real as num_traits::Zero>::zero(), Float::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_chain() {
        assert_eq!(<f64 as Scalar>::DEPTH, 0);
        assert_eq!(<Jet<f64> as Scalar>::DEPTH, 1);
        assert_eq!(<J10<f64> as Scalar>::DEPTH, MAX_NESTING);
    }

    #[test]
    fn lifting_stops_at_cap() {
        let x = J10::<f64>::constant(
            J9::<f64>::constant(
                J8::constant(
                    J7::constant(
                        J6::constant(
                            J5::constant(
                                J4::constant(
                                    J3::constant(J2::constant(J1::constant(1.0, 0), 0), 0),
                                    0,
                                ),
                                0,
                            ),
                            0,
                        ),
                        0,
                    ),
                    0,
                ),
                0,
            ),
            0,
        );
        let lifted = <J10<f64> as Scalar>::into_lifted(Jet::constant(x, 1));
        assert!(matches!(lifted, Err(Error::NestingTooDeep { .. })));
    }

    #[test]
    fn real_recip_of_zero_is_singular() {
        assert!(matches!(0.0f64.try_recip(), Err(Error::Singular(_))));
        assert_eq!(4.0f64.try_recip().unwrap(), 0.25);
    }

    #[test]
    fn batched_tanh_is_accurate() {
        let mut xs: Vec<f32> = (-2000..=2000).map(|i| i as f32 * 0.006).collect();
        let want: Vec<f64> = xs.iter().map(|x| (*x as f64).tanh()).collect();
        f32::tanh_in_place(&mut xs);
        for (g, w) in xs.iter().zip(want) {
            assert!(
                (*g as f64 - w).abs() <= 4e-7 * w.abs().max(1e-3),
                "{g} vs {w}"
            );
        }
        let mut big = [30.0f32, -30.0];
        f32::tanh_in_place(&mut big);
        assert!((big[0] - 1.0).abs() < 1e-6 && (big[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn pow_n_matches_powi() {
        for n in 0..7 {
            let want = 1.3f64.powi(n as i32);
            assert!((1.3f64.pow_n(n) - want).abs() <= 4.0 * f64::EPSILON * want);
        }
    }
}
