use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Truncated power series `c_0 + c_1 h + ... + c_K h^K`.
///
/// Coefficients are any [`Scalar`], including other jets. Arithmetic never
/// touches powers above `K`; binary operations require equal orders.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<S> {
    coeffs: Vec<S>,
}

fn order_check(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::OrderMismatch { left: a, right: b })
    }
}

impl<S: Scalar> Jet<S> {
    /// Builds a jet from its coefficients; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<S>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a jet needs at least one coefficient"));
        }
        Ok(Jet { coeffs })
    }

    pub(crate) fn from_vec(coeffs: Vec<S>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Jet { coeffs }
    }

    pub fn constant(c: S, order: usize) -> Self {
        let zero = c.zero_like();
        let mut coeffs = Vec::with_capacity(order + 1);
        coeffs.push(c);
        coeffs.resize(order + 1, zero);
        Jet { coeffs }
    }

    /// `c + h`, the independent variable expanded around `c`.
    pub fn variable(c: S, order: usize) -> Self {
        let mut j = Self::constant(c, order);
        if order >= 1 {
            j.coeffs[1] = j.coeffs[0].constant_like(S::Real::lit(1.0));
        }
        j
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &S {
        &self.coeffs[k]
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    /// Truncates or zero-pads to a new order.
    pub fn with_order(&self, order: usize) -> Self {
        let zero = self.coeffs[0].zero_like();
        let mut coeffs: Vec<S> = self.coeffs.iter().take(order + 1).cloned().collect();
        coeffs.resize(order + 1, zero);
        Jet { coeffs }
    }

    /// Multiplies by `h^n` and truncates to `order`.
    pub fn shifted(&self, n: usize, order: usize) -> Self {
        let zero = self.coeffs[0].zero_like();
        let mut coeffs = Vec::with_capacity(order + 1);
        for k in 0..=order {
            if k < n || k - n > self.order() {
                coeffs.push(zero.clone());
            } else {
                coeffs.push(self.coeffs[k - n].clone());
            }
        }
        Jet { coeffs }
    }

    /// True when every coefficient above order 0 is exactly zero.
    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(Scalar::is_exact_zero)
    }

    /// Horner evaluation at a numeric value of the series variable.
    pub fn eval_at(&self, h: S::Real) -> S {
        let mut it = self.coeffs.iter().rev();
        let mut acc = it.next().expect("non-empty").clone();
        for c in it {
            acc = acc.scale(h);
            acc += c.clone();
        }
        acc
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        order_check(self.order(), other.order())?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        })
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        order_check(self.order(), other.order())?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        })
    }

    /// Cauchy product truncated at the common order.
    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        order_check(self.order(), other.order())?;
        let a = &self.coeffs;
        let b = &other.coeffs;
        let coeffs = (0..a.len())
            .map(|k| {
                let mut acc = a[0].mul_ref(&b[k]);
                for j in 1..=k {
                    acc += a[j].mul_ref(&b[k - j]);
                }
                acc
            })
            .collect();
        Ok(Jet { coeffs })
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self> {
        self.checked_mul(&other.try_recip()?)
    }

    pub fn mul_ref(&self, other: &Self) -> Self {
        self.checked_mul(other).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn scale(&self, r: S::Real) -> Self {
        Jet {
            coeffs: self.coeffs.iter().map(|c| c.scale(r)).collect(),
        }
    }

    pub fn add_real(&self, r: S::Real) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].add_real(r);
        out
    }

    pub fn max_abs(&self) -> S::Real {
        self.coeffs.iter().map(Scalar::max_abs).fold(
            <S::Real as num_traits::Zero>::zero(),
            num_traits::Float::max,
        )
    }

    /// `(1/k) Σ_{j=1..k} j a_j c_{k-j}`, the shared kernel of the
    /// derivative recurrences below.
    fn weighted_conv(a: &[S], c: &[S], k: usize) -> S {
        let mut acc = a[1].mul_ref(&c[k - 1]);
        for j in 2..=k {
            acc += a[j].mul_ref(&c[k - j]).scale(S::Real::lit(j as f64));
        }
        acc.scale(S::Real::lit(1.0 / k as f64))
    }

    pub fn exp(&self) -> Self {
        let a = &self.coeffs;
        let mut c = Vec::with_capacity(a.len());
        c.push(a[0].exp());
        for k in 1..a.len() {
            let ck = Self::weighted_conv(a, &c, k);
            c.push(ck);
        }
        Jet { coeffs: c }
    }

    /// Sine and cosine together (each recurrence feeds the other).
    pub fn sin_cos(&self) -> (Self, Self) {
        let a = &self.coeffs;
        let (s0, c0) = a[0].sin_cos();
        let mut s = Vec::with_capacity(a.len());
        let mut c = Vec::with_capacity(a.len());
        s.push(s0);
        c.push(c0);
        for k in 1..a.len() {
            let sk = Self::weighted_conv(a, &c, k);
            let ck = -Self::weighted_conv(a, &s, k);
            s.push(sk);
            c.push(ck);
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    pub fn sin(&self) -> Self {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Self {
        self.sin_cos().1
    }

    /// `tanh' = 1 - tanh²`.
    pub fn tanh(&self) -> Self {
        let a = &self.coeffs;
        let one = S::Real::lit(1.0);
        let t0 = a[0].tanh();
        let u0 = (t0.mul_ref(&t0)).scale(-one).add_real(one);
        let mut t = vec![t0];
        let mut u = vec![u0];
        for k in 1..a.len() {
            let tk = Self::weighted_conv(a, &u, k);
            t.push(tk);
            let mut sq = t[0].mul_ref(&t[k]);
            for i in 1..=k {
                sq += t[i].mul_ref(&t[k - i]);
            }
            u.push(-sq);
        }
        Jet { coeffs: t }
    }

    pub fn try_recip(&self) -> Result<Self> {
        let a = &self.coeffs;
        let r0 = a[0].try_recip()?;
        let mut r = Vec::with_capacity(a.len());
        r.push(r0);
        for k in 1..a.len() {
            let mut acc = a[1].mul_ref(&r[k - 1]);
            for j in 2..=k {
                acc += a[j].mul_ref(&r[k - j]);
            }
            let rk = -(acc.mul_ref(&r[0]));
            r.push(rk);
        }
        Ok(Jet { coeffs: r })
    }

    /// Real power `a^p`; needs a positive leading value unless the jet is
    /// constant.
    pub fn try_powf(&self, p: S::Real) -> Result<Self> {
        let a = &self.coeffs;
        if self.order() == 0 || self.is_constant() {
            return Ok(Jet::constant(a[0].try_powf(p)?, self.order()));
        }
        if a[0].value() <= <S::Real as num_traits::Zero>::zero() {
            return Err(Error::Singular(
                "real power of a series with non-positive leading value".into(),
            ));
        }
        let inv0 = a[0].try_recip()?;
        let mut y = Vec::with_capacity(a.len());
        y.push(a[0].try_powf(p)?);
        for k in 1..a.len() {
            let kf = S::Real::lit(k as f64);
            let mut acc: Option<S> = None;
            for j in 1..=k {
                let jf = S::Real::lit(j as f64);
                let w = p * jf - (kf - jf);
                let term = a[j].mul_ref(&y[k - j]).scale(w);
                acc = Some(match acc {
                    Some(s) => s + term,
                    None => term,
                });
            }
            let yk = acc
                .expect("k >= 1")
                .mul_ref(&inv0)
                .scale(S::Real::lit(1.0) / kf);
            y.push(yk);
        }
        Ok(Jet { coeffs: y })
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl<S: Scalar> $tr for Jet<S> {
            type Output = Jet<S>;
            fn $m(self, rhs: Jet<S>) -> Jet<S> {
                self.$checked(&rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl<'a, S: Scalar> $tr<&'a Jet<S>> for &'a Jet<S> {
            type Output = Jet<S>;
            fn $m(self, rhs: &'a Jet<S>) -> Jet<S> {
                self.$checked(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl<S: Scalar> Neg for Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Jet<S> {
        Jet {
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
        }
    }
}

impl<S: Scalar> AddAssign for Jet<S> {
    fn add_assign(&mut self, rhs: Jet<S>) {
        if let Err(e) = order_check(self.order(), rhs.order()) {
            panic!("{e}");
        }
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
    }
}

impl<S: Scalar> SubAssign for Jet<S> {
    fn sub_assign(&mut self, rhs: Jet<S>) {
        if let Err(e) = order_check(self.order(), rhs.order()) {
            panic!("{e}");
        }
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
    }
}
