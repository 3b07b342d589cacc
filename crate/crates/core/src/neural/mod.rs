//! Tanh MLP vector fields trained through unrolled Runge-Kutta maps.

mod data;
mod mlp;
mod train;

pub use data::Dataset;
pub use mlp::{mlp_init, Checkpoint, MlpParams};
pub use train::{
    learning_rate, node_loss, node_loss_grad, node_map, train_node, Adam, TrainConfig, TrainOutcome,
};

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::series::{check_dim, VectorField};
use crate::systems::Region;

/// `count` uniform samples from `region`, deterministic per seed.
pub fn sample_region<T: Real>(region: &Region<T>, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0);
    (0..count)
        .map(|_| {
            let u: Vec<T> = (0..region.dim())
                .map(|_| T::lit(unit.sample(&mut rng)))
                .collect();
            region.from_unit(&u)
        })
        .collect()
}

/// Mean over uniform samples of `‖a(x) - b(x)‖∞`.
pub fn field_error<A, B>(
    a: &A,
    b: &B,
    region: &Region<A::Real>,
    count: usize,
    seed: u64,
) -> Result<A::Real>
where
    A: VectorField,
    B: VectorField<Real = A::Real>,
{
    check_dim(a.dim(), b.dim())?;
    check_dim(a.dim(), region.dim())?;
    if count == 0 {
        return Err(Error::invalid("field error needs at least one sample"));
    }
    let pts = sample_region(region, count, seed);
    let per: Vec<A::Real> = pts
        .par_iter()
        .map(|x| {
            let fa = a.eval(x)?;
            let fb = b.eval(x)?;
            Ok(fa
                .iter()
                .zip(&fb)
                .map(|(p, q)| Float::abs(*p - *q))
                .fold(A::Real::lit(0.0), Float::max))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().sum::<A::Real>() / A::Real::lit(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::ConstantField;

    #[test]
    fn field_error_examples() {
        let r = Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let p = mlp_init::<f64>(&[2, 5, 2], 1).unwrap();
        assert_eq!(field_error(&p, &p, &r, 50, 3).unwrap(), 0.0);
        let a = ConstantField {
            value: vec![1.0, 2.0],
        };
        let b = ConstantField {
            value: vec![1.5, 4.0],
        };
        assert_eq!(field_error(&a, &b, &r, 10, 0).unwrap(), 2.0);
        assert_eq!(
            field_error(&p, &a, &r, 20, 9).unwrap(),
            field_error(&p, &a, &r, 20, 9).unwrap()
        );
    }
}
