use ndarray::{s, Array2, ArrayView2, Axis};
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::ButcherTableau;
use crate::neural::mlp::{MlpParams, Tape};
use crate::neural::Dataset;
use crate::scalar::Real;

fn require_explicit<T: Real>(tab: &ButcherTableau<T>) -> Result<()> {
    if tab.is_explicit() {
        Ok(())
    } else {
        Err(Error::UnsupportedStructure(format!(
            "training through implicit tableau '{}' is not supported",
            tab.name()
        )))
    }
}

fn check_batch<T: Real>(
    p: &MlpParams<T>,
    x: &ArrayView2<'_, T>,
    z: &ArrayView2<'_, T>,
) -> Result<()> {
    let d = p.dims()[0];
    if x.ncols() != d || z.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if x.ncols() != d { x.ncols() } else { z.ncols() },
        });
    }
    if x.nrows() != z.nrows() || x.nrows() == 0 {
        return Err(Error::invalid(
            "batch inputs and targets must be nonempty and aligned",
        ));
    }
    Ok(())
}

/// `(Φ_{h, f_θ})^S` applied to every row of `x`, optionally recording tapes.
fn unrolled<T: Real>(
    p: &MlpParams<T>,
    tab: &ButcherTableau<T>,
    compositions: usize,
    h: T,
    x: ArrayView2<'_, T>,
    mut tapes: Option<&mut Vec<Tape<T>>>,
) -> Array2<T> {
    let mut y = x.to_owned();
    for _ in 0..compositions {
        let mut ks: Vec<Array2<T>> = Vec::with_capacity(tab.stages());
        for row in tab.a() {
            let mut u = y.clone();
            for (aij, k) in row.iter().zip(&ks) {
                if !aij.is_zero() {
                    u.scaled_add(h * *aij, k);
                }
            }
            let (k, tape) = p.forward_tape(u.view());
            if let Some(t) = tapes.as_deref_mut() {
                t.push(tape);
            }
            ks.push(k);
        }
        for (bi, k) in tab.b().iter().zip(&ks) {
            if !bi.is_zero() {
                y.scaled_add(h * *bi, k);
            }
        }
    }
    y
}

/// The solver map `(Φ_{h, f_θ})^S` on a batch.
pub fn node_map<T: Real>(
    p: &MlpParams<T>,
    tab: &ButcherTableau<T>,
    compositions: usize,
    h: T,
    x: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    require_explicit(tab)?;
    if compositions == 0 {
        return Err(Error::invalid("composition count must be at least 1"));
    }
    Ok(unrolled(p, tab, compositions, h, x, None))
}

/// `(1/N) Σ ‖(Φ_{h, f_θ})^S(x_n) - z_n‖²`.
pub fn node_loss<T: Real>(
    p: &MlpParams<T>,
    tab: &ButcherTableau<T>,
    compositions: usize,
    h: T,
    x: ArrayView2<'_, T>,
    z: ArrayView2<'_, T>,
) -> Result<T> {
    check_batch(p, &x, &z)?;
    let y = node_map(p, tab, compositions, h, x)?;
    let n = T::lit(x.nrows() as f64);
    Ok((y - &z).mapv(|v| v * v).sum() / n)
}

/// Rows per block of the gradient pass. Every row is independent, and a block
/// keeps all stage tapes resident in cache.
const BLOCK_ROWS: usize = 256;

/// Loss and its gradient by reverse accumulation through the unrolled
/// stages. The gradient has the flat layout of [`MlpParams::as_slice`].
pub fn node_loss_grad<T: Real>(
    p: &MlpParams<T>,
    tab: &ButcherTableau<T>,
    compositions: usize,
    h: T,
    x: ArrayView2<'_, T>,
    z: ArrayView2<'_, T>,
) -> Result<(T, Vec<T>)> {
    require_explicit(tab)?;
    check_batch(p, &x, &z)?;
    if compositions == 0 {
        return Err(Error::invalid("composition count must be at least 1"));
    }
    let n = x.nrows();
    let scale = T::lit(2.0) / T::lit(n as f64);
    let mut grad = vec![T::zero(); p.count()];
    let mut sq = T::zero();
    for start in (0..n).step_by(BLOCK_ROWS) {
        let rows = start..(start + BLOCK_ROWS).min(n);
        let xb = x.slice(s![rows.clone(), ..]);
        let zb = z.slice(s![rows, ..]);
        sq += block_loss_grad(p, tab, compositions, h, xb, zb, scale, &mut grad);
    }
    Ok((sq / T::lit(n as f64), grad))
}

/// Adds the gradient of `(scale/2) Σ ‖y - z‖²` over the block to `grad` and
/// returns the block's sum of squares.
#[allow(clippy::too_many_arguments)]
fn block_loss_grad<T: Real>(
    p: &MlpParams<T>,
    tab: &ButcherTableau<T>,
    compositions: usize,
    h: T,
    x: ArrayView2<'_, T>,
    z: ArrayView2<'_, T>,
    scale: T,
    grad: &mut [T],
) -> T {
    let n_stages = tab.stages();
    let mut tapes = Vec::with_capacity(compositions * n_stages);
    let y = unrolled(p, tab, compositions, h, x, Some(&mut tapes));
    let diff = y - &z;
    let sq = diff.iter().map(|v| *v * *v).sum();

    let mut ybar = diff.mapv(|v| v * scale);
    for r in (0..compositions).rev() {
        let mut kbar: Vec<Array2<T>> = tab
            .b()
            .iter()
            .map(|bi| ybar.mapv(|v| v * (h * *bi)))
            .collect();
        for i in (0..n_stages).rev() {
            let g = std::mem::replace(&mut kbar[i], Array2::zeros((0, 0)));
            if g.iter().all(|v| v.is_zero()) {
                continue;
            }
            // The input gradient of the very first stage feeds nothing.
            let Some(ubar) = p.backward_batch(&tapes[r * n_stages + i], g, grad, r > 0 || i > 0)
            else {
                continue;
            };
            for j in 0..i {
                let aij = tab.a()[i][j];
                if !aij.is_zero() {
                    kbar[j].scaled_add(h * aij, &ubar);
                }
            }
            ybar += &ubar;
        }
    }
    sq
}

/// Learning rate `lr_start · (lr_end / lr_start)^(e / E)`.
pub fn learning_rate(lr_start: f64, lr_end: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr_start;
    }
    lr_start * (lr_end / lr_start).powf(epoch as f64 / epochs as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub tableau: String,
    #[serde(default = "one")]
    pub compositions: usize,
    pub epochs: usize,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "lr_start")]
    pub lr_start: f64,
    #[serde(default = "lr_end")]
    pub lr_end: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn lr_start() -> f64 {
    1e-2
}
fn lr_end() -> f64 {
    1e-5
}

impl TrainConfig {
    pub fn new(tableau: &str, compositions: usize, epochs: usize) -> Self {
        TrainConfig {
            tableau: tableau.into(),
            compositions,
            epochs,
            batch_size: None,
            lr_start: lr_start(),
            lr_end: lr_end(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.compositions == 0 {
            return Err(Error::invalid("composition count must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Adam with the usual defaults.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let one = T::one();
        let c1 = one - Float::powi(self.beta1, self.t);
        let c2 = one - Float::powi(self.beta2, self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (Float::sqrt(vhat) + self.eps);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: MlpParams<T>,
    /// Mean training loss of each epoch, measured before its updates.
    pub losses: Vec<T>,
}

/// Adam training of `f_θ` so that `(Φ_{T/S, f_θ})^S(x_n) ≈ z_n`.
pub fn train_node<T: Real>(
    cfg: &TrainConfig,
    data: &Dataset<T>,
    init: MlpParams<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let tab = ButcherTableau::<T>::builtin(&cfg.tableau)?;
    require_explicit(&tab)?;
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let h = data.step() / T::lit(cfg.compositions as f64);
    let mut params = init;
    let mut adam = Adam::new(params.count());
    let mut losses = Vec::with_capacity(cfg.epochs);
    let n = data.len();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 0..cfg.epochs {
        let lr = T::lit(learning_rate(cfg.lr_start, cfg.lr_end, epoch, cfg.epochs));
        let loss = if batch == n {
            let (loss, grad) = node_loss_grad(
                &params,
                &tab,
                cfg.compositions,
                h,
                data.inputs(),
                data.targets(),
            )?;
            if Float::is_finite(loss) {
                adam.step(params.as_mut_slice(), &grad, lr);
            }
            loss
        } else {
            order.shuffle(&mut rng);
            let mut total = T::zero();
            for chunk in order.chunks(batch) {
                let x = data.inputs().select(Axis(0), chunk);
                let z = data.targets().select(Axis(0), chunk);
                let (loss, grad) =
                    node_loss_grad(&params, &tab, cfg.compositions, h, x.view(), z.view())?;
                total += loss * T::lit(chunk.len() as f64);
                if !Float::is_finite(loss) {
                    break;
                }
                adam.step(params.as_mut_slice(), &grad, lr);
            }
            total / T::lit(n as f64)
        };
        if !Float::is_finite(loss) || !params.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        losses.push(loss);
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp_init;
    use ndarray::array;
    use rand::Rng;

    fn fd_check(tab: &str, s: usize) {
        let p = mlp_init::<f64>(&[2, 7, 6, 2], 21).unwrap();
        let tab = ButcherTableau::builtin(tab).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
        let z = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
        let h = 0.1;
        let (_, g) = node_loss_grad(&p, &tab, s, h, x.view(), z.view()).unwrap();
        for _ in 0..10 {
            let i = rng.gen_range(0..p.count());
            let mut plus = p.clone();
            plus.as_mut_slice()[i] += 1e-6;
            let mut minus = p.clone();
            minus.as_mut_slice()[i] -= 1e-6;
            let fd = (node_loss(&plus, &tab, s, h, x.view(), z.view()).unwrap()
                - node_loss(&minus, &tab, s, h, x.view(), z.view()).unwrap())
                / 2e-6;
            let scale = g[i].abs().max(fd.abs()).max(1e-6);
            assert!((g[i] - fd).abs() / scale <= 1e-5, "{i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        fd_check("euler", 2);
        fd_check("midpoint", 1);
        fd_check("rk4", 3);
    }

    #[test]
    fn zero_field_identity_data_has_zero_loss() {
        let p = MlpParams::<f64>::zeros(&[2, 4, 2]).unwrap();
        let x = array![[0.5, 1.0], [-2.0, 0.25]];
        let (l, g) =
            node_loss_grad(&p, &ButcherTableau::rk4(), 2, 0.1, x.view(), x.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn implicit_tableau_rejected() {
        let p = MlpParams::<f64>::zeros(&[1, 3, 1]).unwrap();
        let x = array![[0.5]];
        assert!(matches!(
            node_loss_grad(
                &p,
                &ButcherTableau::implicit_midpoint(),
                1,
                0.1,
                x.view(),
                x.view()
            ),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn learning_rate_endpoints() {
        assert_eq!(learning_rate(1e-2, 1e-5, 0, 100), 1e-2);
        assert!((learning_rate(1e-2, 1e-5, 50, 100) - 10f64.powf(-3.5)).abs() < 1e-15);
    }
}
