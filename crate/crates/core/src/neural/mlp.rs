use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};
use crate::series::{check_dim, VectorField};

/// Fully connected tanh network `R^D -> R^D`, parameters stored flat.
///
/// Layer `l` owns a row-major weight block of shape `(dims[l+1], dims[l])`
/// followed by its bias. Hidden layers use tanh; the last layer is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    dims: Vec<usize>,
    data: Vec<T>,
    seed: u64,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Widths up to this use hand loops; packing for a general product costs more there.
const NARROW: usize = 4;

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Dot product with eight partial sums so the loop vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `a wᵀ + b` for row-major `a` of shape `(n, inp)` and `w` of shape `(out, inp)`.
fn affine<T: Real>(a: &Array2<T>, w: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array2<T> {
    let (n, inp) = a.dim();
    let out = w.nrows();
    let bs = b.as_slice().expect("contiguous bias");
    let av = a.as_slice().expect("standard layout");
    if inp <= NARROW {
        let wt = w.t().as_standard_layout().into_owned();
        let wts = wt.as_slice().expect("standard layout");
        let mut z = Array2::zeros((n, out));
        let zs = z.as_slice_mut().expect("standard layout");
        for (ar, zr) in av.chunks_exact(inp).zip(zs.chunks_exact_mut(out)) {
            zr.copy_from_slice(bs);
            for (c, wr) in ar.iter().zip(wts.chunks_exact(out)) {
                axpy(zr, *c, wr);
            }
        }
        z
    } else if out <= NARROW {
        let ws = w.as_slice().expect("standard layout");
        let mut z = Array2::zeros((n, out));
        let zs = z.as_slice_mut().expect("standard layout");
        for (ar, zr) in av.chunks_exact(inp).zip(zs.chunks_exact_mut(out)) {
            for ((zv, wr), bv) in zr.iter_mut().zip(ws.chunks_exact(inp)).zip(bs) {
                *zv = *bv + dot(ar, wr);
            }
        }
        z
    } else {
        let mut z = a.dot(&w.t());
        for zr in z
            .as_slice_mut()
            .expect("standard layout")
            .chunks_exact_mut(out)
        {
            for (zv, bv) in zr.iter_mut().zip(bs) {
                *zv += *bv;
            }
        }
        z
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(
            "network needs at least two nonzero layer sizes",
        ));
    }
    if dims[0] != dims[dims.len() - 1] {
        return Err(Error::invalid(format!(
            "input width {} differs from output width {}",
            dims[0],
            dims[dims.len() - 1]
        )));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn mlp_init<T: Real>(dims: &[usize], seed: u64) -> Result<MlpParams<T>> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(param_count(dims));
    for w in dims.windows(2) {
        let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        data.extend((0..w[0] * w[1]).map(|_| T::lit(dist.sample(&mut rng))));
        data.extend(std::iter::repeat(T::zero()).take(w[1]));
    }
    Ok(MlpParams {
        dims: dims.to_vec(),
        data,
        seed,
    })
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(MlpParams {
            dims: dims.to_vec(),
            data: vec![T::zero(); param_count(dims)],
            seed: 0,
        })
    }

    /// Builds a network from explicit `(weight, bias)` pairs.
    pub fn from_layers(layers: &[(Array2<T>, Vec<T>)]) -> Result<Self> {
        let mut dims = Vec::with_capacity(layers.len() + 1);
        let mut data = Vec::new();
        for (w, b) in layers {
            let (out, inp) = w.dim();
            match dims.last() {
                None => dims.push(inp),
                Some(&prev) if prev != inp => {
                    return Err(Error::DimensionMismatch {
                        expected: prev,
                        got: inp,
                    })
                }
                _ => {}
            }
            if b.len() != out {
                return Err(Error::DimensionMismatch {
                    expected: out,
                    got: b.len(),
                });
            }
            dims.push(out);
            data.extend(w.iter().copied());
            data.extend_from_slice(b);
        }
        check_dims(&dims)?;
        Ok(MlpParams {
            dims,
            data,
            seed: 0,
        })
    }

    pub fn from_flat(dims: &[usize], data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        check_dim(param_count(dims), data.len())?;
        Ok(MlpParams {
            dims: dims.to_vec(),
            data,
            seed: 0,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| Float::is_finite(*v))
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.dims[..=layer])
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, T> {
        let (inp, out) = (self.dims[layer], self.dims[layer + 1]);
        let o = self.offset(layer);
        ArrayView2::from_shape((out, inp), &self.data[o..o + out * inp]).expect("layout")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, T> {
        let (inp, out) = (self.dims[layer], self.dims[layer + 1]);
        let o = self.offset(layer) + out * inp;
        ArrayView1::from(&self.data[o..o + out])
    }

    /// Evaluates the network on each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward_tape(x).0
    }

    /// Forward pass that keeps every layer input for [`MlpParams::backward_batch`].
    pub(crate) fn forward_tape(&self, x: ArrayView2<'_, T>) -> (Array2<T>, Tape<T>) {
        let mut inputs = Vec::with_capacity(self.layers());
        let mut a = x.as_standard_layout().into_owned();
        for l in 0..self.layers() {
            let mut z = affine(&a, self.weight(l), self.bias(l));
            inputs.push(a);
            if l + 1 < self.layers() {
                T::tanh_in_place(z.as_slice_mut().expect("standard layout"));
            }
            a = z;
        }
        (a, Tape { inputs })
    }

    /// Reverse pass: accumulates parameter gradients into `grad` and, when
    /// `want_input` is set, returns the gradient with respect to the batch input.
    pub(crate) fn backward_batch(
        &self,
        tape: &Tape<T>,
        gout: Array2<T>,
        grad: &mut [T],
        want_input: bool,
    ) -> Option<Array2<T>> {
        let mut g = gout.as_standard_layout().into_owned();
        for l in (0..self.layers()).rev() {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let o = self.offset(l);
            let (gw, rest) = grad[o..].split_at_mut(out * inp);
            let a = &tape.inputs[l];
            let w = self.weight(l);
            let gs = g.as_slice().expect("standard layout");
            let av = a.as_slice().expect("standard layout");
            let gb = &mut rest[..out];
            for gr in gs.chunks_exact(out) {
                for (b, v) in gb.iter_mut().zip(gr) {
                    *b += *v;
                }
            }
            if out <= NARROW {
                for (gr, ar) in gs.chunks_exact(out).zip(av.chunks_exact(inp)) {
                    for (c, gwr) in gr.iter().zip(gw.chunks_exact_mut(inp)) {
                        axpy(gwr, *c, ar);
                    }
                }
            } else if inp <= NARROW {
                let mut gwt = vec![T::zero(); inp * out];
                for (gr, ar) in gs.chunks_exact(out).zip(av.chunks_exact(inp)) {
                    for (c, row) in ar.iter().zip(gwt.chunks_exact_mut(out)) {
                        axpy(row, *c, gr);
                    }
                }
                for (i, row) in gwt.chunks_exact(out).enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        gw[k * inp + i] += *v;
                    }
                }
            } else {
                let mut gw = ArrayViewMut2::from_shape((out, inp), gw).expect("layout");
                general_mat_mul(T::one(), &g.t(), a, T::one(), &mut gw);
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut back = if out <= NARROW || inp <= NARROW {
                let ws = w.as_slice().expect("standard layout");
                let mut back = Array2::zeros((g.nrows(), inp));
                let bs = back.as_slice_mut().expect("standard layout");
                if out <= NARROW {
                    for (gr, br) in gs.chunks_exact(out).zip(bs.chunks_exact_mut(inp)) {
                        for (c, wr) in gr.iter().zip(ws.chunks_exact(inp)) {
                            axpy(br, *c, wr);
                        }
                    }
                } else {
                    let wt = w.t().as_standard_layout().into_owned();
                    let wts = wt.as_slice().expect("standard layout");
                    for (gr, br) in gs.chunks_exact(out).zip(bs.chunks_exact_mut(inp)) {
                        for (b, wc) in br.iter_mut().zip(wts.chunks_exact(out)) {
                            *b = dot(gr, wc);
                        }
                    }
                }
                back
            } else {
                g.dot(&w)
            };
            if l > 0 {
                back.zip_mut_with(a, |b, &av| *b = *b * (T::one() - av * av));
            }
            g = back;
        }
        Some(g)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..self.layers() {
            weights.push(
                self.weight(l)
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                    .collect(),
            );
            biases.push(self.bias(l).iter().map(|v| v.to_f64_lossy()).collect());
        }
        Checkpoint {
            dims: self.dims.clone(),
            activation: "tanh".into(),
            weights,
            biases,
            seed: self.seed,
            metadata: Default::default(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.activation != "tanh" {
            return Err(Error::UnknownName {
                what: "activation",
                name: c.activation.clone(),
            });
        }
        check_dims(&c.dims)?;
        check_dim(c.dims.len() - 1, c.weights.len())?;
        check_dim(c.dims.len() - 1, c.biases.len())?;
        let mut data = Vec::with_capacity(param_count(&c.dims));
        for (l, (w, b)) in c.weights.iter().zip(&c.biases).enumerate() {
            check_dim(c.dims[l + 1], w.len())?;
            check_dim(c.dims[l + 1], b.len())?;
            for row in w {
                check_dim(c.dims[l], row.len())?;
                data.extend(row.iter().map(|v| T::lit(*v)));
            }
            data.extend(b.iter().map(|v| T::lit(*v)));
        }
        let mut p = Self::from_flat(&c.dims, data)?;
        p.seed = c.seed;
        if !p.all_finite() {
            return Err(Error::invalid("checkpoint holds non-finite parameters"));
        }
        Ok(p)
    }

    /// Converts to another float width.
    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            seed: self.seed,
        }
    }
}

pub(crate) struct Tape<T> {
    inputs: Vec<Array2<T>>,
}

impl<T: Real> VectorField for MlpParams<T> {
    type Real = T;

    fn dim(&self) -> usize {
        self.dims[0]
    }

    fn eval<S: Scalar<Real = T>>(&self, y: &[S]) -> Result<Vec<S>> {
        check_dim(self.dim(), y.len())?;
        let mut a: Vec<S> = y.to_vec();
        for l in 0..self.layers() {
            let w = self.weight(l);
            let b = self.bias(l);
            let hidden = l + 1 < self.layers();
            a = w
                .rows()
                .into_iter()
                .zip(b.iter())
                .map(|(row, &bi)| {
                    let mut z = a[0].zero_like().add_real(bi);
                    for (wij, aj) in row.iter().zip(&a) {
                        if !wij.is_zero() {
                            z += aj.scale(*wij);
                        }
                    }
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
        }
        Ok(a)
    }
}

/// Serialized network: shapes, activation and row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub dims: Vec<usize>,
    pub activation: String,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Jet;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn init_shape_and_determinism() {
        let a = mlp_init::<f64>(&[2, 64, 64, 2], 7).unwrap();
        assert_eq!(a.count(), 2 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(a.count(), 4482);
        assert_eq!(a, mlp_init(&[2, 64, 64, 2], 7).unwrap());
        assert_ne!(a, mlp_init(&[2, 64, 64, 2], 8).unwrap());
        for l in 0..3 {
            assert!(a.bias(l).iter().all(|b| *b == 0.0));
        }
        let bound = (6.0f64 / 128.0).sqrt();
        assert!(a.weight(1).iter().all(|w| w.abs() <= bound));
        assert!(mlp_init::<f64>(&[2, 8, 3], 0).is_err());
    }

    #[test]
    fn zero_net_and_linear_layer() {
        let z = MlpParams::<f64>::zeros(&[2, 5, 2]).unwrap();
        assert_eq!(z.eval(&[0.3, -4.0]).unwrap(), vec![0.0, 0.0]);
        let w = array![[1.0, 2.0], [-0.5, 3.0]];
        let lin = MlpParams::from_layers(&[(w, vec![0.1, 0.2])]).unwrap();
        let y = lin.eval(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(y[0], 3.1);
        assert_relative_eq!(y[1], 2.7);
    }

    #[test]
    fn batch_matches_pointwise() {
        let p = mlp_init::<f64>(&[2, 6, 5, 2], 3).unwrap();
        let x = array![[0.1, -0.4], [2.0, 0.7], [-1.0, 0.0]];
        let y = p.forward_batch(x.view());
        for (row, out) in x.rows().into_iter().zip(y.rows()) {
            let want = p.eval(&[row[0], row[1]]).unwrap();
            assert_relative_eq!(out[0], want[0], epsilon = 1e-14);
            assert_relative_eq!(out[1], want[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn jet_eval_matches_finite_difference() {
        let p = mlp_init::<f64>(&[2, 8, 8, 2], 5).unwrap();
        let x = [0.4, -0.9];
        let d = [0.6, 0.8];
        let jet: Vec<Jet<f64>> = x
            .iter()
            .zip(d)
            .map(|(a, b)| Jet::new(vec![*a, b]).unwrap())
            .collect();
        let out = p.eval(&jet).unwrap();
        let e = 1e-6;
        let plus = p.eval(&[x[0] + e * d[0], x[1] + e * d[1]]).unwrap();
        let minus = p.eval(&[x[0] - e * d[0], x[1] - e * d[1]]).unwrap();
        for i in 0..2 {
            let fd = (plus[i] - minus[i]) / (2.0 * e);
            assert_relative_eq!(*out[i].coeff(1), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = mlp_init::<f64>(&[2, 4, 2], 9).unwrap();
        let json = serde_json::to_string(&p.to_checkpoint()).unwrap();
        let c: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(MlpParams::<f64>::from_checkpoint(&c).unwrap(), p);
    }
}
