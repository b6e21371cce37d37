//! Dense layers and a ReLU multilayer perceptron with hand-written
//! reverse-mode gradients. Generic over `f32` (training, inference) and
//! `f64` (gradient checking).

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    /// `c = alpha * a * b + beta * c` on strided matrices.
    ///
    /// # Safety
    /// Strides and dimensions must describe memory inside the given pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major `c (m×n) = alpha · op(a) · op(b) + beta · c`, where `op(a)` is
/// `m×k` and `op(b)` is `k×n`. A transposed operand is stored in its
/// untransposed row-major shape.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every access the strides describe.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Which optimizer treatment a parameter tensor receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    HashTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs × outputs`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weight.iter_mut() {
            *w = T::c(rng.gen_range(-bound..=bound));
        }
        layer
    }
}

/// Fully connected network: ReLU after every layer but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Activations kept from a forward pass for the backward pass.
/// `acts[0]` is the input, `acts[i]` the output of layer `i - 1`
/// (post-ReLU for hidden layers, raw for the last one).
#[derive(Clone, Debug)]
pub struct MlpTrace<T> {
    pub rows: usize,
    pub acts: Vec<Vec<T>>,
}

impl<T> MlpTrace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().unwrap()
    }
}

impl<T: Real> Mlp<T> {
    /// Layer widths `dims[0] → dims[1] → … → dims[n]`, all zero.
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-uniform hidden layers with zero biases; the output layer is drawn
    /// from a narrower uniform range (`out_scale` times the He bound).
    pub fn init<R: Rng>(dims: &[usize], out_scale: f64, rng: &mut R) -> Self {
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let he = (6.0 / w[0] as f64).sqrt();
                let bound = if i + 1 == n { he * out_scale } else { he };
                Dense::uniform(w[0], w[1], bound, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: Vec<T>, rows: usize) -> MlpTrace<T> {
        assert_eq!(input.len(), rows * self.input_dim());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(rows * layer.outputs);
            for _ in 0..rows {
                out.extend_from_slice(&layer.bias);
            }
            gemm(
                rows,
                layer.inputs,
                layer.outputs,
                T::one(),
                &acts[i],
                false,
                &layer.weight,
                false,
                T::one(),
                &mut out,
            );
            if i < last {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            acts.push(out);
        }
        MlpTrace { rows, acts }
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input when `want_input` is set.
    pub fn backward(
        &self,
        trace: &MlpTrace<T>,
        d_out: Vec<T>,
        grads: &mut Mlp<T>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let rows = trace.rows;
        let mut delta = d_out;
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                for (d, &a) in delta.iter_mut().zip(&trace.acts[i + 1]) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let g = &mut grads.layers[i];
            gemm(
                layer.inputs,
                rows,
                layer.outputs,
                T::one(),
                &trace.acts[i],
                true,
                &delta,
                false,
                T::one(),
                &mut g.weight,
            );
            for row in delta.chunks_exact(layer.outputs) {
                for (b, &d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if i > 0 || want_input {
                let mut next = vec![T::zero(); rows * layer.inputs];
                gemm(
                    rows,
                    layer.outputs,
                    layer.inputs,
                    T::one(),
                    &delta,
                    false,
                    &layer.weight,
                    true,
                    T::zero(),
                    &mut next,
                );
                delta = next;
            } else {
                return None;
            }
        }
        Some(delta)
    }

    pub fn tensors(&self) -> Vec<(TensorKind, &[T])> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    (TensorKind::Weight, l.weight.as_slice()),
                    (TensorKind::Bias, l.bias.as_slice()),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorKind, &mut [T])> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    (TensorKind::Weight, l.weight.as_mut_slice()),
                    (TensorKind::Bias, l.bias.as_mut_slice()),
                ]
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weight: l.weight.iter().map(|&v| U::c(v.f64())).collect(),
                    bias: l.bias.iter().map(|&v| U::c(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(mlp: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (i, l) in mlp.layers.iter().enumerate() {
            let mut out = l.bias.clone();
            for o in 0..l.outputs {
                for j in 0..l.inputs {
                    out[o] += a[j] * l.weight[j * l.outputs + o];
                }
            }
            if i + 1 < mlp.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = out;
        }
        a
    }

    #[test]
    fn gemm_transposes() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        gemm(2, 3, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // aᵀ·a : 3x3 with a stored 2x3
        let mut d = [0.0f64; 9];
        gemm(3, 2, 3, 1.0, &a, true, &a, false, 0.0, &mut d);
        assert_eq!(d, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a·aᵀ : 2x2
        let mut e = [0.0f64; 4];
        gemm(2, 3, 2, 1.0, &a, false, &a, true, 0.0, &mut e);
        assert_eq!(e, [14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp: Mlp<f64> = Mlp::init(&[3, 16, 16, 5], 1.0, &mut rng);
        let rows = 7;
        let x: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tr = mlp.forward(x.clone(), rows);
        for r in 0..rows {
            let want = naive_forward(&mlp, &x[r * 3..r * 3 + 3]);
            for (o, w) in tr.output()[r * 5..r * 5 + 5].iter().zip(&want) {
                assert!((o - w).abs() < 1e-12 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp: Mlp<f64> = Mlp::init(&[3, 8, 8, 2], 1.0, &mut rng);
        let rows = 4;
        let x: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &Mlp<f64>, x: &[f64]| -> f64 {
            m.forward(x.to_vec(), rows).output().iter().map(|v| v * v).sum::<f64>() * 0.5
        };
        let tr = mlp.forward(x.clone(), rows);
        let mut grads = mlp.zeros_like();
        let dx = mlp.backward(&tr, tr.output().to_vec(), &mut grads, true).unwrap();
        let h = 1e-6;
        for li in 0..mlp.layers.len() {
            for wi in [0, 3, 7] {
                let mut p = mlp.clone();
                p.layers[li].weight[wi] += h;
                let lp = loss(&p, &x);
                p.layers[li].weight[wi] -= 2.0 * h;
                let lm = loss(&p, &x);
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[li].weight[wi];
                assert!((fd - an).abs() < 1e-6 * fd.abs().max(1e-3), "{li}/{wi}: {fd} vs {an}");
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let lp = loss(&mlp, &xp);
            xp[i] -= 2.0 * h;
            let lm = loss(&mlp, &xp);
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn stable_logistics() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0f64), 1000.0);
    }
}
