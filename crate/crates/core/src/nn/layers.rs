//! Layer kernels. Forward passes write into caller-provided buffers so the
//! per-patch path and the striped full-map path share one summation order.

use rand::Rng;

use super::{Real, Tensor3};
use crate::error::{Error, Result};

pub const POOL_WINDOW: usize = 3;
pub const POOL_STRIDE: usize = 2;

/// Spatial size after 3x3 / stride-2 max pooling, or `None` if `d < 3`.
pub fn pool_dim(d: usize) -> Option<usize> {
    (d >= POOL_WINDOW).then(|| (d - POOL_WINDOW) / POOL_STRIDE + 1)
}

/// `k x k x c_in x c_out` filters with valid padding and unit stride.
/// Kernel layout is `[a][b][c_in][c_out]`, output channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Self {
        ConvLayer {
            k,
            c_in,
            c_out,
            kernel: vec![T::zero(); k * k * c_in * c_out],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn output_dims(&self, rows: usize, cols: usize) -> Option<(usize, usize)> {
        (rows >= self.k && cols >= self.k).then(|| (rows - self.k + 1, cols - self.k + 1))
    }

    /// `out[i,j,f] = bias[f] + sum_{a,b,c} x[i+a, j+b, c] * kernel[a,b,c,f]`,
    /// accumulated in `(a, b, c)` order.
    pub(crate) fn forward_into(&self, input: &[T], rows: usize, cols: usize, out: &mut [T]) {
        let (k, cin, cout) = (self.k, self.c_in, self.c_out);
        let (oh, ow) = (rows - k + 1, cols - k + 1);
        debug_assert_eq!(input.len(), rows * cols * cin);
        debug_assert_eq!(out.len(), oh * ow * cout);
        for i in 0..oh {
            for j in 0..ow {
                let o = &mut out[(i * ow + j) * cout..(i * ow + j + 1) * cout];
                o.copy_from_slice(&self.bias);
                for a in 0..k {
                    let row_start = ((i + a) * cols + j) * cin;
                    let x_row = &input[row_start..row_start + k * cin];
                    let k_row = &self.kernel[a * k * cin * cout..(a + 1) * k * cin * cout];
                    for (xv, kv) in x_row.iter().zip(k_row.chunks_exact(cout)) {
                        for (of, &w) in o.iter_mut().zip(kv) {
                            *of += *xv * w;
                        }
                    }
                }
            }
        }
    }

    /// Accumulates kernel and bias gradients and, when `dx` is given, the
    /// gradient with respect to the input.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        input: &[T],
        rows: usize,
        cols: usize,
        dout: &[T],
        grad_kernel: &mut [T],
        grad_bias: &mut [T],
        mut dx: Option<&mut [T]>,
    ) {
        let (k, cin, cout) = (self.k, self.c_in, self.c_out);
        let (oh, ow) = (rows - k + 1, cols - k + 1);
        for i in 0..oh {
            for j in 0..ow {
                let d = &dout[(i * ow + j) * cout..(i * ow + j + 1) * cout];
                for (g, &v) in grad_bias.iter_mut().zip(d) {
                    *g += v;
                }
                for a in 0..k {
                    let row_start = ((i + a) * cols + j) * cin;
                    let x_row = &input[row_start..row_start + k * cin];
                    let span = a * k * cin * cout..(a + 1) * k * cin * cout;
                    let gk_row = &mut grad_kernel[span.clone()];
                    for (xv, gk) in x_row.iter().zip(gk_row.chunks_exact_mut(cout)) {
                        for (g, &v) in gk.iter_mut().zip(d) {
                            *g += *xv * v;
                        }
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let k_row = &self.kernel[span];
                        let dx_row = &mut dx[row_start..row_start + k * cin];
                        for (dxv, kv) in dx_row.iter_mut().zip(k_row.chunks_exact(cout)) {
                            let mut acc = T::zero();
                            for (&w, &v) in kv.iter().zip(d) {
                                acc += w * v;
                            }
                            *dxv += acc;
                        }
                    }
                }
            }
        }
    }
}

/// Valid-padding cross-correlation of `x` with `layer`.
pub fn conv_forward<T: Real>(x: &Tensor3<T>, layer: &ConvLayer<T>) -> Result<Tensor3<T>> {
    if x.channels() != layer.c_in {
        return Err(Error::dims(format!(
            "convolution expects {} input channels, got {}",
            layer.c_in,
            x.channels()
        )));
    }
    let (oh, ow) = layer.output_dims(x.rows(), x.cols()).ok_or_else(|| {
        Error::dims(format!(
            "{}x{} input is smaller than the {}x{} kernel",
            x.rows(),
            x.cols(),
            layer.k,
            layer.k
        ))
    })?;
    let mut out = Tensor3::zeros(oh, ow, layer.c_out);
    layer.forward_into(x.data(), x.rows(), x.cols(), out.data_mut());
    Ok(out)
}

pub fn relu<T: Real>(x: &Tensor3<T>) -> Tensor3<T> {
    x.map(|v| v.max(T::zero()))
}

#[inline]
pub(crate) fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// 3x3 / stride-2 max pooling of a `rows x cols x channels` buffer. Records
/// the flat input index of each maximum (first in scan order on ties).
pub(crate) fn maxpool_into<T: Real>(
    input: &[T],
    rows: usize,
    cols: usize,
    channels: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    let (ph, pw) = (pool_dim(rows).unwrap(), pool_dim(cols).unwrap());
    for pi in 0..ph {
        for pj in 0..pw {
            let o = (pi * pw + pj) * channels;
            let first = (pi * POOL_STRIDE * cols + pj * POOL_STRIDE) * channels;
            for c in 0..channels {
                out[o + c] = input[first + c];
                argmax[o + c] = first + c;
            }
            for a in 0..POOL_WINDOW {
                for b in 0..POOL_WINDOW {
                    let base = ((pi * POOL_STRIDE + a) * cols + pj * POOL_STRIDE + b) * channels;
                    for c in 0..channels {
                        let v = input[base + c];
                        if v > out[o + c] {
                            out[o + c] = v;
                            argmax[o + c] = base + c;
                        }
                    }
                }
            }
        }
    }
}

pub fn maxpool_forward<T: Real>(x: &Tensor3<T>) -> Result<(Tensor3<T>, Vec<usize>)> {
    let (ph, pw) = match (pool_dim(x.rows()), pool_dim(x.cols())) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(Error::dims(format!(
                "{}x{} input is too small for 3x3 pooling",
                x.rows(),
                x.cols()
            )))
        }
    };
    let mut out = Tensor3::zeros(ph, pw, x.channels());
    let mut argmax = vec![0; ph * pw * x.channels()];
    maxpool_into(x.data(), x.rows(), x.cols(), x.channels(), out.data_mut(), &mut argmax);
    Ok((out, argmax))
}

/// Fully connected layer `y = W v + b`. Weights are stored input-major,
/// `weights[i * n_out + o] = W[o][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            n_in,
            n_out,
            weights: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
        }
    }

    /// Builds a layer from an `n_out x n_in` row-major matrix.
    pub fn from_matrix(matrix: &[Vec<T>], bias: Vec<T>) -> Result<Self> {
        let n_out = matrix.len();
        let n_in = matrix.first().map_or(0, Vec::len);
        if bias.len() != n_out || matrix.iter().any(|r| r.len() != n_in) {
            return Err(Error::dims("ragged dense matrix or bias length mismatch"));
        }
        let mut weights = vec![T::zero(); n_in * n_out];
        for (o, row) in matrix.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                weights[i * n_out + o] = w;
            }
        }
        Ok(DenseLayer {
            n_in,
            n_out,
            weights,
            bias,
        })
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> T {
        self.weights[input * self.n_out + out]
    }

    pub(crate) fn forward_into(&self, v: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.bias);
        for (&x, w_row) in v.iter().zip(self.weights.chunks_exact(self.n_out)) {
            for (o, &w) in out.iter_mut().zip(w_row) {
                *o += x * w;
            }
        }
    }

    pub(crate) fn backward(&self, v: &[T], dout: &[T], grad_w: &mut [T], grad_b: &mut [T], dv: Option<&mut [T]>) {
        for (g, &d) in grad_b.iter_mut().zip(dout) {
            *g += d;
        }
        for (&x, gw) in v.iter().zip(grad_w.chunks_exact_mut(self.n_out)) {
            for (g, &d) in gw.iter_mut().zip(dout) {
                *g += x * d;
            }
        }
        if let Some(dv) = dv {
            for (dx, w_row) in dv.iter_mut().zip(self.weights.chunks_exact(self.n_out)) {
                let mut acc = T::zero();
                for (&w, &d) in w_row.iter().zip(dout) {
                    acc += w * d;
                }
                *dx += acc;
            }
        }
    }
}

pub fn dense_forward<T: Real>(v: &[T], layer: &DenseLayer<T>) -> Result<Vec<T>> {
    if v.len() != layer.n_in {
        return Err(Error::dims(format!(
            "dense layer expects {} inputs, got {}",
            layer.n_in,
            v.len()
        )));
    }
    let mut out = vec![T::zero(); layer.n_out];
    layer.forward_into(v, &mut out);
    Ok(out)
}

/// `exp(l_i - max) / sum_j exp(l_j - max)`.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-ln softmax(logits)[label]` and its gradient with respect
/// to the logits, `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&l| (l - max).exp()).sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<T> = logits.iter().map(|&l| (l - max).exp() / sum).collect();
    grad[label] -= T::one();
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Inference,
}

/// Inverted dropout. In training each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; inference is the
/// identity. Returns the output and the multiplicative mask.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &[T],
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> (Vec<T>, Vec<T>) {
    let mask = dropout_mask(x.len(), rate, mode, rng);
    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (out, mask)
}

pub(crate) fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, mode: DropoutMode, rng: &mut R) -> Vec<T> {
    if mode == DropoutMode::Inference || rate <= 0.0 {
        return vec![T::one(); len];
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_output_dims_and_bias() {
        let x = Tensor3::<f32>::new(11, 11, 10, vec![0.3; 1210]).unwrap();
        let mut layer = ConvLayer::<f32>::zeros(3, 10, 32);
        layer.bias.iter_mut().enumerate().for_each(|(f, b)| *b = f as f32 * 0.5);
        let out = conv_forward(&x, &layer).unwrap();
        assert_eq!(out.dims(), (9, 9, 32));
        for i in 0..9 {
            for j in 0..9 {
                for f in 0..32 {
                    assert_eq!(out.get(i, j, f), f as f32 * 0.5);
                }
            }
        }
    }

    #[test]
    fn conv_single_window_is_dot_product() {
        let xs: Vec<f64> = (0..9).map(|v| v as f64 - 4.0).collect();
        let ks: Vec<f64> = (0..9).map(|v| 0.5 * v as f64 + 1.0).collect();
        let x = Tensor3::new(3, 3, 1, xs.clone()).unwrap();
        let layer = ConvLayer {
            k: 3,
            c_in: 1,
            c_out: 1,
            kernel: ks.clone(),
            bias: vec![0.0],
        };
        let out = conv_forward(&x, &layer).unwrap();
        let dot: f64 = xs.iter().zip(&ks).map(|(a, b)| a * b).sum();
        assert_eq!(out.dims(), (1, 1, 1));
        assert_eq!(out.get(0, 0, 0), dot);
        assert_eq!(dot, 30.0);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor3::<f32>::zeros(5, 5, 3);
        assert!(conv_forward(&x, &ConvLayer::zeros(3, 4, 2)).is_err());
        let small = Tensor3::<f32>::zeros(2, 5, 4);
        assert!(conv_forward(&small, &ConvLayer::zeros(3, 4, 2)).is_err());
    }

    #[test]
    fn relu_cases() {
        let t = |v: Vec<f32>| Tensor3::new(1, v.len(), 1, v).unwrap();
        assert_eq!(relu(&t(vec![-1.0, -2.0])).data(), &[0.0, 0.0]);
        assert_eq!(relu(&t(vec![1.5, 2.0])).data(), &[1.5, 2.0]);
        assert_eq!(relu(&t(vec![-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn pool_dims_and_ramp() {
        let x = Tensor3::<f32>::new(7, 7, 64, vec![1.25; 7 * 7 * 64]).unwrap();
        let (out, _) = maxpool_forward(&x).unwrap();
        assert_eq!(out.dims(), (3, 3, 64));
        assert!(out.data().iter().all(|&v| v == 1.25));

        let ramp: Vec<f32> = (0..49).map(|v| v as f32).collect();
        let x = Tensor3::new(7, 7, 1, ramp).unwrap();
        let (out, argmax) = maxpool_forward(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (r, c) = (2 * i + 2, 2 * j + 2);
                assert_eq!(out.get(i, j, 0), (7 * r + c) as f32);
                assert_eq!(argmax[i * 3 + j], 7 * r + c);
            }
        }
        assert!(maxpool_forward(&Tensor3::<f32>::zeros(2, 7, 1)).is_err());
    }

    #[test]
    fn dense_cases() {
        let layer = DenseLayer::from_matrix(&[vec![1.0, 2.0]], vec![3.0]).unwrap();
        assert_eq!(dense_forward(&[4.0, 5.0], &layer).unwrap(), vec![17.0]);
        assert_eq!(layer.weight(0, 1), 2.0);

        let eye = DenseLayer::from_matrix(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0.0; 3],
        )
        .unwrap();
        assert_eq!(dense_forward(&[0.1, -2.0, 7.0], &eye).unwrap(), vec![0.1, -2.0, 7.0]);
        assert!(dense_forward(&[1.0], &eye).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[0.7f64; 14]);
        assert!(p.iter().all(|&v| (v - 1.0 / 14.0).abs() < 1e-15));

        let l: Vec<f64> = (0..14).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let shifted: Vec<f64> = l.iter().map(|v| v + 123.0).collect();
        let (a, b) = (softmax(&l), softmax(&shifted));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }

        let two = softmax(&[0.0f64, 3.0f64.ln()]);
        assert!((two[0] - 0.25).abs() < 1e-15 && (two[1] - 0.75).abs() < 1e-15);

        let big = softmax(&[1000.0f64, 0.0]);
        assert!(big[0].is_finite() && (big[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let logits = [0.3f64, -1.2, 2.0, 0.05];
        let (loss, grad) = softmax_cross_entropy(&logits, 2);
        let p = softmax(&logits);
        assert!((loss + p[2].ln()).abs() < 1e-14);
        let eps = 1e-6;
        for i in 0..4 {
            let mut up = logits;
            let mut down = logits;
            up[i] += eps;
            down[i] -= eps;
            let fd = (softmax_cross_entropy(&up, 2).0 - softmax_cross_entropy(&down, 2).0) / (2.0 * eps);
            let expect = p[i] - if i == 2 { 1.0 } else { 0.0 };
            assert!((grad[i] - expect).abs() < 1e-15);
            assert!((fd - grad[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f32> = (0..100).map(|v| v as f32).collect();
        assert_eq!(dropout_forward(&x, 0.0, DropoutMode::Train, &mut rng).0, x);
        assert_eq!(dropout_forward(&x, 0.0, DropoutMode::Inference, &mut rng).0, x);
        assert_eq!(dropout_forward(&x, 0.5, DropoutMode::Inference, &mut rng).0, x);

        let ones = vec![1.0f64; 100_000];
        let (out, _) = dropout_forward(&ones, 0.5, DropoutMode::Train, &mut rng);
        let survivors = out.iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((survivors - 0.5).abs() < 0.01, "{survivors}");
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
