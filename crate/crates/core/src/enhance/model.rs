//! Stacked LSTM mask estimator with a linear output layer.
//!
//! Each layer follows the usual gate formulation (order `i, f, g, o`):
//!
//! ```text
//! a_t = W_ih x_t + W_hh h_{t-1} + b
//! i = sigma(a_i)   f = sigma(a_f)   g = tanh(a_g)   o = sigma(a_o)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! The last hidden state is mapped to `2F` values `z`, and the mask is
//! `M = K tanh(s z)` with `K = MASK_LIMIT`, `s = MASK_SLOPE`; the first `F`
//! outputs are the real part, the rest the imaginary part.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mask::ComplexMask;
use crate::error::{Error, Result};
use crate::features::{FeatureTensor, NUM_BLOCKS};

pub const MASK_LIMIT: f64 = 10.0;
pub const MASK_SLOPE: f64 = 0.05;

/// Floating-point type the model can run in.
pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + std::fmt::Debug
    + Default
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::MulAssign
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 512,
            layers: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<T> {
    /// `4H x D`
    pub w_ih: Array2<T>,
    /// `4H x H`
    pub w_hh: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> LstmLayer<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskEstimator<T> {
    pub num_bins: usize,
    pub layers: Vec<LstmLayer<T>>,
    /// `2F x H`
    pub fc_w: Array2<T>,
    pub fc_b: Array1<T>,
}

/// Recurrent state of one stream.
#[derive(Debug, Clone)]
pub struct StreamState<T> {
    h: Vec<Array1<T>>,
    c: Vec<Array1<T>>,
    gates: Array1<T>,
    input: Array1<T>,
}

impl<T: Scalar> StreamState<T> {
    pub fn reset(&mut self) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()) {
            v.fill(T::zero());
        }
    }
}

/// Bias that makes the real mask exactly `value` when the FC weights are 0.
pub fn bias_for_mask(value: f64) -> f64 {
    (value / MASK_LIMIT).atanh() / MASK_SLOPE
}

impl<T: Scalar> MaskEstimator<T> {
    /// All parameters zero.
    pub fn zeros(num_bins: usize, hidden: usize, layers: usize) -> Self {
        let input = NUM_BLOCKS * num_bins;
        MaskEstimator {
            num_bins,
            layers: (0..layers)
                .map(|l| LstmLayer::zeros(if l == 0 { input } else { hidden }, hidden))
                .collect(),
            fc_w: Array2::zeros((2 * num_bins, hidden)),
            fc_b: Array1::zeros(2 * num_bins),
        }
    }

    /// Uniform `[-1/sqrt(H), 1/sqrt(H)]` initialization. The output bias
    /// starts the real mask at 1 and the imaginary mask at 0.
    pub fn new(num_bins: usize, config: &ModelConfig) -> Result<Self> {
        if num_bins == 0 || config.hidden == 0 || config.layers == 0 {
            return Err(Error::Parameter(
                "num_bins, hidden and layers must all be positive".into(),
            ));
        }
        let mut model = Self::zeros(num_bins, config.hidden, config.layers);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (config.hidden as f64).sqrt();
        for p in model.params_mut() {
            for v in p.iter_mut() {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        let unit = T::of(bias_for_mask(1.0));
        for (k, b) in model.fc_b.iter_mut().enumerate() {
            *b = if k < num_bins { unit } else { T::zero() };
        }
        Ok(model)
    }

    pub fn hidden(&self) -> usize {
        self.fc_w.ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        NUM_BLOCKS * self.num_bins
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter slices in checkpoint order: per layer `w_ih, w_hh, bias`,
    /// then `fc_w, fc_b`.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w_ih.as_slice().expect("standard layout"));
            out.push(l.w_hh.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out.push(self.fc_w.as_slice().expect("standard layout"));
        out.push(self.fc_b.as_slice().expect("standard layout"));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.w_ih.as_slice_mut().expect("standard layout"));
            out.push(l.w_hh.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.fc_w.as_slice_mut().expect("standard layout"));
        out.push(self.fc_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.num_bins, self.hidden(), self.num_layers())
    }

    pub fn cast<U: Scalar>(&self) -> MaskEstimator<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.f64()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::of(v.f64()));
        MaskEstimator {
            num_bins: self.num_bins,
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_ih: c2(&l.w_ih),
                    w_hh: c2(&l.w_hh),
                    bias: c1(&l.bias),
                })
                .collect(),
            fc_w: c2(&self.fc_w),
            fc_b: c1(&self.fc_b),
        }
    }

    fn check_features(&self, features: &FeatureTensor) -> Result<()> {
        if features.num_bins != self.num_bins || features.values.nrows() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} feature rows (F = {}), got {} (F = {})",
                self.input_dim(),
                self.num_bins,
                features.values.nrows(),
                features.num_bins
            )));
        }
        Ok(())
    }

    pub fn new_state(&self) -> StreamState<T> {
        let h = self.hidden();
        StreamState {
            h: vec![Array1::zeros(h); self.num_layers()],
            c: vec![Array1::zeros(h); self.num_layers()],
            gates: Array1::zeros(4 * h),
            input: Array1::zeros(self.input_dim()),
        }
    }

    /// One causal step: consumes one feature frame (`6F` values) and writes
    /// the mask frame (`2F` values, real part first).
    pub fn step(&self, state: &mut StreamState<T>, frame: &[f64], mask: &mut [f64]) -> Result<()> {
        if frame.len() != self.input_dim() || mask.len() != 2 * self.num_bins {
            return Err(Error::Shape(format!(
                "step expects {} inputs and {} outputs, got {} and {}",
                self.input_dim(),
                2 * self.num_bins,
                frame.len(),
                mask.len()
            )));
        }
        for (d, s) in state.input.iter_mut().zip(frame) {
            *d = T::of(*s);
        }
        let hid = self.hidden();
        for (l, layer) in self.layers.iter().enumerate() {
            let a = if l == 0 {
                layer.w_ih.dot(&state.input)
            } else {
                layer.w_ih.dot(&state.h[l - 1])
            };
            state.gates.assign(&a);
            state.gates += &layer.w_hh.dot(&state.h[l]);
            state.gates += &layer.bias;
            let g = state.gates.as_slice().expect("contiguous");
            let c = state.c[l].as_slice_mut().expect("contiguous");
            let h = state.h[l].as_slice_mut().expect("contiguous");
            for j in 0..hid {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hid + j]);
                let gg = g[2 * hid + j].tanh();
                let o = sigmoid(g[3 * hid + j]);
                c[j] = f * c[j] + i * gg;
                h[j] = o * c[j].tanh();
            }
        }
        let top = &state.h[self.num_layers() - 1];
        let z = self.fc_w.dot(top) + &self.fc_b;
        for (m, v) in mask.iter_mut().zip(z.iter()) {
            *m = bound_mask(v.f64());
        }
        Ok(())
    }

    /// Mask for a whole utterance. The input projection of every layer is
    /// done as one matrix product; the recurrence is still causal.
    pub fn estimate_mask(&self, features: &FeatureTensor) -> Result<ComplexMask> {
        self.check_features(features)?;
        let x: Array2<T> = features.values.t().mapv(T::of);
        let top = self.forward_layers(x.view());
        Ok(self.project(&top))
    }

    /// Frame-by-frame evaluation through [`MaskEstimator::step`].
    pub fn estimate_mask_streaming(&self, features: &FeatureTensor) -> Result<ComplexMask> {
        self.check_features(features)?;
        let f = self.num_bins;
        let t = features.num_frames();
        let mut state = self.new_state();
        let mut mask = ComplexMask::zeros(f, t);
        let mut frame = vec![0.0; self.input_dim()];
        let mut out = vec![0.0; 2 * f];
        for (ti, col) in features.values.axis_iter(Axis(1)).enumerate() {
            frame.iter_mut().zip(col.iter()).for_each(|(d, s)| *d = *s);
            self.step(&mut state, &frame, &mut out)?;
            for k in 0..f {
                mask.real[[k, ti]] = out[k];
                mask.imag[[k, ti]] = out[f + k];
            }
        }
        Ok(mask)
    }

    /// Hidden states of the top layer for a `T x D` input.
    fn forward_layers(&self, x: ArrayView2<T>) -> Array2<T> {
        let t_len = x.nrows();
        let hid = self.hidden();
        let mut input = x.to_owned();
        for layer in &self.layers {
            let mut pre = input.dot(&layer.w_ih.t());
            pre += &layer.bias;
            let mut h = Array1::<T>::zeros(hid);
            let mut c = Array1::<T>::zeros(hid);
            let mut out = Array2::<T>::zeros((t_len, hid));
            for t in 0..t_len {
                let mut g = pre.row_mut(t);
                g += &layer.w_hh.dot(&h);
                for j in 0..hid {
                    let i = sigmoid(g[j]);
                    let f = sigmoid(g[hid + j]);
                    let gg = g[2 * hid + j].tanh();
                    let o = sigmoid(g[3 * hid + j]);
                    c[j] = f * c[j] + i * gg;
                    h[j] = o * c[j].tanh();
                }
                out.row_mut(t).assign(&h);
            }
            input = out;
        }
        input
    }

    fn project(&self, top: &Array2<T>) -> ComplexMask {
        let f = self.num_bins;
        let mut z = top.dot(&self.fc_w.t());
        z += &self.fc_b;
        let t_len = top.nrows();
        let mut mask = ComplexMask::zeros(f, t_len);
        for t in 0..t_len {
            for k in 0..f {
                mask.real[[k, t]] = bound_mask(z[[t, k]].f64());
                mask.imag[[k, t]] = bound_mask(z[[t, f + k]].f64());
            }
        }
        mask
    }
}

#[inline]
pub fn bound_mask(z: f64) -> f64 {
    MASK_LIMIT * (MASK_SLOPE * z).tanh()
}

/// Cached activations of one layer over a batch, rows ordered `t * B + b`.
pub(crate) struct LayerCache<T> {
    input: Array2<T>,
    /// Activated gates `[i, f, g, o]`.
    gates: Array2<T>,
    c: Array2<T>,
    h: Array2<T>,
}

pub(crate) struct ForwardCache<T> {
    batch: usize,
    steps: usize,
    layers: Vec<LayerCache<T>>,
    /// `tanh(s z)` per output.
    squashed: Array2<T>,
}

impl<T: Scalar> MaskEstimator<T> {
    /// Forward pass over `B` sequences of equal length, each `T x D`.
    /// Returns one mask per sequence and the cache for [`Self::backward`].
    pub(crate) fn forward_train(
        &self,
        inputs: &[Array2<T>],
    ) -> Result<(Vec<ComplexMask>, ForwardCache<T>)> {
        let batch = inputs.len();
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let steps = inputs[0].nrows();
        if inputs
            .iter()
            .any(|x| x.nrows() != steps || x.ncols() != self.input_dim())
        {
            return Err(Error::Shape("batch items must share shape T x 6F".into()));
        }
        let hid = self.hidden();
        let mut x = Array2::<T>::zeros((steps * batch, self.input_dim()));
        for (b, item) in inputs.iter().enumerate() {
            for t in 0..steps {
                x.row_mut(t * batch + b).assign(&item.row(t));
            }
        }
        let mut caches = Vec::with_capacity(self.num_layers());
        for layer in &self.layers {
            let mut gates = x.dot(&layer.w_ih.t());
            gates += &layer.bias;
            let mut c = Array2::<T>::zeros((steps * batch, hid));
            let mut h = Array2::<T>::zeros((steps * batch, hid));
            for t in 0..steps {
                let rows = t * batch..(t + 1) * batch;
                if t > 0 {
                    let prev = h.slice(s![(t - 1) * batch..t * batch, ..]);
                    let rec = prev.dot(&layer.w_hh.t());
                    let mut g = gates.slice_mut(s![rows.clone(), ..]);
                    g += &rec;
                }
                for b in 0..batch {
                    let r = t * batch + b;
                    for j in 0..hid {
                        let i = sigmoid(gates[[r, j]]);
                        let f = sigmoid(gates[[r, hid + j]]);
                        let gg = gates[[r, 2 * hid + j]].tanh();
                        let o = sigmoid(gates[[r, 3 * hid + j]]);
                        gates[[r, j]] = i;
                        gates[[r, hid + j]] = f;
                        gates[[r, 2 * hid + j]] = gg;
                        gates[[r, 3 * hid + j]] = o;
                        let cp = if t > 0 { c[[r - batch, j]] } else { T::zero() };
                        let cv = f * cp + i * gg;
                        c[[r, j]] = cv;
                        h[[r, j]] = o * cv.tanh();
                    }
                }
            }
            let next = h.clone();
            caches.push(LayerCache {
                input: std::mem::replace(&mut x, next),
                gates,
                c,
                h,
            });
        }
        let mut z = x.dot(&self.fc_w.t());
        z += &self.fc_b;
        let slope = T::of(MASK_SLOPE);
        let squashed = z.mapv(|v| (slope * v).tanh());
        let f = self.num_bins;
        let limit = MASK_LIMIT;
        let masks = (0..batch)
            .map(|b| {
                let mut m = ComplexMask::zeros(f, steps);
                for t in 0..steps {
                    let r = t * batch + b;
                    for k in 0..f {
                        m.real[[k, t]] = limit * squashed[[r, k]].f64();
                        m.imag[[k, t]] = limit * squashed[[r, f + k]].f64();
                    }
                }
                m
            })
            .collect();
        Ok((
            masks,
            ForwardCache {
                batch,
                steps,
                layers: caches,
                squashed,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` given `dL/dM` for every
    /// batch item.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache<T>,
        mask_grads: &[ComplexMask],
        grads: &mut Self,
    ) {
        let (batch, steps) = (cache.batch, cache.steps);
        let f = self.num_bins;
        let hid = self.hidden();
        let ks = T::of(MASK_LIMIT * MASK_SLOPE);
        let mut dz = Array2::<T>::zeros((steps * batch, 2 * f));
        for (b, g) in mask_grads.iter().enumerate() {
            for t in 0..steps {
                let r = t * batch + b;
                for k in 0..f {
                    let sr = cache.squashed[[r, k]];
                    let si = cache.squashed[[r, f + k]];
                    dz[[r, k]] = T::of(g.real[[k, t]]) * ks * (T::one() - sr * sr);
                    dz[[r, f + k]] = T::of(g.imag[[k, t]]) * ks * (T::one() - si * si);
                }
            }
        }
        let top = &cache.layers[self.num_layers() - 1].h;
        grads.fc_w += &dz.t().dot(top);
        grads.fc_b += &dz.sum_axis(Axis(0));
        let mut dh_in = dz.dot(&self.fc_w);

        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let mut da = Array2::<T>::zeros((steps * batch, 4 * hid));
            let mut dh_next = Array2::<T>::zeros((batch, hid));
            let mut dc_next = Array2::<T>::zeros((batch, hid));
            for t in (0..steps).rev() {
                for b in 0..batch {
                    let r = t * batch + b;
                    for j in 0..hid {
                        let i = lc.gates[[r, j]];
                        let fg = lc.gates[[r, hid + j]];
                        let g = lc.gates[[r, 2 * hid + j]];
                        let o = lc.gates[[r, 3 * hid + j]];
                        let c = lc.c[[r, j]];
                        let tc = c.tanh();
                        let dh = dh_in[[r, j]] + dh_next[[b, j]];
                        let dc = dc_next[[b, j]] + dh * o * (T::one() - tc * tc);
                        let cp = if t > 0 {
                            lc.c[[r - batch, j]]
                        } else {
                            T::zero()
                        };
                        da[[r, j]] = dc * g * i * (T::one() - i);
                        da[[r, hid + j]] = dc * cp * fg * (T::one() - fg);
                        da[[r, 2 * hid + j]] = dc * i * (T::one() - g * g);
                        da[[r, 3 * hid + j]] = dh * tc * o * (T::one() - o);
                        dc_next[[b, j]] = dc * fg;
                    }
                }
                let da_t = da.slice(s![t * batch..(t + 1) * batch, ..]);
                dh_next = da_t.dot(&layer.w_hh);
            }
            let gl = &mut grads.layers[l];
            gl.w_ih += &da.t().dot(&lc.input);
            if steps > 1 {
                let da_tail = da.slice(s![batch.., ..]);
                let h_prev = lc.h.slice(s![..(steps - 1) * batch, ..]);
                gl.w_hh += &da_tail.t().dot(&h_prev);
            }
            gl.bias += &da.sum_axis(Axis(0));
            if l > 0 {
                dh_in = da.dot(&layer.w_ih);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> MaskEstimator<f64> {
        MaskEstimator::new(
            5,
            &ModelConfig {
                hidden: 8,
                layers: 3,
                seed,
            },
        )
        .unwrap()
    }

    fn random_features(f: usize, t: usize, seed: u64) -> FeatureTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureTensor {
            values: Array2::from_shape_fn((6 * f, t), |_| rng.random_range(-1.0..1.0)),
            num_bins: f,
        }
    }

    #[test]
    fn zero_projection_gives_bias_mask() {
        let mut m = tiny(1);
        m.fc_w.fill(0.0);
        for (k, b) in m.fc_b.iter_mut().enumerate() {
            *b = k as f64 - 4.0;
        }
        let mask = m.estimate_mask(&random_features(5, 7, 2)).unwrap();
        for t in 0..7 {
            for k in 0..5 {
                assert_eq!(mask.real[[k, t]], bound_mask(k as f64 - 4.0));
                assert_eq!(mask.imag[[k, t]], bound_mask(k as f64 + 1.0));
            }
        }
    }

    #[test]
    fn streaming_equals_offline() {
        let m = tiny(3);
        let x = random_features(5, 20, 4);
        let a = m.estimate_mask(&x).unwrap();
        let b = m.estimate_mask_streaming(&x).unwrap();
        for (p, q) in a
            .real
            .iter()
            .chain(a.imag.iter())
            .zip(b.real.iter().chain(b.imag.iter()))
        {
            assert!((p - q).abs() < 1e-12);
        }
        let (masks, _) = m.forward_train(&[x.values.t().to_owned()]).unwrap();
        for (p, q) in a.real.iter().zip(masks[0].real.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn streaming_is_causal() {
        let m = tiny(5);
        let x = random_features(5, 12, 6);
        let mut y = x.clone();
        for r in 0..30 {
            y.values[[r, 8]] += 3.0;
        }
        let a = m.estimate_mask_streaming(&x).unwrap();
        let b = m.estimate_mask_streaming(&y).unwrap();
        for t in 0..8 {
            for k in 0..5 {
                assert_eq!(a.real[[k, t]], b.real[[k, t]]);
                assert_eq!(a.imag[[k, t]], b.imag[[k, t]]);
            }
        }
        assert_ne!(a.real[[0, 8]], b.real[[0, 8]]);
    }

    #[test]
    fn initial_mask_is_near_identity() {
        let m: MaskEstimator<f32> = MaskEstimator::new(
            257,
            &ModelConfig {
                hidden: 16,
                layers: 1,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(m.fc_w.dim(), (514, 16));
        assert!((bound_mask(bias_for_mask(1.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let m = tiny(1);
        assert!(matches!(
            m.estimate_mask(&random_features(4, 3, 1)),
            Err(Error::Shape(_))
        ));
        let mut st = m.new_state();
        assert!(m.step(&mut st, &[0.0; 3], &mut [0.0; 10]).is_err());
    }

    #[test]
    fn full_size_shapes() {
        let m: MaskEstimator<f32> = MaskEstimator::zeros(257, 512, 3);
        assert_eq!(m.input_dim(), 1542);
        assert_eq!(m.layers[0].w_ih.dim(), (2048, 1542));
        assert_eq!(m.layers[2].w_hh.dim(), (2048, 512));
        assert_eq!(m.fc_w.dim(), (514, 512));
    }
}
