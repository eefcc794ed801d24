//! Forward and backward passes of the scene CNN, generic over the float type.
//!
//! Layout: input is one channel of `bands x frames` (frequency rows, time
//! columns). Each block is a same-padded 3x3 convolution, ReLU and 2x2 max
//! pooling. The last block's output is averaged over time, leaving a
//! `channels x bands'` vector, followed by a ReLU hidden layer and the output
//! logits.
//!
//! Parameters are a flat list of tensors in the order
//! `[conv_w, conv_b] * blocks, hidden_w, hidden_b, out_w, out_b`, weights
//! stored row-major as `[out][in]` (`[c_out][c_in][3][3]` for convolutions).

use num_traits::Float;

pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + 'static {}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn cast<T: Real>(v: f64) -> T {
    T::from(v).expect("representable")
}

/// Layer sizes of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    pub bands: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub outputs: usize,
}

impl Shape {
    /// Height of the last block's output.
    pub fn pooled_bands(&self) -> usize {
        self.bands >> self.channels.len()
    }

    pub fn feature_len(&self) -> usize {
        self.channels.last().copied().unwrap_or(0) * self.pooled_bands()
    }

    /// Minimum number of input frames.
    pub fn min_frames(&self) -> usize {
        1 << self.channels.len()
    }

    /// `(length, fan_in)` of every parameter tensor, in storage order.
    pub fn tensors(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cin = 1;
        for &c in &self.channels {
            out.push((c * cin * 9, cin * 9));
            out.push((c, cin * 9));
            cin = c;
        }
        let f = self.feature_len();
        out.push((self.hidden * f, f));
        out.push((self.hidden, f));
        out.push((self.outputs * self.hidden, self.hidden));
        out.push((self.outputs, self.hidden));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.0).sum()
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn axpy<T: Real>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

fn sum<T: Real>(x: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let c = x.chunks_exact(8);
    let tail = c.remainder().iter().fold(T::zero(), |s, &v| s + v);
    for v in c {
        for i in 0..8 {
            acc[i] = acc[i] + v[i];
        }
    }
    acc.iter().fold(T::zero(), |s, &v| s + v) + tail
}

/// `cols[(ci * 9 + ky * 3 + kx) * h * w + y * w + x] = input[ci][y + ky - 1][x + kx - 1]`, zero outside.
fn im2col<T: Real>(input: &[T], cin: usize, h: usize, w: usize, cols: &mut Vec<T>) {
    let hw = h * w;
    cols.clear();
    cols.resize(cin * 9 * hw, T::zero());
    for ci in 0..cin {
        let src = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x0 = 1usize.saturating_sub(kx);
                let x1 = (w + 1 - kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = sy as usize * w + x0 + kx - 1;
                    row[y * w + x0..y * w + x1].copy_from_slice(&src[s..s + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], cin: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    out.fill(T::zero());
    for ci in 0..cin {
        let dst = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x0 = 1usize.saturating_sub(kx);
                let x1 = (w + 1 - kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let d = sy as usize * w + x0 + kx - 1;
                    for (o, &v) in dst[d..d + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[y * w + x0..y * w + x1])
                    {
                        *o = *o + v;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
struct BlockTrace<T> {
    h: usize,
    w: usize,
    cols: Vec<T>,
    /// Post-ReLU convolution output, `[c][h][w]`.
    act: Vec<T>,
    /// For every pooled cell, the index into `act` it was taken from.
    argmax: Vec<usize>,
}

/// Intermediate values of one forward pass, reused across samples.
#[derive(Debug, Default, Clone)]
pub struct Trace<T> {
    blocks: Vec<BlockTrace<T>>,
    pooled_w: usize,
    features: Vec<T>,
    hidden: Vec<T>,
    pub logits: Vec<T>,
}

/// Reusable gradient scratch buffers.
#[derive(Debug, Default, Clone)]
struct Scratch<T> {
    dact: Vec<T>,
    dcols: Vec<T>,
    dinput: Vec<T>,
    dpooled: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    shape: Shape,
    params: Vec<Vec<T>>,
    scratch: Scratch<T>,
}

impl<T: Real> Network<T> {
    /// Panics if the tensor sizes disagree with `shape`.
    pub fn new(shape: Shape, params: Vec<Vec<T>>) -> Self {
        let sizes = shape.tensors();
        assert_eq!(sizes.len(), params.len(), "tensor count");
        for ((len, _), p) in sizes.iter().zip(&params) {
            assert_eq!(*len, p.len(), "tensor length");
        }
        Self {
            shape,
            params,
            scratch: Scratch::default(),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params
            .iter()
            .map(|p| vec![T::zero(); p.len()])
            .collect()
    }

    /// Runs the network on a `bands x frames` input, filling `trace`.
    pub fn forward(&self, input: &[T], frames: usize, trace: &mut Trace<T>) {
        let s = &self.shape;
        assert_eq!(input.len(), s.bands * frames, "input size");
        assert!(
            frames >= s.min_frames() && s.pooled_bands() >= 1,
            "input too small"
        );
        trace
            .blocks
            .resize_with(s.channels.len(), BlockTrace::default);
        let (mut h, mut w, mut cin) = (s.bands, frames, 1);
        let mut current: Vec<T> = input.to_vec();
        for (bi, &cout) in s.channels.iter().enumerate() {
            let (wt, bias) = (&self.params[2 * bi], &self.params[2 * bi + 1]);
            let bt = &mut trace.blocks[bi];
            bt.h = h;
            bt.w = w;
            im2col(&current, cin, h, w, &mut bt.cols);
            let hw = h * w;
            let k = cin * 9;
            bt.act.clear();
            bt.act.resize(cout * hw, T::zero());
            for co in 0..cout {
                let row = &mut bt.act[co * hw..(co + 1) * hw];
                row.fill(bias[co]);
                for kk in 0..k {
                    axpy(row, wt[co * k + kk], &bt.cols[kk * hw..(kk + 1) * hw]);
                }
                for v in row.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            let (h2, w2) = (h / 2, w / 2);
            bt.argmax.clear();
            current.clear();
            for c in 0..cout {
                for y in 0..h2 {
                    for x in 0..w2 {
                        let base = c * hw + 2 * y * w + 2 * x;
                        let mut best = base;
                        for cand in [base + 1, base + w, base + w + 1] {
                            if bt.act[cand] > bt.act[best] {
                                best = cand;
                            }
                        }
                        bt.argmax.push(best);
                        current.push(bt.act[best]);
                    }
                }
            }
            h = h2;
            w = w2;
            cin = cout;
        }
        trace.pooled_w = w;
        trace.features.clear();
        let inv_w = T::one() / cast::<T>(w as f64);
        for row in current.chunks_exact(w) {
            trace.features.push(sum(row) * inv_w);
        }

        let nb = s.channels.len();
        let f = s.feature_len();
        let (w1, b1) = (&self.params[2 * nb], &self.params[2 * nb + 1]);
        let (w2, b2) = (&self.params[2 * nb + 2], &self.params[2 * nb + 3]);
        trace.hidden.clear();
        for j in 0..s.hidden {
            let z = b1[j] + dot(&w1[j * f..(j + 1) * f], &trace.features);
            trace.hidden.push(if z > T::zero() { z } else { T::zero() });
        }
        trace.logits.clear();
        for o in 0..s.outputs {
            trace
                .logits
                .push(b2[o] + dot(&w2[o * s.hidden..(o + 1) * s.hidden], &trace.hidden));
        }
    }

    /// Accumulates the gradient of the loss into `grads`, given `dlogits`.
    pub fn backward(&mut self, trace: &Trace<T>, dlogits: &[T], grads: &mut [Vec<T>]) {
        let s = &self.shape;
        let nb = s.channels.len();
        let f = s.feature_len();
        let hid = s.hidden;

        let w2 = &self.params[2 * nb + 2];
        let mut dh = vec![T::zero(); hid];
        for (o, &g) in dlogits.iter().enumerate() {
            axpy(
                &mut grads[2 * nb + 2][o * hid..(o + 1) * hid],
                g,
                &trace.hidden,
            );
            grads[2 * nb + 3][o] = grads[2 * nb + 3][o] + g;
            axpy(&mut dh, g, &w2[o * hid..(o + 1) * hid]);
        }
        let w1 = &self.params[2 * nb];
        let mut dfeat = vec![T::zero(); f];
        for j in 0..hid {
            if trace.hidden[j] <= T::zero() {
                continue;
            }
            let g = dh[j];
            axpy(&mut grads[2 * nb][j * f..(j + 1) * f], g, &trace.features);
            grads[2 * nb + 1][j] = grads[2 * nb + 1][j] + g;
            axpy(&mut dfeat, g, &w1[j * f..(j + 1) * f]);
        }

        let sc = &mut self.scratch;
        let inv_w = T::one() / cast::<T>(trace.pooled_w as f64);
        sc.dpooled.clear();
        for &g in &dfeat {
            let v = g * inv_w;
            sc.dpooled.extend(std::iter::repeat_n(v, trace.pooled_w));
        }

        for bi in (0..nb).rev() {
            let bt = &trace.blocks[bi];
            let cout = s.channels[bi];
            let cin = if bi == 0 { 1 } else { s.channels[bi - 1] };
            let hw = bt.h * bt.w;
            let k = cin * 9;
            sc.dact.clear();
            sc.dact.resize(cout * hw, T::zero());
            for (&idx, &g) in bt.argmax.iter().zip(&sc.dpooled) {
                if bt.act[idx] > T::zero() {
                    sc.dact[idx] = sc.dact[idx] + g;
                }
            }
            let wt = &self.params[2 * bi];
            if bi > 0 {
                sc.dcols.clear();
                sc.dcols.resize(k * hw, T::zero());
            }
            for co in 0..cout {
                let drow = &sc.dact[co * hw..(co + 1) * hw];
                grads[2 * bi + 1][co] = grads[2 * bi + 1][co] + sum(drow);
                let gw = &mut grads[2 * bi][co * k..(co + 1) * k];
                for kk in 0..k {
                    gw[kk] = gw[kk] + dot(drow, &bt.cols[kk * hw..(kk + 1) * hw]);
                }
                if bi > 0 {
                    for kk in 0..k {
                        axpy(&mut sc.dcols[kk * hw..(kk + 1) * hw], wt[co * k + kk], drow);
                    }
                }
            }
            if bi > 0 {
                sc.dinput.resize(cin * hw, T::zero());
                col2im(&sc.dcols, cin, bt.h, bt.w, &mut sc.dinput);
                // This block's input is the previous block's pooled output.
                std::mem::swap(&mut sc.dpooled, &mut sc.dinput);
            }
        }
    }

    /// Softmax cross-entropy loss of the forward pass in `trace`; writes `p - onehot` to `dlogits`.
    pub fn softmax_xent(trace: &Trace<T>, label: usize, dlogits: &mut Vec<T>) -> T {
        let m = trace
            .logits
            .iter()
            .fold(T::neg_infinity(), |a, &b| a.max(b));
        let exps: Vec<T> = trace.logits.iter().map(|&z| (z - m).exp()).collect();
        let total = exps.iter().fold(T::zero(), |a, &b| a + b);
        dlogits.clear();
        dlogits.extend(exps.iter().map(|&e| e / total));
        dlogits[label] = dlogits[label] - T::one();
        total.ln() + m - trace.logits[label]
    }

    /// Loss for one sample (no gradient).
    pub fn loss(&self, input: &[T], frames: usize, label: usize) -> T {
        let mut trace = Trace::default();
        self.forward(input, frames, &mut trace);
        let mut d = Vec::new();
        Self::softmax_xent(&trace, label, &mut d)
    }

    /// Loss for one sample, accumulating its gradient into `grads`.
    pub fn loss_and_grad(
        &mut self,
        input: &[T],
        frames: usize,
        label: usize,
        grads: &mut [Vec<T>],
    ) -> T {
        let mut trace = Trace::default();
        self.forward(input, frames, &mut trace);
        let mut d = Vec::new();
        let loss = Self::softmax_xent(&trace, label, &mut d);
        self.backward(&trace, &d, grads);
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> Network<f64> {
        let shape = Shape {
            bands: 8,
            channels: vec![2, 3],
            hidden: 5,
            outputs: 3,
        };
        let mut rng = crate::util::seeded_rng(4);
        let params = shape
            .tensors()
            .iter()
            .map(|&(len, fan)| {
                let lim = (6.0 / fan as f64).sqrt();
                (0..len).map(|_| rng.random_range(-lim..lim)).collect()
            })
            .collect();
        Network::new(shape, params)
    }

    #[test]
    fn im2col_round_trip_counts_taps() {
        let (cin, h, w) = (2, 3, 4);
        let ones = vec![1.0f64; cin * h * w];
        let mut cols = Vec::new();
        im2col(&ones, cin, h, w, &mut cols);
        let mut back = vec![0.0; cin * h * w];
        col2im(&cols, cin, h, w, &mut back);
        // Corner pixels are covered by 4 taps, edges by 6, interior by 9.
        assert_eq!(back[0], 4.0);
        assert_eq!(back[1], 6.0);
        assert_eq!(back[w + 1], 9.0);
    }

    #[test]
    fn parameter_count_matches_tensors() {
        let s = Shape {
            bands: 64,
            channels: vec![16, 32],
            hidden: 64,
            outputs: 10,
        };
        assert_eq!(s.feature_len(), 32 * 16);
        assert_eq!(
            s.parameter_count(),
            16 * 9 + 16 + 32 * 16 * 9 + 32 + 64 * 512 + 64 + 640 + 10
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut net = tiny();
        let mut rng = crate::util::seeded_rng(5);
        let frames = 9;
        let x: Vec<f64> = (0..8 * frames)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut grads = net.zero_grads();
        net.loss_and_grad(&x, frames, 1, &mut grads);
        let h = 1e-4;
        for t in 0..grads.len() {
            for i in 0..grads[t].len() {
                let orig = net.params()[t][i];
                net.params_mut()[t][i] = orig + h;
                let up = net.loss(&x, frames, 1);
                net.params_mut()[t][i] = orig - h;
                let down = net.loss(&x, frames, 1);
                net.params_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[t][i];
                let scale = numeric.abs().max(analytic.abs());
                if scale > 1e-7 {
                    assert!(
                        (numeric - analytic).abs() / scale < 1e-4,
                        "tensor {t}[{i}]: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }
}
