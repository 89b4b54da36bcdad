use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2-D convolution over a `[C, H, W]` activation with zero padding.
///
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Fully connected layer over a flat vector; weights are `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    /// Non-overlapping max pooling (stride equals window); ties go to the
    /// first element in row-major window order.
    MaxPool2d { window: usize },
    Flatten,
    Dense(Dense),
}

/// Per-layer state kept from the forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    None,
    Argmax(Vec<usize>),
}

impl Conv2d {
    pub fn zeroed(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    fn out_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel || wp < self.kernel {
            return None;
        }
        Some((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }

    /// Unrolls receptive fields into a `[C*k*k, Ho*Wo]` matrix.
    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let n = ho * wo;
        let mut cols = vec![0.0; self.in_channels * k * k * n];
        for c in 0..self.in_channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * n..][..n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[oy * wo..][..wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let n = ho * wo;
        let mut x = vec![0.0; self.in_channels * h * w];
        for c in 0..self.in_channels {
            let plane = &mut x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * n..][..n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        for (ox, &v) in row[oy * wo..][..wo].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

impl Dense {
    pub fn zeroed(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

impl Layer {
    /// Shape produced from `input`, or `None` when the two are incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => match *input {
                [ch, h, w] if ch == c.in_channels && c.kernel > 0 && c.stride > 0 => {
                    let (ho, wo) = c.out_dims(h, w)?;
                    Some(vec![c.out_channels, ho, wo])
                }
                _ => None,
            },
            Layer::Relu => Some(input.to_vec()),
            Layer::MaxPool2d { window } => match *input {
                [ch, h, w] if *window > 0 && h >= *window && w >= *window => {
                    Some(vec![ch, h / window, w / window])
                }
                _ => None,
            },
            Layer::Flatten => Some(vec![input.iter().product()]),
            Layer::Dense(d) => match *input {
                [n] if n == d.inputs => Some(vec![d.outputs]),
                _ => None,
            },
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weight.len() + c.bias.len(),
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            _ => 0,
        }
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache)> {
        let shape = self.output_shape(x.shape()).ok_or_else(|| {
            Error::Shape(format!("layer {self:?} cannot take input {:?}", x.shape()))
        })?;
        let xd = x.data();
        match self {
            Layer::Conv2d(c) => {
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let (ho, wo) = (shape[1], shape[2]);
                let cols = c.im2col(xd, h, w, ho, wo);
                let n = ho * wo;
                let kk = c.in_channels * c.kernel * c.kernel;
                let mut out = vec![0.0; c.out_channels * n];
                for (o, row) in out.chunks_mut(n).enumerate() {
                    row.fill(c.bias[o]);
                }
                gemm(c.out_channels, kk, n, &c.weight, false, &cols, false, &mut out, 1.0);
                Ok((Tensor::from_parts(shape, out), Cache::None))
            }
            Layer::Relu => {
                let out = xd.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                Ok((Tensor::from_parts(shape, out), Cache::None))
            }
            Layer::MaxPool2d { window } => {
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let (ch, ho, wo) = (shape[0], shape[1], shape[2]);
                let mut out = Vec::with_capacity(ch * ho * wo);
                let mut arg = Vec::with_capacity(ch * ho * wo);
                for c in 0..ch {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = c * h * w + oy * window * w + ox * window;
                            for dy in 0..*window {
                                for dx in 0..*window {
                                    let i = c * h * w + (oy * window + dy) * w + ox * window + dx;
                                    if xd[i] > xd[best] {
                                        best = i;
                                    }
                                }
                            }
                            out.push(xd[best]);
                            arg.push(best);
                        }
                    }
                }
                Ok((Tensor::from_parts(shape, out), Cache::Argmax(arg)))
            }
            Layer::Flatten => Ok((Tensor::from_parts(shape, xd.to_vec()), Cache::None)),
            Layer::Dense(d) => {
                let mut out = d.bias.clone();
                gemm(d.outputs, d.inputs, 1, &d.weight, false, xd, false, &mut out, 1.0);
                Ok((Tensor::from_parts(shape, out), Cache::None))
            }
        }
    }

    /// Propagates `grad_out` to the layer input. When `param_grads` is given,
    /// parameter gradients are accumulated into it in [`Layer::params`] order.
    /// With `want_input` false a convolution skips its input gradient and
    /// returns an empty vector.
    pub(crate) fn backward(
        &self,
        x: &Tensor,
        cache: &Cache,
        grad_out: &[f64],
        param_grads: Option<&mut [Vec<f64>]>,
        want_input: bool,
    ) -> Vec<f64> {
        let xd = x.data();
        match self {
            Layer::Conv2d(c) => {
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let (ho, wo) = c.out_dims(h, w).expect("validated in forward");
                let n = ho * wo;
                let kk = c.in_channels * c.kernel * c.kernel;
                if let Some(g) = param_grads {
                    let cols = c.im2col(xd, h, w, ho, wo);
                    gemm(c.out_channels, n, kk, grad_out, false, &cols, true, &mut g[0], 1.0);
                    for (o, row) in grad_out.chunks(n).enumerate() {
                        g[1][o] += row.iter().sum::<f64>();
                    }
                }
                if !want_input {
                    return Vec::new();
                }
                let mut dcols = vec![0.0; kk * n];
                gemm(kk, c.out_channels, n, &c.weight, true, grad_out, false, &mut dcols, 0.0);
                c.col2im(&dcols, h, w, ho, wo)
            }
            Layer::Relu => xd
                .iter()
                .zip(grad_out)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::MaxPool2d { .. } => {
                let Cache::Argmax(arg) = cache else {
                    unreachable!("max pool forward always records argmax")
                };
                let mut dx = vec![0.0; xd.len()];
                for (&i, &g) in arg.iter().zip(grad_out) {
                    dx[i] += g;
                }
                dx
            }
            Layer::Flatten => grad_out.to_vec(),
            Layer::Dense(d) => {
                if let Some(g) = param_grads {
                    gemm(d.outputs, 1, d.inputs, grad_out, false, xd, false, &mut g[0], 1.0);
                    g[1].iter_mut().zip(grad_out).for_each(|(b, &e)| *b += e);
                }
                let mut dx = vec![0.0; d.inputs];
                gemm(d.inputs, d.outputs, 1, &d.weight, true, grad_out, false, &mut dx, 0.0);
                dx
            }
        }
    }
}

/// `c = a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`, with
/// either operand optionally stored transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
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

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(c: &Conv2d, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (ho, wo) = c.out_dims(h, w).unwrap();
        let k = c.kernel;
        let mut out = vec![0.0; c.out_channels * ho * wo];
        for o in 0..c.out_channels {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = c.bias[o];
                    for i in 0..c.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += c.weight[((o * c.in_channels + i) * k + ky) * k + kx]
                                        * x[(i * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        for &(stride, pad) in &[(1, 1), (2, 0), (2, 1), (1, 0)] {
            let mut c = Conv2d::zeroed(2, 3, 3, stride, pad);
            c.weight.iter_mut().enumerate().for_each(|(i, v)| *v = ((i * 7 % 11) as f64 - 5.0) * 0.1);
            c.bias = vec![0.1, -0.2, 0.3];
            let x: Vec<f64> = (0..2 * 5 * 6).map(|i| ((i * 13 % 17) as f64) * 0.05 - 0.4).collect();
            let t = Tensor::new(vec![2, 5, 6], x.clone()).unwrap();
            let (out, _) = Layer::Conv2d(c.clone()).forward(&t).unwrap();
            let expect = naive_conv(&c, &x, 5, 6);
            for (a, b) in out.data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_pool_ties_pick_first_index() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let pool = Layer::MaxPool2d { window: 2 };
        let (out, cache) = pool.forward(&x).unwrap();
        assert_eq!(out.data(), &[1.0]);
        let dx = pool.backward(&x, &cache, &[5.0], None, true);
        assert_eq!(dx, vec![5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn max_pool_drops_ragged_edge() {
        let pool = Layer::MaxPool2d { window: 2 };
        assert_eq!(pool.output_shape(&[3, 5, 7]), Some(vec![3, 2, 3]));
        assert_eq!(pool.output_shape(&[3, 1, 7]), None);
    }

    #[test]
    fn relu_zeroes_negatives() {
        let x = Tensor::new(vec![4], vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        let (out, _) = Layer::Relu.forward(&x).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn incompatible_shapes_rejected() {
        let d = Layer::Dense(Dense::zeroed(4, 2));
        assert!(d.forward(&Tensor::zeros(vec![5])).is_err());
        let c = Layer::Conv2d(Conv2d::zeroed(3, 4, 3, 1, 1));
        assert!(c.forward(&Tensor::zeros(vec![2, 8, 8])).is_err());
    }
}
