use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Shape;

/// Uniform fan-in initialization bound for layers feeding a ReLU.
fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn uniform_array<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::c(rng.random_range(-bound..bound)))
}

fn flat<T: Scalar>(a: impl IntoIterator<Item = T>) -> Vec<T> {
    a.into_iter().collect()
}

/// 2-D convolution, stride 1, zero "same" padding, odd square kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_hw: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `(kernel * kernel * in_channels, out_channels)`, rows ordered `(ky, kx, ci)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(rng: &mut R, in_hw: (usize, usize), in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernel required");
        let fan_in = kernel * kernel * in_channels;
        Self {
            in_hw,
            in_channels,
            out_channels,
            kernel,
            weight: uniform_array(rng, fan_in, out_channels, init_bound(fan_in)),
            bias: Array1::zeros(out_channels),
        }
    }

    fn im2col(&self, x: ArrayView2<T>) -> Array2<T> {
        let (h, w) = self.in_hw;
        let (k, c) = (self.kernel, self.in_channels);
        let pad = (k / 2) as isize;
        let n = x.nrows();
        let cols = k * k * c;
        let mut out = Array2::<T>::zeros((n * h * w, cols));
        for b in 0..n {
            let img = x.row(b);
            let img = img.as_slice().expect("standard layout batch");
            for y in 0..h {
                for xx in 0..w {
                    let mut row = out.row_mut((b * h + y) * w + xx);
                    let row = row.as_slice_mut().unwrap();
                    for ky in 0..k {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = xx as isize + kx as isize - pad;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = (sy as usize * w + sx as usize) * c;
                            let dst = (ky * k + kx) * c;
                            row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, dcol: &Array2<T>, n: usize) -> Array2<T> {
        let (h, w) = self.in_hw;
        let (k, c) = (self.kernel, self.in_channels);
        let pad = (k / 2) as isize;
        let mut dx = Array2::<T>::zeros((n, h * w * c));
        for b in 0..n {
            let mut img = dx.row_mut(b);
            let img = img.as_slice_mut().unwrap();
            for y in 0..h {
                for xx in 0..w {
                    let row = dcol.row((b * h + y) * w + xx);
                    let row = row.as_slice().unwrap();
                    for ky in 0..k {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = xx as isize + kx as isize - pad;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let dst = (sy as usize * w + sx as usize) * c;
                            let src = (ky * k + kx) * c;
                            for i in 0..c {
                                img[dst + i] += row[src + i];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn forward_with_col(&self, x: ArrayView2<T>) -> (Array2<T>, Array2<T>) {
        let n = x.nrows();
        let (h, w) = self.in_hw;
        let col = self.im2col(x);
        let mut y = col.dot(&self.weight);
        y += &self.bias;
        let y = y
            .into_shape_with_order((n, h * w * self.out_channels))
            .expect("contiguous conv output");
        (y, col)
    }

    fn backward(&self, col: &Array2<T>, dy: &Array2<T>) -> (Array2<T>, Vec<Vec<T>>) {
        let n = dy.nrows();
        let (h, w) = self.in_hw;
        let dy2 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n * h * w, self.out_channels))
            .expect("contiguous conv gradient");
        let dw = col.t().dot(&dy2);
        let db = dy2.sum_axis(Axis(0));
        let dcol = dy2.dot(&self.weight.t());
        let dx = self.col2im(&dcol, n);
        (dx, vec![flat(dw), flat(db)])
    }
}

/// Per-channel 3x3 (or any odd) convolution, stride 1, "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConv2d<T> {
    pub in_hw: (usize, usize),
    pub channels: usize,
    pub kernel: usize,
    /// `(kernel * kernel, channels)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DepthwiseConv2d<T> {
    pub fn new<R: Rng>(rng: &mut R, in_hw: (usize, usize), channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernel required");
        let fan_in = kernel * kernel;
        Self {
            in_hw,
            channels,
            kernel,
            weight: uniform_array(rng, fan_in, channels, init_bound(fan_in)),
            bias: Array1::zeros(channels),
        }
    }

    /// Calls `f(out_offset, in_offset, tap)` for every valid kernel tap, where
    /// offsets address the first channel of a pixel.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w) = self.in_hw;
        let k = self.kernel;
        let c = self.channels;
        let pad = (k / 2) as isize;
        for y in 0..h {
            for x in 0..w {
                let out = (y * w + x) * c;
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        f(out, (sy as usize * w + sx as usize) * c, ky * k + kx);
                    }
                }
            }
        }
    }

    fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let c = self.channels;
        let mut y = Array2::<T>::zeros(x.raw_dim());
        let bias = self.bias.as_slice().unwrap();
        let weight = self.weight.as_slice().unwrap();
        for (xr, mut yr) in x.rows().into_iter().zip(y.rows_mut()) {
            let xs = xr.as_slice().unwrap();
            let ys = yr.as_slice_mut().unwrap();
            for px in ys.chunks_exact_mut(c) {
                px.copy_from_slice(bias);
            }
            self.for_each_tap(|out, inp, tap| {
                let wt = &weight[tap * c..(tap + 1) * c];
                for i in 0..c {
                    ys[out + i] += xs[inp + i] * wt[i];
                }
            });
        }
        y
    }

    fn backward(&self, x: &Array2<T>, dy: &Array2<T>) -> (Array2<T>, Vec<Vec<T>>) {
        let c = self.channels;
        let mut dx = Array2::<T>::zeros(x.raw_dim());
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); c];
        let weight = self.weight.as_slice().unwrap();
        for ((xr, dyr), mut dxr) in x.rows().into_iter().zip(dy.rows()).zip(dx.rows_mut()) {
            let xs = xr.as_slice().unwrap();
            let dys = dyr.as_slice().unwrap();
            let dxs = dxr.as_slice_mut().unwrap();
            for px in dys.chunks_exact(c) {
                for i in 0..c {
                    db[i] += px[i];
                }
            }
            self.for_each_tap(|out, inp, tap| {
                let wt = &weight[tap * c..(tap + 1) * c];
                let dwt = &mut dw[tap * c..(tap + 1) * c];
                for i in 0..c {
                    let g = dys[out + i];
                    dwt[i] += g * xs[inp + i];
                    dxs[inp + i] += g * wt[i];
                }
            });
        }
        (dx, vec![dw, db])
    }
}

/// 2x2 max pooling with stride 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPool2d {
    pub in_hw: (usize, usize),
    pub channels: usize,
}

impl MaxPool2d {
    fn forward<T: Scalar>(&self, x: ArrayView2<T>, record: bool) -> (Array2<T>, Vec<u32>) {
        let (h, w) = self.in_hw;
        let c = self.channels;
        let (oh, ow) = (h / 2, w / 2);
        let n = x.nrows();
        let mut y = Array2::<T>::zeros((n, oh * ow * c));
        let mut arg = if record { vec![0u32; n * oh * ow * c] } else { Vec::new() };
        for b in 0..n {
            let xs = x.row(b);
            let xs = xs.as_slice().unwrap();
            let mut yr = y.row_mut(b);
            let ys = yr.as_slice_mut().unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = (2 * oy * w + 2 * ox) * c + ch;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if xs[idx] > xs[best] {
                                best = idx;
                            }
                        }
                        let o = (oy * ow + ox) * c + ch;
                        ys[o] = xs[best];
                        if record {
                            arg[b * oh * ow * c + o] = best as u32;
                        }
                    }
                }
            }
        }
        (y, arg)
    }

    fn backward<T: Scalar>(&self, arg: &[u32], dy: &Array2<T>) -> Array2<T> {
        let (h, w) = self.in_hw;
        let n = dy.nrows();
        let per = dy.ncols();
        let mut dx = Array2::<T>::zeros((n, h * w * self.channels));
        for b in 0..n {
            let dys = dy.row(b);
            let mut dxr = dx.row_mut(b);
            let dxs = dxr.as_slice_mut().unwrap();
            for (o, g) in dys.iter().enumerate() {
                let i = arg[b * per + o] as usize;
                dxs[i] += *g;
            }
        }
        dx
    }
}

/// Fully connected layer `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `(inputs, outputs)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Self::with_bound(rng, inputs, outputs, init_bound(inputs))
    }

    pub fn with_bound<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, bound: f64) -> Self {
        Self {
            weight: uniform_array(rng, inputs, outputs, bound),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Returns `(dx, [dW, db])`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>) -> (Array2<T>, Vec<Vec<T>>) {
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        let dx = dy.dot(&self.weight.t());
        (dx, vec![flat(dw), flat(db)])
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.weight.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
        ]
    }

    pub fn params(&self) -> Vec<&[T]> {
        vec![self.weight.as_slice().unwrap(), self.bias.as_slice().unwrap()]
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let mut y = x.to_owned();
    for mut row in y.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    DepthwiseConv(DepthwiseConv2d<T>),
    MaxPool(MaxPool2d),
    Relu,
    Flatten,
    Dense(Dense<T>),
    Softmax,
}

/// Values saved by a training-mode forward pass for the backward pass.
#[derive(Debug)]
pub enum Cache<T> {
    Cols(Array2<T>),
    Input(Array2<T>),
    Argmax(Vec<u32>),
    None,
}

impl<T: Scalar> Layer<T> {
    pub fn output_shape(&self, input: &Shape) -> Shape {
        match self {
            Layer::Conv(c) => Shape::hwc(c.in_hw.0, c.in_hw.1, c.out_channels),
            Layer::DepthwiseConv(c) => Shape::hwc(c.in_hw.0, c.in_hw.1, c.channels),
            Layer::MaxPool(p) => Shape::hwc(p.in_hw.0 / 2, p.in_hw.1 / 2, p.channels),
            Layer::Relu | Layer::Softmax => input.clone(),
            Layer::Flatten => Shape::flat(input.numel()),
            Layer::Dense(d) => Shape::flat(d.outputs()),
        }
    }

    /// Inference-mode forward over a batch.
    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        match self {
            Layer::Conv(c) => c.forward_with_col(x).0,
            Layer::DepthwiseConv(c) => c.forward(x),
            Layer::MaxPool(p) => p.forward(x, false).0,
            Layer::Relu => x.mapv(|v| v.max(T::zero())),
            Layer::Flatten => x.to_owned(),
            Layer::Dense(d) => d.forward(x),
            Layer::Softmax => softmax_rows(&x.to_owned()),
        }
    }

    pub fn forward_train(&self, x: Array2<T>) -> (Array2<T>, Cache<T>) {
        match self {
            Layer::Conv(c) => {
                let (y, col) = c.forward_with_col(x.view());
                (y, Cache::Cols(col))
            }
            Layer::DepthwiseConv(c) => (c.forward(x.view()), Cache::Input(x)),
            Layer::MaxPool(p) => {
                let (y, arg) = p.forward(x.view(), true);
                (y, Cache::Argmax(arg))
            }
            Layer::Relu => (x.mapv(|v| v.max(T::zero())), Cache::Input(x)),
            Layer::Flatten => (x, Cache::None),
            Layer::Dense(d) => (d.forward(x.view()), Cache::Input(x)),
            Layer::Softmax => (softmax_rows(&x), Cache::None),
        }
    }

    /// Gradient w.r.t. the layer input plus parameter gradients in
    /// [`Layer::params_mut`] order. Softmax is never differentiated here: the
    /// trainer folds it into the cross-entropy gradient.
    pub fn backward(&self, cache: &Cache<T>, dy: Array2<T>) -> (Array2<T>, Vec<Vec<T>>) {
        match (self, cache) {
            (Layer::Conv(c), Cache::Cols(col)) => c.backward(col, &dy),
            (Layer::DepthwiseConv(c), Cache::Input(x)) => c.backward(x, &dy),
            (Layer::MaxPool(p), Cache::Argmax(arg)) => (p.backward(arg, &dy), Vec::new()),
            (Layer::Relu, Cache::Input(x)) => {
                let mut dx = dy;
                ndarray::Zip::from(&mut dx).and(x).for_each(|g, v| {
                    if *v <= T::zero() {
                        *g = T::zero();
                    }
                });
                (dx, Vec::new())
            }
            (Layer::Flatten, Cache::None) => (dy, Vec::new()),
            (Layer::Dense(d), Cache::Input(x)) => d.backward(x, &dy),
            (layer, _) => panic!("backward through {layer:?} with mismatched cache"),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv(c) => vec![c.weight.as_slice_mut().unwrap(), c.bias.as_slice_mut().unwrap()],
            Layer::DepthwiseConv(c) => vec![c.weight.as_slice_mut().unwrap(), c.bias.as_slice_mut().unwrap()],
            Layer::Dense(d) => d.params_mut(),
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv(c) => vec![c.weight.as_slice().unwrap(), c.bias.as_slice().unwrap()],
            Layer::DepthwiseConv(c) => vec![c.weight.as_slice().unwrap(), c.bias.as_slice().unwrap()],
            Layer::Dense(d) => d.params(),
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
