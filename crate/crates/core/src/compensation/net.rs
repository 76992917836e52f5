//! Weight-learning subnetwork: a small 3D encoder-decoder with skip connections
//! over (element, view, time), cyclic in the view axis and zero-padded elsewhere.
//!
//! Every level halves all three axes with a 2x2x2 stride-2 convolution and
//! restores them with a 2x2x2 transposed convolution; the head is a 1x1x1
//! convolution to `K + 1` logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

const LEAK: f64 = 0.1;

/// Dense activation tensor `(channels, elements, views, time)`, time contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    pub dims: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    #[inline]
    pub fn row(&self, c: usize, r: usize, v: usize) -> &[T] {
        let [_, nr, nv, nt] = self.dims;
        let o = ((c * nr + r) * nv + v) * nt;
        &self.data[o..o + nt]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, r: usize, v: usize) -> &mut [T] {
        let [_, nr, nv, nt] = self.dims;
        let o = ((c * nr + r) * nv + v) * nt;
        &mut self.data[o..o + nt]
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Channel concatenation of tensors sharing spatial dims.
    pub fn concat(parts: &[&Tensor4<T>]) -> Self {
        let spatial = parts[0].dims[1..].to_vec();
        let c: usize = parts.iter().map(|p| p.dims[0]).sum();
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            debug_assert_eq!(p.dims[1..], spatial[..]);
            data.extend_from_slice(&p.data);
        }
        Self {
            dims: [c, spatial[0], spatial[1], spatial[2]],
            data,
        }
    }

    /// Splits off the first `c` channels.
    fn split(self, c: usize) -> (Self, Self) {
        let n = self.dims[1] * self.dims[2] * self.dims[3];
        let [total, r, v, t] = self.dims;
        let mut a = self.data;
        let b = a.split_off(c * n);
        (
            Self { dims: [c, r, v, t], data: a },
            Self {
                dims: [total - c, r, v, t],
                data: b,
            },
        )
    }
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    // eight independent partial sums let the compiler vectorize the reduction
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    let mut s = acc.iter().fold(T::zero(), |s, &v| s + v);
    for (&a, &b) in xr.iter().zip(yr) {
        s += a * b;
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisNetSpec {
    /// Channel width per level; the number of levels is `widths.len()`.
    pub widths: Vec<usize>,
    /// Convolution footprint along (element, view, time); odd.
    pub footprint: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl SynthesisNetSpec {
    pub fn new(widths: Vec<usize>, footprint: [usize; 3], channels: usize) -> Self {
        Self {
            widths,
            footprint,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("synthesis net needs at least one level of nonzero width"));
        }
        if self.footprint.iter().any(|&f| f % 2 == 0) {
            return Err(Error::config(format!("convolution footprint must be odd, got {:?}", self.footprint)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("synthesis net needs input and output channels"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Spatial sizes must be multiples of this.
    pub fn granularity(&self) -> usize {
        1 << (self.depth() - 1)
    }

    fn layers(&self) -> Vec<LayerShape> {
        let w = &self.widths;
        let f = self.footprint;
        let mut l = vec![LayerShape::conv(self.in_channels, w[0], f)];
        for i in 1..w.len() {
            l.push(LayerShape::conv(w[i - 1], w[i], [2, 2, 2]));
            l.push(LayerShape::conv(w[i], w[i], f));
        }
        for i in (1..w.len()).rev() {
            l.push(LayerShape::conv(w[i], w[i - 1], [2, 2, 2]));
            l.push(LayerShape::conv(2 * w[i - 1], w[i - 1], f));
        }
        l.push(LayerShape::conv(w[0], self.out_channels, [1, 1, 1]));
        l
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.n_weights() + l.cout).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerShape {
    cin: usize,
    cout: usize,
    k: [usize; 3],
}

impl LayerShape {
    fn conv(cin: usize, cout: usize, k: [usize; 3]) -> Self {
        Self { cin, cout, k }
    }

    fn taps(&self) -> usize {
        self.k.iter().product()
    }

    fn n_weights(&self) -> usize {
        self.cin * self.cout * self.taps()
    }
}

/// Parameters live in one flat vector so optimizers and checkpoints see a single
/// tensor; `offsets[i]` is where layer `i`'s weights start, biases follow.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisNet<T: Real> {
    pub spec: SynthesisNetSpec,
    pub params: Vec<T>,
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
}

struct LayerRef<'a, T> {
    shape: LayerShape,
    w: &'a [T],
    b: &'a [T],
}

impl<T> LayerRef<'_, T> {
    #[inline]
    fn widx(&self, co: usize, ci: usize, a: usize, b: usize, c: usize) -> usize {
        let [_, kv, kt] = self.shape.k;
        (((co * self.shape.cin + ci) * self.shape.k[0] + a) * kv + b) * kt + c
    }
}

/// Activations kept from the forward pass for backpropagation.
pub struct NetCache<T> {
    /// Post-activation outputs of every layer except the head, in layer order.
    acts: Vec<Tensor4<T>>,
    input: Tensor4<T>,
}

impl<T: Real> SynthesisNet<T> {
    pub fn from_params(spec: SynthesisNetSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut o = 0;
        for l in &layers {
            offsets.push(o);
            o += l.n_weights() + l.cout;
        }
        if params.len() != o {
            return Err(Error::Shape(format!("net expects {o} parameters, got {}", params.len())));
        }
        Ok(Self {
            spec,
            params,
            layers,
            offsets,
        })
    }

    /// He-normal weights scaled by fan-in, zero biases.
    pub fn init(spec: SynthesisNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_params();
        let mut net = Self::from_params(spec, vec![T::zero(); n])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..net.layers.len() {
            let l = net.layers[i];
            let fan_in = (l.cin * l.taps()) as f64;
            let gain = if i + 1 == net.layers.len() { 1.0 } else { 2.0 / (1.0 + LEAK * LEAK) };
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            let o = net.offsets[i];
            for p in &mut net.params[o..o + l.n_weights()] {
                *p = T::of(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    /// Bias slice of the head, one entry per output channel.
    pub fn head_bias_mut(&mut self) -> &mut [T] {
        let i = self.layers.len() - 1;
        let l = self.layers[i];
        let o = self.offsets[i] + l.n_weights();
        &mut self.params[o..o + l.cout]
    }

    fn layer(&self, i: usize) -> LayerRef<'_, T> {
        let l = self.layers[i];
        let o = self.offsets[i];
        LayerRef {
            shape: l,
            w: &self.params[o..o + l.n_weights()],
            b: &self.params[o + l.n_weights()..o + l.n_weights() + l.cout],
        }
    }

    fn grad_slices<'a>(&self, i: usize, grad: &'a mut [T]) -> (&'a mut [T], &'a mut [T]) {
        let l = self.layers[i];
        let o = self.offsets[i];
        let (w, rest) = grad[o..o + l.n_weights() + l.cout].split_at_mut(l.n_weights());
        (w, rest)
    }

    pub fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let g = self.spec.granularity();
        if x.dims[0] != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "net expects {} input channels, got {}",
                self.spec.in_channels, x.dims[0]
            )));
        }
        if x.dims[1..].iter().any(|&d| d % g != 0 || d == 0) {
            return Err(Error::Shape(format!(
                "net input dims {:?} must be positive multiples of {g}",
                &x.dims[1..]
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, NetCache<T>)> {
        self.check_input(x)?;
        let depth = self.spec.depth();
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut li = 0;
        let mut h = leaky(conv_same(x, &self.layer(li)));
        li += 1;
        let mut skips = vec![];
        for _ in 1..depth {
            skips.push(acts.len());
            acts.push(h);
            let d = leaky(conv_down(acts.last().unwrap(), &self.layer(li)));
            acts.push(d);
            h = leaky(conv_same(acts.last().unwrap(), &self.layer(li + 1)));
            li += 2;
        }
        for lvl in (1..depth).rev() {
            acts.push(h);
            let u = leaky(conv_up(acts.last().unwrap(), &self.layer(li)));
            let skip = &acts[skips[lvl - 1]];
            let cat = Tensor4::concat(&[&u, skip]);
            acts.push(u);
            acts.push(cat);
            h = leaky(conv_same(acts.last().unwrap(), &self.layer(li + 1)));
            li += 2;
        }
        acts.push(h);
        let out = conv_same(acts.last().unwrap(), &self.layer(li));
        Ok((
            out,
            NetCache {
                acts,
                input: x.clone(),
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: NetCache<T>, d_out: Tensor4<T>, grad: &mut [T]) -> Tensor4<T> {
        let depth = self.spec.depth();
        let mut acts = cache.acts;
        let n_layers = self.layers.len();
        // head
        // `h` is always the activation whose gradient `g` holds
        let mut li = n_layers - 1;
        let mut h = acts.pop().unwrap();
        let (gw, gb) = self.grad_slices(li, grad);
        let mut g = conv_same_backward(&h, &d_out, &self.layer(li), gw, gb);
        let mut d_skips: Vec<Option<Tensor4<T>>> = (0..depth).map(|_| None).collect();
        // decoder, shallowest level first
        for lvl in 1..depth {
            leaky_backward(&h, &mut g);
            let cat = acts.pop().unwrap();
            li -= 1;
            let (gw, gb) = self.grad_slices(li, grad);
            let d_cat = conv_same_backward(&cat, &g, &self.layer(li), gw, gb);
            let (mut d_u, d_skip) = d_cat.split(self.layers[li - 1].cout);
            d_skips[lvl - 1] = Some(d_skip);
            let u = acts.pop().unwrap();
            leaky_backward(&u, &mut d_u);
            h = acts.pop().unwrap();
            li -= 1;
            let (gw, gb) = self.grad_slices(li, grad);
            g = conv_up_backward(&h, &d_u, &self.layer(li), gw, gb);
        }
        // encoder, deepest level first
        for lvl in (1..depth).rev() {
            leaky_backward(&h, &mut g);
            let d = acts.pop().unwrap();
            li -= 1;
            let (gw, gb) = self.grad_slices(li, grad);
            let mut d_d = conv_same_backward(&d, &g, &self.layer(li), gw, gb);
            leaky_backward(&d, &mut d_d);
            h = acts.pop().unwrap();
            li -= 1;
            let (gw, gb) = self.grad_slices(li, grad);
            g = conv_down_backward(&h, &d_d, &self.layer(li), gw, gb);
            let ds = d_skips[lvl - 1].take().expect("every level has a skip");
            for (a, b) in g.data.iter_mut().zip(&ds.data) {
                *a += *b;
            }
        }
        debug_assert!(acts.is_empty() && li == 1);
        leaky_backward(&h, &mut g);
        let (gw, gb) = self.grad_slices(0, grad);
        conv_same_backward(&cache.input, &g, &self.layer(0), gw, gb)
    }
}

fn leaky<T: Real>(mut x: Tensor4<T>) -> Tensor4<T> {
    let s = T::of(LEAK);
    for v in &mut x.data {
        if *v < T::zero() {
            *v *= s;
        }
    }
    x
}

/// `y` is the activation output; its sign equals the input's sign.
fn leaky_backward<T: Real>(y: &Tensor4<T>, g: &mut Tensor4<T>) {
    let s = T::of(LEAK);
    for (gv, &yv) in g.data.iter_mut().zip(&y.data) {
        if yv < T::zero() {
            *gv *= s;
        }
    }
}

/// Time-axis overlap of `out[t] += w * in[t + shift]` for `t` in `0..n`.
#[inline]
fn time_range(n: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

fn conv_same<T: Real>(x: &Tensor4<T>, l: &LayerRef<'_, T>) -> Tensor4<T> {
    let [_, nr, nv, nt] = x.dims;
    let [kr, kv, kt] = l.shape.k;
    let (pr, pv, pt) = ((kr / 2) as isize, (kv / 2) as isize, (kt / 2) as isize);
    let mut out = Tensor4::zeros([l.shape.cout, nr, nv, nt]);
    for co in 0..l.shape.cout {
        for r in 0..nr {
            for v in 0..nv {
                let orow = out.row_mut(co, r, v);
                orow.fill(l.b[co]);
                for a in 0..kr {
                    let rr = r as isize + a as isize - pr;
                    if rr < 0 || rr >= nr as isize {
                        continue;
                    }
                    for b in 0..kv {
                        let vv = (v as isize + b as isize - pv).rem_euclid(nv as isize) as usize;
                        for ci in 0..l.shape.cin {
                            let irow = x.row(ci, rr as usize, vv);
                            for c in 0..kt {
                                let shift = c as isize - pt;
                                let (lo, hi) = time_range(nt, shift);
                                let w = l.w[l.widx(co, ci, a, b, c)];
                                let s = (lo as isize + shift) as usize;
                                axpy(w, &irow[s..s + hi - lo], &mut orow[lo..hi]);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_same_backward<T: Real>(
    x: &Tensor4<T>,
    d_out: &Tensor4<T>,
    l: &LayerRef<'_, T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Tensor4<T> {
    let [_, nr, nv, nt] = x.dims;
    let [kr, kv, kt] = l.shape.k;
    let (pr, pv, pt) = ((kr / 2) as isize, (kv / 2) as isize, (kt / 2) as isize);
    let mut d_in = Tensor4::zeros(x.dims);
    for co in 0..l.shape.cout {
        for r in 0..nr {
            for v in 0..nv {
                let grow = d_out.row(co, r, v);
                gb[co] += grow.iter().fold(T::zero(), |s, &g| s + g);
                for a in 0..kr {
                    let rr = r as isize + a as isize - pr;
                    if rr < 0 || rr >= nr as isize {
                        continue;
                    }
                    for b in 0..kv {
                        let vv = (v as isize + b as isize - pv).rem_euclid(nv as isize) as usize;
                        for ci in 0..l.shape.cin {
                            let wi0 = l.widx(co, ci, a, b, 0);
                            let irow = x.row(ci, rr as usize, vv);
                            for c in 0..kt {
                                let shift = c as isize - pt;
                                let (lo, hi) = time_range(nt, shift);
                                let s = (lo as isize + shift) as usize;
                                gw[wi0 + c] += dot(&grow[lo..hi], &irow[s..s + hi - lo]);
                            }
                            let drow = d_in.row_mut(ci, rr as usize, vv);
                            for c in 0..kt {
                                let shift = c as isize - pt;
                                let (lo, hi) = time_range(nt, shift);
                                let s = (lo as isize + shift) as usize;
                                axpy(l.w[wi0 + c], &grow[lo..hi], &mut drow[s..s + hi - lo]);
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

fn conv_down<T: Real>(x: &Tensor4<T>, l: &LayerRef<'_, T>) -> Tensor4<T> {
    let [_, nr, nv, nt] = x.dims;
    let (hr, hv, ht) = (nr / 2, nv / 2, nt / 2);
    let mut out = Tensor4::zeros([l.shape.cout, hr, hv, ht]);
    for co in 0..l.shape.cout {
        for r in 0..hr {
            for v in 0..hv {
                let orow = out.row_mut(co, r, v);
                orow.fill(l.b[co]);
                for ci in 0..l.shape.cin {
                    for a in 0..2 {
                        for b in 0..2 {
                            let irow = x.row(ci, 2 * r + a, 2 * v + b);
                            let (w0, w1) = (l.w[l.widx(co, ci, a, b, 0)], l.w[l.widx(co, ci, a, b, 1)]);
                            for (t, o) in orow.iter_mut().enumerate() {
                                *o += w0 * irow[2 * t] + w1 * irow[2 * t + 1];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_down_backward<T: Real>(
    x: &Tensor4<T>,
    d_out: &Tensor4<T>,
    l: &LayerRef<'_, T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Tensor4<T> {
    let [_, hr, hv, _] = d_out.dims;
    let mut d_in = Tensor4::zeros(x.dims);
    for co in 0..l.shape.cout {
        for r in 0..hr {
            for v in 0..hv {
                let grow = d_out.row(co, r, v);
                gb[co] += grow.iter().fold(T::zero(), |s, &g| s + g);
                for ci in 0..l.shape.cin {
                    for a in 0..2 {
                        for b in 0..2 {
                            let (i0, i1) = (l.widx(co, ci, a, b, 0), l.widx(co, ci, a, b, 1));
                            let irow = x.row(ci, 2 * r + a, 2 * v + b);
                            let (mut s0, mut s1) = (T::zero(), T::zero());
                            for (t, &g) in grow.iter().enumerate() {
                                s0 += g * irow[2 * t];
                                s1 += g * irow[2 * t + 1];
                            }
                            gw[i0] += s0;
                            gw[i1] += s1;
                            let (w0, w1) = (l.w[i0], l.w[i1]);
                            let drow = d_in.row_mut(ci, 2 * r + a, 2 * v + b);
                            for (t, &g) in grow.iter().enumerate() {
                                drow[2 * t] += w0 * g;
                                drow[2 * t + 1] += w1 * g;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// Transposed 2x2x2 stride-2 convolution; weights indexed `(co, ci, a, b, c)`.
fn conv_up<T: Real>(x: &Tensor4<T>, l: &LayerRef<'_, T>) -> Tensor4<T> {
    let [_, hr, hv, ht] = x.dims;
    let mut out = Tensor4::zeros([l.shape.cout, 2 * hr, 2 * hv, 2 * ht]);
    for co in 0..l.shape.cout {
        for r in 0..hr {
            for v in 0..hv {
                for a in 0..2 {
                    for b in 0..2 {
                        let orow = out.row_mut(co, 2 * r + a, 2 * v + b);
                        orow.fill(l.b[co]);
                        for ci in 0..l.shape.cin {
                            let irow = x.row(ci, r, v);
                            let (w0, w1) = (l.w[l.widx(co, ci, a, b, 0)], l.w[l.widx(co, ci, a, b, 1)]);
                            for (t, &xv) in irow.iter().enumerate() {
                                orow[2 * t] += w0 * xv;
                                orow[2 * t + 1] += w1 * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_up_backward<T: Real>(
    x: &Tensor4<T>,
    d_out: &Tensor4<T>,
    l: &LayerRef<'_, T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Tensor4<T> {
    let [_, hr, hv, _] = x.dims;
    let mut d_in = Tensor4::zeros(x.dims);
    for co in 0..l.shape.cout {
        for r in 0..hr {
            for v in 0..hv {
                for a in 0..2 {
                    for b in 0..2 {
                        let grow = d_out.row(co, 2 * r + a, 2 * v + b);
                        gb[co] += grow.iter().fold(T::zero(), |s, &g| s + g);
                        for ci in 0..l.shape.cin {
                            let (i0, i1) = (l.widx(co, ci, a, b, 0), l.widx(co, ci, a, b, 1));
                            let irow = x.row(ci, r, v);
                            let (mut s0, mut s1) = (T::zero(), T::zero());
                            for (t, &xv) in irow.iter().enumerate() {
                                s0 += grow[2 * t] * xv;
                                s1 += grow[2 * t + 1] * xv;
                            }
                            gw[i0] += s0;
                            gw[i1] += s1;
                            let (w0, w1) = (l.w[i0], l.w[i1]);
                            let drow = d_in.row_mut(ci, r, v);
                            for (t, d) in drow.iter_mut().enumerate() {
                                *d += w0 * grow[2 * t] + w1 * grow[2 * t + 1];
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}
