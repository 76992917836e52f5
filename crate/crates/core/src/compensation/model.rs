//! Deconv-Net: a bank of Wiener kernels whose outputs, together with the raw
//! patch, are blended sample by sample with softmax weights from the synthesis net.

use std::path::Path;

use ndarray::{s, Array2, Array3, Array4, ArrayView, ArrayView3, Dimension};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use realfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::net::{SynthesisNet, SynthesisNetSpec, Tensor4};
use super::wiener::{gain_gradient, kernel_gradient, Deconvolver, SirKernel, WienerFilter};
use crate::dataset::substream_seed;
use crate::error::{Error, Result};
use crate::forward::PressureTensor;
use crate::geometry::{SystemConfig, Vec3};
use crate::io::TensorFile;
use crate::scalar::Real;
use crate::spectral::FrequencyGrid;

/// Initial logit of the raw-input channel relative to the deconvolved ones, so an
/// untrained model starts close to the identity mapping.
const INPUT_PRIOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub n_r_patch: usize,
    pub n_v_patch: usize,
    pub stride_r: usize,
    pub stride_v: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self::new(32, 32)
    }
}

impl PatchSpec {
    /// Half-overlapping strides.
    pub fn new(n_r_patch: usize, n_v_patch: usize) -> Self {
        Self {
            n_r_patch,
            n_v_patch,
            stride_r: (n_r_patch / 2).max(1),
            stride_v: (n_v_patch / 2).max(1),
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.n_r_patch == 0 || self.n_r_patch > config.n_elements {
            return Err(Error::config(format!(
                "patch spans {} elements but the array has {}",
                self.n_r_patch, config.n_elements
            )));
        }
        if self.n_v_patch == 0 || self.n_v_patch > config.n_views {
            return Err(Error::config(format!(
                "patch spans {} views but the array has {}",
                self.n_v_patch, config.n_views
            )));
        }
        if self.stride_r == 0 || self.stride_r > self.n_r_patch || self.stride_v == 0 || self.stride_v > self.n_v_patch {
            return Err(Error::config("patch strides must lie in 1..=patch size so every trace is covered"));
        }
        Ok(())
    }
}

/// Everything needed to build a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_kernels: usize,
    pub patch: PatchSpec,
    pub widths: Vec<usize>,
    pub footprint: [usize; 3],
    pub init_lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_kernels: 127,
            patch: PatchSpec::default(),
            widths: vec![16, 32, 64],
            footprint: [3, 3, 3],
            init_lambda: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvNetModel<T: Real> {
    pub kernels: Vec<SirKernel>,
    pub patch: PatchSpec,
    pub net: SynthesisNet<T>,
    /// Geometry the kernels' SIR refers to.
    pub system: SystemConfig,
}

impl<T: Real> DeconvNetModel<T> {
    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn config_hash(&self) -> String {
        self.system.config_hash()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::Empty("kernel bank".into()));
        }
        self.system.validate()?;
        self.patch.validate(&self.system)?;
        let ch = self.kernels.len() + 1;
        if self.net.spec.in_channels != ch || self.net.spec.out_channels != ch {
            return Err(Error::Shape(format!(
                "synthesis net maps {} -> {} channels, the bank needs {ch}",
                self.net.spec.in_channels, self.net.spec.out_channels
            )));
        }
        let g = self.net.spec.granularity();
        if !self.patch.n_r_patch.is_multiple_of(g) || !self.patch.n_v_patch.is_multiple_of(g) {
            return Err(Error::config(format!(
                "patch {}x{} must be a multiple of {g} for a {}-level net",
                self.patch.n_r_patch,
                self.patch.n_v_patch,
                self.net.spec.depth()
            )));
        }
        let kernels_finite = self
            .kernels
            .iter()
            .all(|k| k.local.to_array().iter().all(|v| v.is_finite()) && !k.log_lambda.is_nan() && k.local.norm() > 0.0);
        if !kernels_finite || self.net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn filters(&self, freqs: &FrequencyGrid) -> Result<Vec<WienerFilter>> {
        self.kernels.iter().map(|k| k.filter(&self.system, freqs)).collect()
    }

    pub fn cast<U: Real>(&self) -> DeconvNetModel<U> {
        DeconvNetModel {
            kernels: self.kernels.clone(),
            patch: self.patch,
            net: SynthesisNet::from_params(self.net.spec.clone(), self.net.params.iter().map(|p| U::of(p.to64())).collect())
                .expect("same spec, same length"),
            system: self.system.clone(),
        }
    }
}

/// Kernel positions on a Latin-hypercube stratification of the source region seen
/// from a transducer; net weights fan-in scaled.
pub fn init_model<T: Real>(cfg: &ModelConfig, system: &SystemConfig, seed: u64) -> Result<DeconvNetModel<T>> {
    let k = cfg.n_kernels;
    if k == 0 {
        return Err(Error::Empty("kernel bank".into()));
    }
    if !(cfg.init_lambda > 0.0 && cfg.init_lambda.is_finite()) {
        return Err(Error::config(format!("initial lambda must be positive, got {}", cfg.init_lambda)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 0, 0));
    let ranges = [(-60.0, 60.0), (-60.0, 60.0), (25.0, 145.0)];
    let mut coords = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    for (axis, &(lo, hi)) in ranges.iter().enumerate() {
        let mut strata: Vec<usize> = (0..k).collect();
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            coords[axis][i] = lo + (hi - lo) * (s as f64 + u) / k as f64;
        }
    }
    let kernels = (0..k)
        .map(|i| SirKernel::new(Vec3::new(coords[0][i], coords[1][i], coords[2][i]), cfg.init_lambda))
        .collect();
    let spec = SynthesisNetSpec::new(cfg.widths.clone(), cfg.footprint, k + 1);
    let mut net = SynthesisNet::init(spec, substream_seed(seed, 1, 0))?;
    net.head_bias_mut()[k] = T::of(INPUT_PRIOR);
    let model = DeconvNetModel {
        kernels,
        patch: cfg.patch,
        net,
        system: system.clone(),
    };
    model.validate()?;
    Ok(model)
}

/// Per-trace Wiener deconvolution with every kernel: `(K, N_r^P, N_v^P, N_t)`.
pub fn deconvolve_patch<T: Real>(patch: ArrayView3<'_, T>, bank: &[SirKernel], config: &SystemConfig) -> Result<Array4<T>> {
    if bank.is_empty() {
        return Err(Error::Empty("kernel bank".into()));
    }
    let (nr, nv, nt) = patch.dim();
    if nt != config.n_samples {
        return Err(Error::Shape(format!("patch traces have {nt} samples, system has {}", config.n_samples)));
    }
    let freqs = FrequencyGrid::for_config(config);
    let filters: Vec<WienerFilter> = bank.iter().map(|k| k.filter(config, &freqs)).collect::<Result<_>>()?;
    let mut dc = Deconvolver::<T>::new(&freqs);
    let mut out = Array4::<T>::zeros((bank.len(), nr, nv, nt));
    let mut trace = vec![T::zero(); nt];
    let mut buf = vec![T::zero(); nt];
    for r in 0..nr {
        for v in 0..nv {
            trace.iter_mut().zip(patch.slice(s![r, v, ..])).for_each(|(a, &b)| *a = b);
            let spec = dc.spectrum(&trace);
            for (k, f) in filters.iter().enumerate() {
                dc.apply_spectrum(&spec, f, &mut buf);
                out.slice_mut(s![k, r, v, ..]).iter_mut().zip(&buf).for_each(|(a, &b)| *a = b);
            }
        }
    }
    Ok(out)
}

fn softmax_into<T: Real>(logits: &[T], n_ch: usize, stride: usize, out: &mut [T]) {
    for i in 0..stride {
        let mut m = T::neg_infinity();
        for c in 0..n_ch {
            m = m.max(logits[c * stride + i]);
        }
        let mut z = T::zero();
        for c in 0..n_ch {
            let e = (logits[c * stride + i] - m).exp();
            out[c * stride + i] = e;
            z += e;
        }
        for c in 0..n_ch {
            out[c * stride + i] /= z;
        }
    }
}

/// Softmax across the leading (channel) axis.
pub fn softmax_channels<T: Real>(logits: &Array4<T>) -> Array4<T> {
    let logits = logits.as_standard_layout();
    let n_ch = logits.dim().0;
    let stride = logits.len() / n_ch.max(1);
    let mut out = Array4::<T>::zeros(logits.raw_dim());
    softmax_into(
        logits.as_slice().expect("standard layout"),
        n_ch,
        stride,
        out.as_slice_mut().expect("fresh array"),
    );
    out
}

/// `sum_c weights[c] * joint[c]`; weights must be a partition of unity per sample.
pub fn synthesize<T: Real>(joint: &Array4<T>, weights: &Array4<T>) -> Result<Array3<T>> {
    if joint.dim() != weights.dim() {
        return Err(Error::Shape(format!("joint {:?} vs weights {:?}", joint.dim(), weights.dim())));
    }
    let (_, nr, nv, nt) = joint.dim();
    let mut sums = Array3::<f64>::zeros((nr, nv, nt));
    for w in weights.outer_iter() {
        if w.iter().any(|&x| x < T::of(-1e-5)) {
            return Err(Error::config("synthesis weights must be nonnegative"));
        }
        sums.zip_mut_with(&w, |s, &x| *s += x.to64());
    }
    if let Some(bad) = sums.iter().find(|&&s| (s - 1.0).abs() > 1e-5) {
        return Err(Error::config(format!("synthesis weights sum to {bad}, expected 1")));
    }
    let mut out = Array3::<T>::zeros((nr, nv, nt));
    for (j, w) in joint.outer_iter().zip(weights.outer_iter()) {
        ndarray::Zip::from(&mut out).and(&j).and(&w).for_each(|o, &a, &b| *o += a * b);
    }
    Ok(out)
}

/// Mean absolute difference.
pub fn mae_loss<T: Real, D: Dimension>(pred: ArrayView<'_, T, D>, target: ArrayView<'_, T, D>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("pred {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("loss inputs".into()));
    }
    let sum: f64 = pred.iter().zip(target.iter()).map(|(a, b)| (a.to64() - b.to64()).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradients for every trainable parameter, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrad<T> {
    pub local: Vec<[f64; 3]>,
    pub log_lambda: Vec<f64>,
    pub net: Vec<T>,
}

impl<T: Real> ModelGrad<T> {
    pub fn zeros(model: &DeconvNetModel<T>) -> Self {
        Self {
            local: vec![[0.0; 3]; model.n_kernels()],
            log_lambda: vec![0.0; model.n_kernels()],
            net: vec![T::zero(); model.net.params.len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.local.iter_mut().flatten().for_each(|g| *g *= s);
        self.log_lambda.iter_mut().for_each(|g| *g *= s);
        self.net.iter_mut().for_each(|g| *g *= T::of(s));
    }
}

struct Pass<T: Real> {
    freqs: FrequencyGrid,
    filters: Vec<WienerFilter>,
    spectra: Vec<Vec<Complex<T>>>,
    joint: Tensor4<T>,
    weights: Tensor4<T>,
    scale: T,
    output: Array3<T>,
    cache: Option<super::net::NetCache<T>>,
    dc: Deconvolver<T>,
}

fn check_patch<T: Real>(model: &DeconvNetModel<T>, patch: &ArrayView3<'_, T>) -> Result<()> {
    let want = (model.patch.n_r_patch, model.patch.n_v_patch, model.system.n_samples);
    if patch.dim() != want {
        return Err(Error::Shape(format!("patch {:?} does not match the model's {want:?}", patch.dim())));
    }
    Ok(())
}

fn run<T: Real>(model: &DeconvNetModel<T>, patch: ArrayView3<'_, T>, keep: bool) -> Result<Pass<T>> {
    check_patch(model, &patch)?;
    let (nr, nv, nt) = patch.dim();
    let k = model.n_kernels();
    let freqs = FrequencyGrid::for_config(&model.system);
    let filters = model.filters(&freqs)?;
    let mut dc = Deconvolver::<T>::new(&freqs);
    let mut joint = Tensor4::<T>::zeros([k + 1, nr, nv, nt]);
    let mut spectra = Vec::with_capacity(if keep { nr * nv } else { 0 });
    let mut trace = vec![T::zero(); nt];
    let mut sq = 0.0;
    for r in 0..nr {
        for v in 0..nv {
            trace.iter_mut().zip(patch.slice(s![r, v, ..])).for_each(|(a, &b)| *a = b);
            sq += trace.iter().map(|x| x.to64() * x.to64()).sum::<f64>();
            let spec = dc.spectrum(&trace);
            for (kk, f) in filters.iter().enumerate() {
                dc.apply_spectrum(&spec, f, joint.row_mut(kk, r, v));
            }
            joint.row_mut(k, r, v).copy_from_slice(&trace);
            if keep {
                spectra.push(spec);
            }
        }
    }
    let rms = (sq / patch.len() as f64).sqrt();
    let scale = T::of(if rms > 0.0 { rms } else { 1.0 });

    let g = model.net.spec.granularity();
    let nt_pad = nt.div_ceil(g) * g;
    let mut net_in = Tensor4::<T>::zeros([k + 1, nr, nv, nt_pad]);
    let inv = T::one() / scale;
    for c in 0..=k {
        for r in 0..nr {
            for v in 0..nv {
                let src = joint.row(c, r, v);
                net_in.row_mut(c, r, v)[..nt].iter_mut().zip(src).for_each(|(a, &b)| *a = b * inv);
            }
        }
    }
    let (logits, cache) = model.net.forward_cached(&net_in)?;
    let mut cropped = Tensor4::<T>::zeros(joint.dims);
    for c in 0..=k {
        for r in 0..nr {
            for v in 0..nv {
                cropped.row_mut(c, r, v).copy_from_slice(&logits.row(c, r, v)[..nt]);
            }
        }
    }
    let mut weights = Tensor4::<T>::zeros(joint.dims);
    let stride = nr * nv * nt;
    softmax_into(&cropped.data, k + 1, stride, &mut weights.data);
    let mut output = Array3::<T>::zeros((nr, nv, nt));
    {
        let o = output.as_slice_mut().expect("fresh array");
        for c in 0..=k {
            for ((oi, &w), &x) in o.iter_mut().zip(weights.channel(c)).zip(joint.channel(c)) {
                *oi += w * x;
            }
        }
    }
    Ok(Pass {
        freqs,
        filters,
        spectra,
        joint,
        weights,
        scale,
        output,
        cache: keep.then_some(cache),
        dc,
    })
}

/// Compensates one patch.
pub fn forward_patch<T: Real>(model: &DeconvNetModel<T>, patch: ArrayView3<'_, T>) -> Result<Array3<T>> {
    Ok(run(model, patch, false)?.output)
}

/// Runs one patch forward, lets `upstream` turn the output into `(loss, dL/doutput)`,
/// and accumulates parameter gradients into `grad`. Returns the loss.
pub fn patch_backward<T: Real>(
    model: &DeconvNetModel<T>,
    patch: ArrayView3<'_, T>,
    upstream: impl FnOnce(&Array3<T>) -> Result<(f64, Array3<T>)>,
    grad: &mut ModelGrad<T>,
) -> Result<f64> {
    let mut pass = run(model, patch, true)?;
    let (loss, d_out) = upstream(&pass.output)?;
    if d_out.dim() != pass.output.dim() {
        return Err(Error::Shape("upstream gradient does not match the output".into()));
    }
    let d_out = d_out.as_standard_layout();
    let d_out = d_out.as_slice().expect("standard layout");
    let [n_ch, nr, nv, nt] = pass.joint.dims;
    let k = n_ch - 1;
    let stride = nr * nv * nt;

    // softmax-weighted sum: d joint_c = w_c d_out, d logit_c = w_c (d w_c - sum_j w_j d w_j)
    let mut d_joint = Tensor4::<T>::zeros(pass.joint.dims);
    let mut d_w = Tensor4::<T>::zeros(pass.joint.dims);
    for c in 0..n_ch {
        let (w, x) = (pass.weights.channel(c), pass.joint.channel(c));
        let dj = d_joint.channel_mut(c);
        for i in 0..stride {
            dj[i] = w[i] * d_out[i];
        }
        let dw = d_w.channel_mut(c);
        for i in 0..stride {
            dw[i] = x[i] * d_out[i];
        }
    }
    let mut mean = vec![T::zero(); stride];
    for c in 0..n_ch {
        let (w, dw) = (pass.weights.channel(c), d_w.channel(c));
        for i in 0..stride {
            mean[i] += w[i] * dw[i];
        }
    }
    let g = model.net.spec.granularity();
    let nt_pad = nt.div_ceil(g) * g;
    let mut d_logits = Tensor4::<T>::zeros([n_ch, nr, nv, nt_pad]);
    for c in 0..n_ch {
        for r in 0..nr {
            for v in 0..nv {
                let off = (r * nv + v) * nt;
                let w = &pass.weights.channel(c)[off..off + nt];
                let dw = &d_w.channel(c)[off..off + nt];
                let m = &mean[off..off + nt];
                let dst = &mut d_logits.row_mut(c, r, v)[..nt];
                for t in 0..nt {
                    dst[t] = w[t] * (dw[t] - m[t]);
                }
            }
        }
    }
    drop(d_w);

    let cache = pass.cache.take().expect("kept for backward");
    let d_net_in = model.net.backward(cache, d_logits, &mut grad.net);
    let inv = T::one() / pass.scale;
    for c in 0..k {
        for r in 0..nr {
            for v in 0..nv {
                let src = &d_net_in.row(c, r, v)[..nt];
                d_joint.row_mut(c, r, v).iter_mut().zip(src).for_each(|(a, &b)| *a += b * inv);
            }
        }
    }

    let mut d_gain = vec![vec![0.0; pass.freqs.n_bins]; k];
    for r in 0..nr {
        for v in 0..nv {
            let x_spec = &pass.spectra[r * nv + v];
            for (c, acc) in d_gain.iter_mut().enumerate() {
                let gy = pass.dc.grad_spectrum(d_joint.row(c, r, v));
                gain_gradient(x_spec, &gy, &pass.freqs, acc);
            }
        }
    }
    for (c, dg) in d_gain.iter().enumerate() {
        let (dl, dlam) = kernel_gradient(&pass.filters[c], dg);
        for j in 0..3 {
            grad.local[c][j] += dl[j];
        }
        grad.log_lambda[c] += dlam;
    }
    Ok(loss)
}

/// MAE and its subgradient `sign(pred - target) / n`.
pub fn mae_with_grad<T: Real>(pred: &Array3<T>, target: ArrayView3<'_, T>) -> Result<(f64, Array3<T>)> {
    let loss = mae_loss(pred.view(), target)?;
    let inv = T::of(1.0 / pred.len() as f64);
    let mut d = Array3::<T>::zeros(pred.raw_dim());
    ndarray::Zip::from(&mut d).and(pred).and(&target).for_each(|g, &p, &t| {
        *g = if p > t {
            inv
        } else if p < t {
            -inv
        } else {
            T::zero()
        }
    });
    Ok((loss, d))
}

/// Copies the patch with top-left corner `(r0, v0)`, wrapping in views.
pub fn extract_patch<T: Real>(p: &Array3<T>, spec: &PatchSpec, r0: usize, v0: usize) -> Result<Array3<T>> {
    let (n_r, n_v, n_t) = p.dim();
    if r0 + spec.n_r_patch > n_r || spec.n_v_patch > n_v {
        return Err(Error::Shape(format!(
            "patch {}x{} at element {r0} does not fit a {n_r}x{n_v} array",
            spec.n_r_patch, spec.n_v_patch
        )));
    }
    let mut out = Array3::<T>::zeros((spec.n_r_patch, spec.n_v_patch, n_t));
    for j in 0..spec.n_v_patch {
        let v = (v0 + j) % n_v;
        out.slice_mut(s![.., j, ..]).assign(&p.slice(s![r0..r0 + spec.n_r_patch, v, ..]));
    }
    Ok(out)
}

/// Patch origins along one axis; the element axis clamps the last patch to the
/// edge, the cyclic view axis wraps.
fn tile_starts(n: usize, patch: usize, stride: usize, cyclic: bool) -> Vec<usize> {
    if cyclic {
        return (0..n.div_ceil(stride)).map(|i| i * stride).collect();
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + patch < n).collect();
    starts.push(n - patch);
    starts.dedup();
    starts
}

/// Sliding-window compensation of a full tensor; overlapping patches are averaged.
pub fn infer_full<T: Real>(model: &DeconvNetModel<T>, full: &PressureTensor<T>) -> Result<PressureTensor<T>> {
    model.validate()?;
    full.check_matches(&model.system)?;
    let spec = model.patch;
    let (n_r, n_v, n_t) = full.data.dim();
    let origins: Vec<(usize, usize)> = tile_starts(n_r, spec.n_r_patch, spec.stride_r, false)
        .into_iter()
        .flat_map(|r| tile_starts(n_v, spec.n_v_patch, spec.stride_v, true).into_iter().map(move |v| (r, v)))
        .collect();
    let mut acc = Array3::<f64>::zeros((n_r, n_v, n_t));
    let mut count = Array2::<u32>::zeros((n_r, n_v));
    // bounded batches keep memory at a few patches per worker
    let batch = rayon::current_num_threads().max(1) * 2;
    for chunk in origins.chunks(batch) {
        let outs: Vec<Array3<T>> = chunk
            .par_iter()
            .map(|&(r0, v0)| forward_patch(model, extract_patch(&full.data, &spec, r0, v0)?.view()))
            .collect::<Result<_>>()?;
        for (&(r0, v0), o) in chunk.iter().zip(&outs) {
            for j in 0..spec.n_v_patch {
                let v = (v0 + j) % n_v;
                for i in 0..spec.n_r_patch {
                    count[[r0 + i, v]] += 1;
                    acc.slice_mut(s![r0 + i, v, ..])
                        .zip_mut_with(&o.slice(s![i, j, ..]), |a, &b| *a += b.to64());
                }
            }
        }
    }
    let mut out = PressureTensor::<T>::zeros(&model.system);
    for ((r, v), &c) in count.indexed_iter() {
        debug_assert!(c > 0, "tiling leaves trace ({r}, {v}) uncovered");
        let inv = 1.0 / c as f64;
        out.data
            .slice_mut(s![r, v, ..])
            .iter_mut()
            .zip(acc.slice(s![r, v, ..]))
            .for_each(|(o, &a)| *o = T::of(a * inv));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    n_kernels: usize,
    patch: PatchSpec,
    net: SynthesisNetSpec,
    system: SystemConfig,
    config_hash: String,
    tensors: Vec<NamedTensor>,
}

const CHECKPOINT_KIND: &str = "deconv-net";

/// Writes the model as one f32 payload holding named tensors described by the header.
pub fn save_model<T: Real>(path: &Path, model: &DeconvNetModel<T>) -> Result<()> {
    model.validate()?;
    let k = model.n_kernels();
    let mut data: Vec<f32> = Vec::with_capacity(4 * k + model.net.params.len());
    data.extend(model.kernels.iter().flat_map(|kn| kn.local.to_array()).map(|v| v as f32));
    data.extend(model.kernels.iter().map(|kn| kn.log_lambda as f32));
    data.extend(model.net.params.iter().map(|p| p.to64() as f32));
    let header = CheckpointHeader {
        kind: CHECKPOINT_KIND.into(),
        n_kernels: k,
        patch: model.patch,
        net: model.net.spec.clone(),
        system: model.system.clone(),
        config_hash: model.config_hash(),
        tensors: vec![
            NamedTensor {
                name: "kernels.local".into(),
                shape: vec![k, 3],
                offset: 0,
            },
            NamedTensor {
                name: "kernels.log_lambda".into(),
                shape: vec![k],
                offset: 3 * k,
            },
            NamedTensor {
                name: "net.params".into(),
                shape: vec![model.net.params.len()],
                offset: 4 * k,
            },
        ],
    };
    let meta = serde_json::to_string(&header).expect("plain header serializes");
    TensorFile::new(vec![data.len()], data, Some(meta))?.write(path)
}

pub fn load_model<T: Real>(path: &Path) -> Result<DeconvNetModel<T>> {
    let tf = TensorFile::read(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let h: CheckpointHeader =
        serde_json::from_value(tf.metadata_json(path)?).map_err(|e| bad(format!("not a model checkpoint: {e}")))?;
    if h.kind != CHECKPOINT_KIND {
        return Err(bad(format!("expected a {CHECKPOINT_KIND} checkpoint, found {}", h.kind)));
    }
    if h.config_hash != h.system.config_hash() {
        return Err(bad("config hash does not match the stored system".into()));
    }
    let tensor = |name: &str| -> Result<&[f32]> {
        let t = h
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor `{name}`")))?;
        let n: usize = t.shape.iter().product();
        tf.data
            .get(t.offset..t.offset + n)
            .ok_or_else(|| bad(format!("tensor `{name}` runs past the payload")))
    };
    let k = h.n_kernels;
    let local = tensor("kernels.local")?;
    let log_lambda = tensor("kernels.log_lambda")?;
    if local.len() != 3 * k || log_lambda.len() != k {
        return Err(bad("kernel tensors disagree with the kernel count".into()));
    }
    let kernels = (0..k)
        .map(|i| SirKernel {
            local: Vec3::new(local[3 * i] as f64, local[3 * i + 1] as f64, local[3 * i + 2] as f64),
            log_lambda: log_lambda[i] as f64,
        })
        .collect();
    let params = tensor("net.params")?.iter().map(|&p| T::of(p as f64)).collect();
    let model = DeconvNetModel {
        kernels,
        patch: h.patch,
        net: SynthesisNet::from_params(h.net, params)?,
        system: h.system,
    };
    model.validate()?;
    Ok(model)
}
