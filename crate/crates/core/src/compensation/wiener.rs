//! Differentiable Wiener deconvolution with a parameterized rectangular SIR.
//!
//! Each kernel filters a trace by `H(f) / (H(f)^2 + lambda)` where `H` is the
//! far-field SIR (real-valued, so `H* = H`) at the kernel's local source position.

use realfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::sir_scales;
use crate::geometry::{SystemConfig, Vec3};
use crate::scalar::Real;
use crate::spectral::{FrequencyGrid, RealFft};

/// One learnable SIR kernel: a local source position and a log-regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirKernel {
    pub local: Vec3,
    pub log_lambda: f64,
}

impl SirKernel {
    pub fn new(local: Vec3, lambda: f64) -> Self {
        Self {
            local,
            log_lambda: lambda.ln(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn filter(&self, config: &SystemConfig, freqs: &FrequencyGrid) -> Result<WienerFilter> {
        WienerFilter::new(self.local, self.lambda(), config, freqs)
    }
}

/// Partial derivatives of the filter response at one frequency.
#[derive(Clone, Copy, Debug, Default)]
struct FilterPartials {
    d_local: [f64; 3],
    d_log_lambda: f64,
}

/// Sampled Wiener response `G(f_l)` plus its parameter derivatives.
#[derive(Clone, Debug)]
pub struct WienerFilter {
    pub gain: Vec<f64>,
    partials: Vec<FilterPartials>,
}

fn sinc_and_slope(u: f64) -> (f64, f64) {
    if u.abs() < 1e-4 {
        // series: sinc = 1 - u^2/6 + u^4/120, d/du = -u/3 + u^3/30
        let u2 = u * u;
        (1.0 - u2 / 6.0 + u2 * u2 / 120.0, -u / 3.0 + u * u2 / 30.0)
    } else {
        let (s, c) = u.sin_cos();
        (s / u, (c - s / u) / u)
    }
}

impl WienerFilter {
    pub fn new(local: Vec3, lambda: f64, config: &SystemConfig, freqs: &FrequencyGrid) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::config(format!("Wiener regularizer must be nonnegative, got {lambda}")));
        }
        let (ax, by) = sir_scales(local, config)?;
        let dist = local.norm();
        // ax = a pi x / (c0 |r|): d ax / d r_j = ax (delta_jx / x - r_j / |r|^2), written without dividing by x.
        let k_a = config.elem_a * std::f64::consts::PI / (config.sos * dist);
        let k_b = config.elem_b * std::f64::consts::PI / (config.sos * dist);
        let r = local.to_array();
        let mut d_ax = [0.0; 3];
        let mut d_by = [0.0; 3];
        for j in 0..3 {
            d_ax[j] = -ax * r[j] / (dist * dist);
            d_by[j] = -by * r[j] / (dist * dist);
        }
        d_ax[0] += k_a;
        d_by[1] += k_b;

        let mut gain = Vec::with_capacity(freqs.n_bins);
        let mut partials = Vec::with_capacity(freqs.n_bins);
        for l in 0..freqs.n_bins {
            let f = freqs.freq(l);
            let (s1, ds1) = sinc_and_slope(ax * f);
            let (s2, ds2) = sinc_and_slope(by * f);
            let h = s1 * s2;
            let denom = h * h + lambda;
            if denom == 0.0 {
                // H has a null and lambda = 0: pass nothing at this frequency
                gain.push(0.0);
                partials.push(FilterPartials::default());
                continue;
            }
            let g = h / denom;
            let dg_dh = (lambda - h * h) / (denom * denom);
            let dg_dlambda = -h / (denom * denom);
            let mut d_local = [0.0; 3];
            for j in 0..3 {
                let dh = ds1 * f * d_ax[j] * s2 + s1 * ds2 * f * d_by[j];
                d_local[j] = dg_dh * dh;
            }
            gain.push(g);
            partials.push(FilterPartials {
                d_local,
                d_log_lambda: dg_dlambda * lambda,
            });
        }
        Ok(Self { gain, partials })
    }
}

/// Scratch for filtering traces with one transform length.
pub struct Deconvolver<T: Real> {
    fft: RealFft<T>,
    spec: Vec<Complex<T>>,
    work: Vec<Complex<T>>,
}

impl<T: Real> Clone for Deconvolver<T> {
    fn clone(&self) -> Self {
        Self {
            fft: self.fft.clone(),
            spec: self.spec.clone(),
            work: self.work.clone(),
        }
    }
}

impl<T: Real> Deconvolver<T> {
    pub fn new(freqs: &FrequencyGrid) -> Self {
        let fft = RealFft::new(freqs.n_fft);
        Self {
            spec: fft.spectrum_buffer(),
            work: fft.spectrum_buffer(),
            fft,
        }
    }

    /// Spectrum of a zero-padded trace, reusable across kernels.
    pub fn spectrum(&mut self, trace: &[T]) -> Vec<Complex<T>> {
        self.fft.forward(trace, &mut self.spec);
        self.spec.clone()
    }

    /// Applies `filter` to a precomputed spectrum, writing `out.len()` samples.
    pub fn apply_spectrum(&mut self, spectrum: &[Complex<T>], filter: &WienerFilter, out: &mut [T]) {
        for ((w, &x), &g) in self.work.iter_mut().zip(spectrum).zip(&filter.gain) {
            *w = x * T::of(g);
        }
        self.fft.inverse(&self.work, out);
    }

    pub fn apply(&mut self, trace: &[T], filter: &WienerFilter, out: &mut [T]) {
        self.fft.forward(trace, &mut self.spec);
        for ((w, &x), &g) in self.work.iter_mut().zip(&self.spec).zip(&filter.gain) {
            *w = x * T::of(g);
        }
        self.fft.inverse(&self.work, out);
    }

    /// Spectrum of an upstream gradient, for accumulating filter-parameter gradients.
    pub fn grad_spectrum(&mut self, grad_out: &[T]) -> Vec<Complex<T>> {
        self.fft.forward(grad_out, &mut self.spec);
        self.spec.clone()
    }

    pub fn n_fft(&self) -> usize {
        self.fft.len()
    }
}

/// `dL/dG_l` for one trace: `Re(X_l conj(GY_l)) * m_l / N`, where `GY` is the
/// spectrum of the zero-padded upstream gradient and `m_l` the bin multiplicity.
pub fn gain_gradient<T: Real>(
    x_spec: &[Complex<T>],
    gy_spec: &[Complex<T>],
    freqs: &FrequencyGrid,
    acc: &mut [f64],
) {
    let inv_n = 1.0 / freqs.n_fft as f64;
    for (l, ((x, gy), a)) in x_spec.iter().zip(gy_spec).zip(acc.iter_mut()).enumerate() {
        let re = x.re.to64() * gy.re.to64() + x.im.to64() * gy.im.to64();
        *a += re * freqs.bin_weight(l) * inv_n;
    }
}

/// Chain rule from per-bin gain gradients to `(d local, d log_lambda)`.
pub fn kernel_gradient(filter: &WienerFilter, d_gain: &[f64]) -> ([f64; 3], f64) {
    let mut d_local = [0.0; 3];
    let mut d_log_lambda = 0.0;
    for (p, &dg) in filter.partials.iter().zip(d_gain) {
        for j in 0..3 {
            d_local[j] += p.d_local[j] * dg;
        }
        d_log_lambda += p.d_log_lambda * dg;
    }
    (d_local, d_log_lambda)
}

/// Deconvolves one trace with one kernel.
pub fn wiener_deconvolve<T: Real>(
    trace: &[T],
    kernel: &SirKernel,
    config: &SystemConfig,
    freqs: &FrequencyGrid,
) -> Result<Vec<T>> {
    if trace.len() > freqs.n_fft / 2 {
        return Err(Error::Shape(format!(
            "trace of {} samples needs a transform of at least twice its length, got {}",
            trace.len(),
            freqs.n_fft
        )));
    }
    let filter = kernel.filter(config, freqs)?;
    let mut dc = Deconvolver::<T>::new(freqs);
    let mut out = vec![T::zero(); trace.len()];
    dc.apply(trace, &filter, &mut out);
    Ok(out)
}
