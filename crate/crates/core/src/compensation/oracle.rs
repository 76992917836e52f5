//! Known-geometry SIR compensation used to validate the deconvolution physics
//! without any learning.
//!
//! For each trace the sources are restricted to the arrival windows of the known
//! spheres, and the windowed sources are recovered jointly from the measured
//! trace by Tikhonov-regularized least squares against each sphere's true SIR:
//!
//! `min_s |x - sum_n h_n * s_n|^2 + lambda sum_n |s_n|^2`.
//!
//! With a single unrestricted source this is exactly the Wiener filter
//! `H / (H^2 + lambda)`; solving jointly keeps spheres with overlapping arrivals
//! from leaking into each other through the other spheres' SIR nulls.

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayViewMut1, Axis};
use rayon::prelude::*;
use realfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::forward::{sir_spectrum, PressureTensor, Sphere};
use crate::geometry::{build_array, SystemConfig, TransducerPose};
use crate::scalar::Real;
use crate::spectral::{FrequencyGrid, RealFft};

struct Scratch {
    fft: RealFft<f64>,
    x_spec: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
    full: Vec<f64>,
}

impl Scratch {
    fn new(freqs: &FrequencyGrid) -> Self {
        let fft = RealFft::new(freqs.n_fft);
        Self {
            x_spec: fft.spectrum_buffer(),
            work: fft.spectrum_buffer(),
            full: vec![0.0; freqs.n_fft],
            fft,
        }
    }
}

struct Window {
    start: usize,
    len: usize,
    sir: Vec<f64>,
}

fn windows(spheres: &[Sphere], pose: &TransducerPose, config: &SystemConfig, freqs: &FrequencyGrid) -> Result<Vec<Window>> {
    let n_t = config.n_samples as i64;
    let mut out = Vec::with_capacity(spheres.len());
    for s in spheres {
        let local = pose.global_to_local(s.center);
        let (first, last) = s.support(local.norm(), config.sos, config.dt);
        let (lo, hi) = (first.max(0), last.min(n_t - 1));
        if lo > hi {
            continue;
        }
        out.push(Window {
            start: lo as usize,
            len: (hi - lo + 1) as usize,
            sir: sir_spectrum(local, config, freqs)?,
        });
    }
    Ok(out)
}

fn compensate_trace(
    trace: &[f64],
    wins: &[Window],
    lambda: f64,
    freqs: &FrequencyGrid,
    sc: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    out.fill(0.0);
    if wins.is_empty() {
        return Ok(());
    }
    let n_fft = freqs.n_fft;
    let offsets: Vec<usize> = wins
        .iter()
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w.len;
            Some(o)
        })
        .collect();
    let n_unknowns: usize = wins.iter().map(|w| w.len).sum();

    // h_n is even in time (H_n is real), so correlations equal convolutions and
    // every normal-equation entry is one sample of an inverse transform.
    sc.fft.forward(trace, &mut sc.x_spec);
    let mut rhs = DVector::<f64>::zeros(n_unknowns);
    for (w, &off) in wins.iter().zip(&offsets) {
        for ((o, &x), &h) in sc.work.iter_mut().zip(&sc.x_spec).zip(&w.sir) {
            *o = x * h;
        }
        sc.fft.inverse(&sc.work, &mut sc.full);
        for i in 0..w.len {
            rhs[off + i] = sc.full[w.start + i];
        }
    }
    let mut gram = DMatrix::<f64>::zeros(n_unknowns, n_unknowns);
    for (a, (wa, &oa)) in wins.iter().zip(&offsets).enumerate() {
        for (wb, &ob) in wins.iter().zip(&offsets).skip(a) {
            for ((o, &ha), &hb) in sc.work.iter_mut().zip(&wa.sir).zip(&wb.sir) {
                *o = Complex::new(ha * hb, 0.0);
            }
            sc.fft.inverse(&sc.work, &mut sc.full);
            for i in 0..wa.len {
                for j in 0..wb.len {
                    let lag = (wb.start + j) as i64 - (wa.start + i) as i64;
                    let v = sc.full[lag.rem_euclid(n_fft as i64) as usize];
                    gram[(oa + i, ob + j)] = v;
                    gram[(ob + j, oa + i)] = v;
                }
            }
        }
    }
    for i in 0..n_unknowns {
        gram[(i, i)] += lambda;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("oracle normal equations are not positive definite".into()))?;
    let src = chol.solve(&rhs);
    for (w, &off) in wins.iter().zip(&offsets) {
        for i in 0..w.len {
            out[w.start + i] += src[off + i];
        }
    }
    Ok(())
}

/// Compensates every trace using the true SIR of each known sphere; `lambda`
/// has the same absolute meaning as a Wiener kernel's regularizer.
pub fn oracle_compensate<T: Real>(
    p: &PressureTensor<T>,
    spheres: &[Sphere],
    config: &SystemConfig,
    lambda: f64,
) -> Result<PressureTensor<T>> {
    p.check_matches(config)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("oracle regularizer must be positive, got {lambda}")));
    }
    let poses = build_array(config)?;
    let freqs = FrequencyGrid::for_config(config);
    let (n_elements, n_views) = (config.n_elements, config.n_views);
    let mut out = PressureTensor::<T>::zeros(config);
    let mut rows: Vec<(ArrayViewMut1<'_, T>, Vec<f64>)> = out
        .data
        .lanes_mut(Axis(2))
        .into_iter()
        .zip(p.data.lanes(Axis(2)))
        .map(|(o, i)| (o, i.iter().map(|v| v.to64()).collect()))
        .collect();
    let results: Vec<Result<()>> = rows
        .par_iter_mut()
        .enumerate()
        .map_init(
            || (Scratch::new(&freqs), vec![0.0; config.n_samples]),
            |(sc, buf), (idx, (row, input))| {
                let (e, v) = (idx / n_views, idx % n_views);
                let wins = windows(spheres, &poses[v * n_elements + e], config, &freqs)?;
                compensate_trace(input, &wins, lambda, &freqs, sc, buf)?;
                for (o, &x) in row.iter_mut().zip(buf.iter()) {
                    *o = T::of(x);
                }
                Ok(())
            },
        )
        .collect();
    results.into_iter().collect::<Result<()>>()?;
    Ok(out)
}
