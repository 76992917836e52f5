//! Zero-padded real FFT plumbing shared by the forward model, the Wiener layer
//! and the measurement pre-smoothing.

use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::geometry::SystemConfig;
use crate::scalar::Real;

/// Smallest 5-smooth length that is at least `2 * n_samples`.
pub fn padded_len(n_samples: usize) -> usize {
    let target = (2 * n_samples).max(2);
    (target..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1 && n % 2 == 0
        })
        .expect("5-smooth numbers are unbounded")
}

/// Discrete frequencies `f_l = l * df` of a real-signal spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub n_fft: usize,
    pub n_bins: usize,
    /// MHz when time is in µs.
    pub df: f64,
}

impl FrequencyGrid {
    pub fn new(n_fft: usize, dt: f64) -> Self {
        Self {
            n_fft,
            n_bins: n_fft / 2 + 1,
            df: 1.0 / (n_fft as f64 * dt),
        }
    }

    pub fn for_config(config: &SystemConfig) -> Self {
        Self::new(padded_len(config.n_samples), config.dt)
    }

    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.df
    }

    /// Multiplicity of each half-spectrum bin in the full two-sided spectrum.
    pub fn bin_weight(&self, bin: usize) -> f64 {
        if bin == 0 || (self.n_fft.is_multiple_of(2) && bin == self.n_fft / 2) {
            1.0
        } else {
            2.0
        }
    }
}

/// Forward/inverse real transform pair with owned scratch; clone per worker.
pub struct RealFft<T: Real> {
    fwd: Arc<dyn RealToComplex<T>>,
    inv: Arc<dyn ComplexToReal<T>>,
    time: Vec<T>,
    spec: Vec<Complex<T>>,
    n: usize,
}

impl<T: Real> Clone for RealFft<T> {
    fn clone(&self) -> Self {
        Self {
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
            time: self.time.clone(),
            spec: self.spec.clone(),
            n: self.n,
        }
    }
}

impl<T: Real> RealFft<T> {
    pub fn new(n_fft: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        let fwd = planner.plan_fft_forward(n_fft);
        let inv = planner.plan_fft_inverse(n_fft);
        Self {
            time: fwd.make_input_vec(),
            spec: fwd.make_output_vec(),
            fwd,
            inv,
            n: n_fft,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n_bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Spectrum of `signal` zero-padded to the transform length.
    pub fn forward(&mut self, signal: &[T], out: &mut [Complex<T>]) {
        assert!(signal.len() <= self.n, "signal longer than transform");
        self.time[..signal.len()].copy_from_slice(signal);
        self.time[signal.len()..].fill(T::zero());
        self.fwd
            .process(&mut self.time, out)
            .expect("buffer lengths fixed at plan time");
    }

    /// Normalized inverse transform, keeping the first `out.len()` samples.
    pub fn inverse(&mut self, spectrum: &[Complex<T>], out: &mut [T]) {
        self.spec.copy_from_slice(spectrum);
        // DC and Nyquist bins of a real signal carry no imaginary part.
        self.spec[0].im = T::zero();
        if self.n.is_multiple_of(2) {
            let last = self.spec.len() - 1;
            self.spec[last].im = T::zero();
        }
        self.inv
            .process(&mut self.spec, &mut self.time)
            .expect("buffer lengths fixed at plan time");
        let scale = T::one() / T::of(self.n as f64);
        for (o, &t) in out.iter_mut().zip(&self.time) {
            *o = t * scale;
        }
    }

    pub fn spectrum_buffer(&self) -> Vec<Complex<T>> {
        vec![Complex::new(T::zero(), T::zero()); self.n_bins()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_len_is_smooth_and_long_enough() {
        assert_eq!(padded_len(512), 1024);
        assert_eq!(padded_len(2048), 4096);
        let n = padded_len(2267);
        assert!((4534..=4608).contains(&n));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut fft = RealFft::<f64>::new(padded_len(100));
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut spec = fft.spectrum_buffer();
        fft.forward(&x, &mut spec);
        let mut y = vec![0.0; 100];
        fft.inverse(&spec, &mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
