//! Analytic forward simulation of uniform spherical sources.
//!
//! A point-like element records the N-wave of each sphere directly. A finite
//! rectangular element filters each sphere's N-wave with the far-field
//! rectangular SIR evaluated at the sphere center. That SIR, `sinc(ax f) sinc(by f)`,
//! is the transform of two unit-area boxcars of widths `ax / pi` and `by / pi`,
//! so the filtered wave is evaluated in closed form from the N-wave's double
//! antiderivative (a piecewise cubic) and then sampled.

use std::f64::consts::PI;

use ndarray::{Array3, ArrayView1, ArrayViewMut1, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_array, SystemConfig, TransducerPose, Vec3};
use crate::scalar::Real;
use crate::spectral::FrequencyGrid;

/// Uniform sphere of initial pressure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: f64,
}

impl Sphere {
    pub fn new(center: impl Into<Vec3>, radius: f64, amplitude: f64) -> Self {
        Self {
            center: center.into(),
            radius,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config(format!("sphere radius must be positive, got {}", self.radius)));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::config(format!(
                "sphere amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Pressure at distance `d` from the center at time `t`: `A (d - c0 t) / (2 d)`
    /// while the shell of radius `c0 t` intersects the sphere.
    #[inline]
    pub fn nwave(&self, d: f64, c0: f64, t: f64) -> f64 {
        let u = d - c0 * t;
        // relative slack keeps analytically exact endpoints inside despite rounding
        if u.abs() <= self.radius * (1.0 + 1e-12) {
            self.amplitude * u / (2.0 * d)
        } else {
            0.0
        }
    }

    /// Sample index range `[first, last]` where the N-wave seen from `d` can be nonzero.
    pub(crate) fn support(&self, d: f64, c0: f64, dt: f64) -> (i64, i64) {
        let first = ((d - self.radius) / (c0 * dt)).ceil() as i64 - 1;
        let last = ((d + self.radius) / (c0 * dt)).floor() as i64 + 1;
        (first, last)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Point,
    Rect,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Mode::Point),
            "rect" => Ok(Mode::Rect),
            other => Err(Error::UnknownName {
                kind: "simulation mode",
                name: other.to_string(),
            }),
        }
    }
}

/// Measurement data, `n_elements x n_views x n_samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureTensor<T: Real> {
    pub data: Array3<T>,
    pub config_hash: String,
}

impl<T: Real> PressureTensor<T> {
    pub fn zeros(config: &SystemConfig) -> Self {
        Self {
            data: Array3::zeros(config.shape()),
            config_hash: config.config_hash(),
        }
    }

    pub fn from_array(data: Array3<T>, config: &SystemConfig) -> Result<Self> {
        if data.shape() != config.shape() {
            return Err(Error::Shape(format!(
                "tensor {:?} does not match system {:?}",
                data.shape(),
                config.shape()
            )));
        }
        Ok(Self {
            data,
            config_hash: config.config_hash(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    pub fn trace(&self, element: usize, view: usize) -> ArrayView1<'_, T> {
        self.data.slice(ndarray::s![element, view, ..])
    }

    pub fn trace_mut(&mut self, element: usize, view: usize) -> ArrayViewMut1<'_, T> {
        self.data.slice_mut(ndarray::s![element, view, ..])
    }

    pub fn cast<U: Real>(&self) -> PressureTensor<U> {
        PressureTensor {
            data: self.data.mapv(|v| U::of(v.to64())),
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_matches(&self, config: &SystemConfig) -> Result<()> {
        if self.shape() != config.shape() {
            return Err(Error::Shape(format!(
                "tensor {:?} does not match system {:?}",
                self.shape(),
                config.shape()
            )));
        }
        Ok(())
    }
}

fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        u.sin() / u
    }
}

/// Argument scales of the two sinc factors, per MHz: `a x pi / (c0 |local|)` and
/// `b y pi / (c0 |local|)`.
pub fn sir_scales(local: Vec3, config: &SystemConfig) -> Result<(f64, f64)> {
    let dist = local.norm();
    if !(dist > 0.0) {
        return Err(Error::Degenerate("SIR undefined at the element center".into()));
    }
    let k = std::f64::consts::PI / (config.sos * dist);
    Ok((config.elem_a * local.x * k, config.elem_b * local.y * k))
}

/// Far-field rectangular-element SIR at every frequency of `freqs`.
pub fn sir_spectrum(local: Vec3, config: &SystemConfig, freqs: &FrequencyGrid) -> Result<Vec<f64>> {
    let (ax, by) = sir_scales(local, config)?;
    Ok((0..freqs.n_bins)
        .map(|l| {
            let f = freqs.freq(l);
            sinc(ax * f) * sinc(by * f)
        })
        .collect())
}

/// Point-element trace of one sphere sampled at `t = r dt`.
pub fn sphere_trace_point(s: &Sphere, pose: &TransducerPose, config: &SystemConfig) -> Result<Vec<f64>> {
    s.validate()?;
    let d = (pose.center - s.center).norm();
    if d <= s.radius {
        return Err(Error::InteriorObservation {
            distance: d,
            radius: s.radius,
        });
    }
    Ok((0..config.n_samples)
        .map(|r| s.nwave(d, config.sos, config.time(r)))
        .collect())
}

fn point_trace_into(spheres: &[Sphere], pose: &TransducerPose, config: &SystemConfig, out: &mut [f64]) {
    out.fill(0.0);
    let n = out.len() as i64;
    for s in spheres {
        let d = (pose.center - s.center).norm();
        let (first, last) = s.support(d, config.sos, config.dt);
        for r in first.max(0)..=last.min(n - 1) {
            out[r as usize] += s.nwave(d, config.sos, config.time(r as usize));
        }
    }
}

/// Boxcars narrower than this (µs) are treated as identities; the closed form
/// divides by the widths and would lose precision.
const MIN_BOX: f64 = 1e-3;

/// N-wave `-k s` on `|s| <= half`, in local time `s = t - d / c0`, and its
/// first and second antiderivatives.
#[derive(Clone, Copy)]
struct NWave {
    k: f64,
    half: f64,
}

impl NWave {
    fn value(self, s: f64) -> f64 {
        if s.abs() <= self.half * (1.0 + 1e-12) {
            -self.k * s
        } else {
            0.0
        }
    }

    fn int1(self, s: f64) -> f64 {
        if s.abs() >= self.half {
            0.0
        } else {
            -0.5 * self.k * (s * s - self.half * self.half)
        }
    }

    fn int2(self, s: f64) -> f64 {
        let h = self.half;
        if s <= -h {
            0.0
        } else if s >= h {
            2.0 * self.k * h * h * h / 3.0
        } else {
            -0.5 * self.k * (s * s * s / 3.0 - h * h * s - 2.0 * h * h * h / 3.0)
        }
    }

    /// Value after convolving with unit-area boxcars of widths `wa` and `wb`.
    fn smoothed(self, s: f64, wa: f64, wb: f64) -> f64 {
        match (wa >= MIN_BOX, wb >= MIN_BOX) {
            (false, false) => self.value(s),
            (true, false) | (false, true) => {
                let w = wa.max(wb);
                (self.int1(s + 0.5 * w) - self.int1(s - 0.5 * w)) / w
            }
            (true, true) => {
                let (p, m) = (0.5 * (wa + wb), 0.5 * (wa - wb));
                (self.int2(s + p) - self.int2(s + m) - self.int2(s - m) + self.int2(s - p)) / (wa * wb)
            }
        }
    }
}

fn rect_trace_into(spheres: &[Sphere], pose: &TransducerPose, config: &SystemConfig, out: &mut [f64]) -> Result<()> {
    out.fill(0.0);
    let n = out.len() as i64;
    let c0 = config.sos;
    for s in spheres {
        let local = pose.global_to_local(s.center);
        let d = local.norm();
        let (ax, by) = sir_scales(local, config)?;
        let (wa, wb) = (ax.abs() / PI, by.abs() / PI);
        let wave = NWave {
            k: s.amplitude * c0 / (2.0 * d),
            half: s.radius / c0,
        };
        let arrival = d / c0;
        let reach = wave.half + 0.5 * (wa + wb);
        let first = (((arrival - reach) / config.dt).floor() as i64 - 1).max(0);
        let last = (((arrival + reach) / config.dt).ceil() as i64 + 1).min(n - 1);
        for r in first..=last {
            out[r as usize] += wave.smoothed(config.time(r as usize) - arrival, wa, wb);
        }
    }
    Ok(())
}

fn check_exterior(spheres: &[Sphere], poses: &[TransducerPose]) -> Result<()> {
    for s in spheres {
        s.validate()?;
        for p in poses {
            let d = (p.center - s.center).norm();
            if d <= s.radius {
                return Err(Error::InteriorObservation {
                    distance: d,
                    radius: s.radius,
                });
            }
        }
    }
    Ok(())
}

/// Single trace of the full forward model at one pose, in double precision.
pub fn simulate_trace(
    spheres: &[Sphere],
    pose: &TransducerPose,
    config: &SystemConfig,
    mode: Mode,
) -> Result<Vec<f64>> {
    check_exterior(spheres, std::slice::from_ref(pose))?;
    match mode {
        Mode::Point => {
            let mut out = vec![0.0; config.n_samples];
            point_trace_into(spheres, pose, config, &mut out);
            Ok(out)
        }
        Mode::Rect => {
            let mut out = vec![0.0; config.n_samples];
            rect_trace_into(spheres, pose, config, &mut out)?;
            Ok(out)
        }
    }
}

/// Full-array forward simulation; traces are computed in `f64` and stored as `T`.
pub fn simulate<T: Real>(spheres: &[Sphere], config: &SystemConfig, mode: Mode) -> Result<PressureTensor<T>> {
    let poses = build_array(config)?;
    simulate_with_poses(spheres, config, &poses, mode)
}

pub fn simulate_with_poses<T: Real>(
    spheres: &[Sphere],
    config: &SystemConfig,
    poses: &[TransducerPose],
    mode: Mode,
) -> Result<PressureTensor<T>> {
    config.validate()?;
    if poses.len() != config.n_transducers() {
        return Err(Error::Shape("pose list does not match the system".into()));
    }
    check_exterior(spheres, poses)?;
    let mut tensor = PressureTensor::<T>::zeros(config);
    if spheres.is_empty() {
        return Ok(tensor);
    }
    let n_views = config.n_views;
    let n_elements = config.n_elements;

    // One row per (element, view); `data` is element-major so rows are contiguous.
    let mut rows: Vec<ArrayViewMut1<'_, T>> = tensor.data.lanes_mut(Axis(2)).into_iter().collect();
    let results: Vec<Result<()>> = rows
        .par_iter_mut()
        .enumerate()
        .map_init(
            || vec![0.0f64; config.n_samples],
            |buf, (idx, row)| {
                let (e, v) = (idx / n_views, idx % n_views);
                let pose = &poses[v * n_elements + e];
                match mode {
                    Mode::Point => point_trace_into(spheres, pose, config, buf),
                    Mode::Rect => rect_trace_into(spheres, pose, config, buf)?,
                }
                for (o, &x) in row.iter_mut().zip(buf.iter()) {
                    *o = T::of(x);
                }
                Ok(())
            },
        )
        .collect();
    results.into_iter().collect::<Result<()>>()?;
    Ok(tensor)
}

/// `fraction` times the 90th percentile of `|data|`.
pub fn noise_scale<T: Real>(p: &PressureTensor<T>, fraction: f64) -> Result<f64> {
    let mut mags: Vec<f64> = p.data.iter().map(|v| v.to64().abs()).collect();
    if mags.iter().all(|&m| m == 0.0) {
        return Err(Error::Degenerate("noise scale of an all-zero tensor".into()));
    }
    Ok(fraction * percentile(&mut mags, 90.0))
}

/// Linear-interpolation percentile (the numpy default); reorders `values`.
pub(crate) fn percentile(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let (_, lo_v, rest) = values.select_nth_unstable_by(lo, |a, b| a.total_cmp(b));
    let lo_v = *lo_v;
    let hi_v = if hi == lo {
        lo_v
    } else {
        rest.iter().copied().fold(f64::INFINITY, f64::min)
    };
    lo_v + (pos - lo as f64) * (hi_v - lo_v)
}

/// Adds i.i.d. `N(0, sigma^2)` noise. Each trace draws from its own ChaCha stream
/// keyed by `(seed, element, view)`, so the result does not depend on threading.
pub fn add_noise<T: Real>(p: &PressureTensor<T>, sigma: f64, seed: u64) -> Result<PressureTensor<T>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    let mut out = p.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let n_views = p.shape()[1];
    let mut rows: Vec<ArrayViewMut1<'_, T>> = out.data.lanes_mut(Axis(2)).into_iter().collect();
    rows.par_iter_mut().enumerate().for_each(|(idx, row)| {
        let (e, v) = (idx / n_views, idx % n_views);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((e as u64) << 32) | v as u64);
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = T::of(x.to64() + sigma * z);
        }
    });
    Ok(out)
}

impl<T: Real> PressureTensor<T> {
    /// Elementwise sum; hashes must agree.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape("cannot add tensors of different shapes".into()));
        }
        let mut out = self.clone();
        Zip::from(&mut out.data).and(&other.data).for_each(|a, &b| *a += b);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> SystemConfig {
        SystemConfig {
            n_elements: 4,
            n_views: 6,
            n_samples: 2048,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn nwave_endpoints() {
        let cfg = SystemConfig::default();
        let pose = TransducerPose::on_sphere(85.0, 130.0, 10.0);
        let d = 40.0;
        let s = Sphere::new(pose.center + pose.axis_z * d, 1.2, 2.0);
        // edge of the N-wave
        assert_relative_eq!(s.nwave(d, cfg.sos, (d - 1.2) / cfg.sos), 2.0 * 1.2 / (2.0 * d), max_relative = 1e-12);
        assert_eq!(s.nwave(d, cfg.sos, d / cfg.sos), 0.0);
        let trace = sphere_trace_point(&s, &pose, &cfg).unwrap();
        assert_eq!(trace.len(), cfg.n_samples);
    }

    #[test]
    fn interior_observation_is_rejected() {
        let cfg = SystemConfig::default();
        let pose = TransducerPose::on_sphere(85.0, 130.0, 10.0);
        let s = Sphere::new(pose.center + pose.axis_z * 0.5, 1.0, 1.0);
        assert!(matches!(
            sphere_trace_point(&s, &pose, &cfg),
            Err(Error::InteriorObservation { .. })
        ));
        let cfg = small_config();
        let poses = build_array(&cfg).unwrap();
        let s = Sphere::new(poses[3].center, 2.0, 1.0);
        assert!(simulate::<f64>(&[s], &cfg, Mode::Point).is_err());
    }

    #[test]
    fn sir_edge_values() {
        let cfg = SystemConfig::default();
        let freqs = FrequencyGrid::for_config(&cfg);
        let on_axis = sir_spectrum(Vec3::new(0.0, 0.0, 50.0), &cfg, &freqs).unwrap();
        assert!(on_axis.iter().all(|&h| h == 1.0));
        let off = sir_spectrum(Vec3::new(8.0, -20.0, 50.0), &cfg, &freqs).unwrap();
        assert_eq!(off[0], 1.0);
        assert!(sir_spectrum(Vec3::new(0.0, 0.0, 0.0), &cfg, &freqs).is_err());

        // first null of the short-axis factor: a x pi f / (c0 |r|) = pi
        let local = Vec3::new(10.0, 0.0, 40.0);
        let f_null = cfg.sos * local.norm() / (cfg.elem_a * local.x);
        let grid = FrequencyGrid { n_fft: 4, n_bins: 2, df: f_null };
        let h = sir_spectrum(local, &cfg, &grid).unwrap();
        assert!(h[1].abs() < 1e-15);
    }

    /// Oracle: the boxcar pair's transform is the SIR, so filtering a finely
    /// sampled N-wave by the SIR on a long DFT axis must agree with the closed form.
    #[test]
    fn closed_form_matches_spectral_filtering() {
        use crate::spectral::RealFft;
        let cfg = SystemConfig::default();
        let pose = TransducerPose::on_sphere(85.0, 120.0, 30.0);
        let s = Sphere::new([20.0, 15.0, -10.0], 1.2, 1.0);
        let local = pose.global_to_local(s.center);
        let d = local.norm();
        let fine = 64;
        let dt = cfg.dt / fine as f64;
        let n = cfg.n_samples * fine;
        let fcfg = SystemConfig { n_samples: n, dt, ..cfg.clone() };
        let freqs = FrequencyGrid::for_config(&fcfg);
        let wave: Vec<f64> = (0..n).map(|r| s.nwave(d, cfg.sos, r as f64 * dt)).collect();
        let h = sir_spectrum(local, &fcfg, &freqs).unwrap();
        let mut fft = RealFft::<f64>::new(freqs.n_fft);
        let mut spec = fft.spectrum_buffer();
        fft.forward(&wave, &mut spec);
        for (x, hv) in spec.iter_mut().zip(&h) {
            *x *= *hv;
        }
        let mut filtered = vec![0.0; n];
        fft.inverse(&spec, &mut filtered);
        let closed = simulate_trace(&[s], &pose, &cfg, Mode::Rect).unwrap();
        let coarse: Vec<f64> = (0..cfg.n_samples).map(|r| filtered[r * fine]).collect();
        let num: f64 = closed.iter().zip(&coarse).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = closed.iter().map(|a| a * a).sum();
        assert!(den > 0.0);
        assert!((num / den).sqrt() < 5e-3, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn antiderivatives_are_consistent() {
        let w = NWave { k: 0.3, half: 0.8 };
        let h = 1e-5;
        for s in [-1.0, -0.5, 0.0, 0.3, 0.79, 1.2] {
            let d1 = (w.int1(s + h) - w.int1(s - h)) / (2.0 * h);
            let d2 = (w.int2(s + h) - w.int2(s - h)) / (2.0 * h);
            assert!((d1 - w.value(s)).abs() < 1e-6, "s {s}");
            assert!((d2 - w.int1(s)).abs() < 1e-6, "s {s}");
        }
        // narrow boxes approach the unsmoothed wave
        assert!((w.smoothed(0.3, 2e-3, 2e-3) - w.value(0.3)).abs() < 1e-9);
    }

    #[test]
    fn empty_object_gives_zero_tensor() {
        let cfg = small_config();
        for mode in [Mode::Point, Mode::Rect] {
            let t = simulate::<f32>(&[], &cfg, mode).unwrap();
            assert_eq!(t.shape(), cfg.shape());
            assert!(t.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn point_mode_matches_single_trace() {
        let cfg = small_config();
        let poses = build_array(&cfg).unwrap();
        let s = Sphere::new([3.0, -7.0, -20.0], 2.0, 0.7);
        let t = simulate::<f64>(&[s], &cfg, Mode::Point).unwrap();
        for e in 0..cfg.n_elements {
            for v in 0..cfg.n_views {
                let single = sphere_trace_point(&s, &poses[v * cfg.n_elements + e], &cfg).unwrap();
                let row = t.trace(e, v);
                assert!(row.iter().zip(&single).all(|(a, b)| a == b));
            }
        }
    }

    #[test]
    fn on_axis_rect_equals_point() {
        let cfg = small_config();
        let pose = TransducerPose::on_sphere(85.0, 150.0, 0.0);
        let s = Sphere::new(pose.center + pose.axis_z * 60.0, 1.5, 1.0);
        let p = simulate_trace(&[s], &pose, &cfg, Mode::Point).unwrap();
        let r = simulate_trace(&[s], &pose, &cfg, Mode::Rect).unwrap();
        let num: f64 = p.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = p.iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn noise_scale_cases() {
        let cfg = SystemConfig {
            n_elements: 2,
            n_views: 2,
            n_samples: 16,
            ..SystemConfig::default()
        };
        let mut t = PressureTensor::<f64>::zeros(&cfg);
        assert!(noise_scale(&t, 0.1).is_err());
        t.data.fill(-3.0);
        assert_relative_eq!(noise_scale(&t, 0.25).unwrap(), 0.75);
        assert_eq!(noise_scale(&t, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn noise_scale_of_uniform_magnitudes() {
        let cfg = SystemConfig {
            n_elements: 10,
            n_views: 10,
            n_samples: 1000,
            ..SystemConfig::default()
        };
        let mut t = PressureTensor::<f64>::zeros(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in t.data.iter_mut() {
            *v = rand::Rng::random_range(&mut rng, -1.0..1.0);
        }
        let s = noise_scale(&t, 0.0267).unwrap();
        assert!((s - 0.0267 * 0.9).abs() < 0.0267 * 0.01, "{s}");
    }

    #[test]
    fn add_noise_contract() {
        let cfg = SystemConfig {
            n_elements: 10,
            n_views: 100,
            n_samples: 1000,
            ..SystemConfig::default()
        };
        let t = PressureTensor::<f64>::zeros(&cfg);
        assert!(add_noise(&t, -1.0, 0).is_err());
        assert_eq!(add_noise(&t, 0.0, 3).unwrap(), t);
        let a = add_noise(&t, 1.0, 42).unwrap();
        let b = add_noise(&t, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let n = a.data.len() as f64;
        let mean = a.data.sum() / n;
        let std = (a.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((0.995..=1.005).contains(&std), "{std}");
        let c = add_noise(&t, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_relative_eq!(percentile(&mut v, 50.0), 2.5);
        let mut v = vec![7.0];
        assert_eq!(percentile(&mut v, 90.0), 7.0);
    }
}
