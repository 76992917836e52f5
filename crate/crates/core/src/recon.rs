//! Universal backprojection for point-like-element data, plus the temporal
//! Gaussian pre-smoothing used by the resolution study.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::PressureTensor;
use crate::geometry::{TransducerPose, Vec3, VoxelGrid};
use crate::scalar::Real;

/// Reconstructed initial pressure on a voxel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T: Real> {
    pub grid: VoxelGrid,
    pub data: Array3<T>,
}

impl<T: Real> Volume<T> {
    pub fn zeros(grid: VoxelGrid) -> Self {
        let data = Array3::zeros(grid.dims);
        Self { grid, data }
    }

    pub fn from_array(grid: VoxelGrid, data: Array3<T>) -> Result<Self> {
        if data.shape() != grid.dims {
            return Err(Error::Shape(format!(
                "volume {:?} does not match grid {:?}",
                data.shape(),
                grid.dims
            )));
        }
        Ok(Self { grid, data })
    }
}

/// Central differences inside, second-order one-sided differences at the ends.
pub fn time_derivative<T: Real>(trace: &[T], dt: f64) -> Result<Vec<T>> {
    let n = trace.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("trace of {n} samples is too short to differentiate")));
    }
    let half = T::of(0.5 / dt);
    let mut out = vec![T::zero(); n];
    out[0] = (T::of(-3.0) * trace[0] + T::of(4.0) * trace[1] - trace[2]) * half;
    for i in 1..n - 1 {
        out[i] = (trace[i + 1] - trace[i - 1]) * half;
    }
    out[n - 1] = (T::of(3.0) * trace[n - 1] - T::of(4.0) * trace[n - 2] + trace[n - 3]) * half;
    Ok(out)
}

/// Normalized Gaussian taps for a spatial FWHM of `fwhm` mm, truncated at 4 sigma.
pub fn gaussian_taps(fwhm: f64, c0: f64, dt: f64) -> Vec<f64> {
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()) / c0 / dt;
    let half = (4.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Convolves every trace with a temporal Gaussian whose spatial FWHM `c0 * FWHM_t`
/// equals `fwhm_target`.
pub fn presmooth<T: Real>(p: &PressureTensor<T>, fwhm_target: f64, c0: f64, dt: f64) -> Result<PressureTensor<T>> {
    if !(fwhm_target > 0.0) {
        return Err(Error::config("smoothing FWHM must be positive"));
    }
    if fwhm_target < 2.0 * c0 * dt {
        return Err(Error::config(format!(
            "smoothing FWHM {fwhm_target} mm is below the resolvable {} mm",
            2.0 * c0 * dt
        )));
    }
    let taps = gaussian_taps(fwhm_target, c0, dt);
    let half = (taps.len() / 2) as i64;
    let mut out = p.clone();
    let n = p.shape()[2] as i64;
    out.data
        .lanes_mut(Axis(2))
        .into_iter()
        .zip(p.data.lanes(Axis(2)))
        .par_bridge()
        .for_each(|(mut dst, src)| {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &w) in taps.iter().enumerate() {
                    let k = i + j as i64 - half;
                    if (0..n).contains(&k) {
                        acc += w * src[k as usize].to64();
                    }
                }
                dst[i as usize] = T::of(acc);
            }
        });
    Ok(out)
}

/// Filtered datum `b(t) = 2 p(t) - 2 t dp/dt` for every trace, rows ordered like `poses`.
fn filtered_data<T: Real>(p: &PressureTensor<T>, dt: f64) -> Result<Array2<f64>> {
    let [ne, nv, nt] = p.shape();
    let mut b = Array2::<f64>::zeros((ne * nv, nt));
    for v in 0..nv {
        for e in 0..ne {
            let trace: Vec<f64> = p.trace(e, v).iter().map(|x| x.to64()).collect();
            let deriv = time_derivative(&trace, dt)?;
            let mut row = b.row_mut(v * ne + e);
            for r in 0..nt {
                let t = r as f64 * dt;
                row[r] = 2.0 * trace[r] - 2.0 * t * deriv[r];
            }
        }
    }
    Ok(b)
}

/// Points per backprojection batch in `ubp_points`.
const POINT_BATCH: usize = 4096;

struct Backprojector<'a> {
    filtered: Array2<f64>,
    poses: &'a [TransducerPose],
    c0: f64,
    dt: f64,
}

impl Backprojector<'_> {
    /// Backprojects onto a batch of points. Poses run in the outer loop so each
    /// filtered trace stays in cache across the batch; every point still sums
    /// its poses in array order.
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        let nt = self.filtered.ncols();
        let t_max = (nt - 1) as f64;
        let mut acc = vec![0.0; points.len()];
        let mut wsum = vec![0.0; points.len()];
        for (q, pose) in self.poses.iter().enumerate() {
            let row = self.filtered.row(q);
            let row = row.as_slice().expect("filtered rows are contiguous");
            for ((&r, a), ws) in points.iter().zip(&mut acc).zip(&mut wsum) {
                let d = r - pose.center;
                let dist2 = d.dot(d);
                let dist = dist2.sqrt();
                let cos = (d.dot(pose.axis_z) / dist).max(0.0);
                let w = pose.area_weight * cos / dist2;
                *ws += w;
                let s = dist / self.c0 / self.dt;
                if !(0.0..=t_max).contains(&s) {
                    continue;
                }
                let i0 = s.floor() as usize;
                let frac = s - i0 as f64;
                let b = if i0 + 1 < nt {
                    row[i0] * (1.0 - frac) + row[i0 + 1] * frac
                } else {
                    row[i0]
                };
                *a += w * b;
            }
        }
        acc.iter()
            .zip(&wsum)
            .map(|(&a, &w)| if w > 0.0 { a / w } else { 0.0 })
            .collect()
    }
}

fn check_inputs<T: Real>(p: &PressureTensor<T>, poses: &[TransducerPose], c0: f64, dt: f64) -> Result<()> {
    if poses.is_empty() {
        return Err(Error::Empty("transducer array".into()));
    }
    if !(c0 > 0.0) {
        return Err(Error::config(format!("speed of sound must be positive, got {c0}")));
    }
    if !(dt > 0.0) {
        return Err(Error::config("sampling interval must be positive"));
    }
    let [ne, nv, _] = p.shape();
    if ne * nv != poses.len() {
        return Err(Error::Shape(format!(
            "{} traces but {} transducer poses",
            ne * nv,
            poses.len()
        )));
    }
    Ok(())
}

/// Universal backprojection evaluated at arbitrary points.
pub fn ubp_points<T: Real>(
    p: &PressureTensor<T>,
    poses: &[TransducerPose],
    points: &[Vec3],
    c0: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_inputs(p, poses, c0, dt)?;
    let bp = Backprojector {
        filtered: filtered_data(p, dt)?,
        poses,
        c0,
        dt,
    };
    Ok(points.par_chunks(POINT_BATCH).flat_map_iter(|c| bp.values(c)).collect())
}

/// Universal backprojection onto `grid`: each voxel averages the filtered data at
/// its retarded times with solid-angle weights `dS cos(theta) / |r - r0|^2`
/// normalized to sum to one.
pub fn ubp<T: Real>(
    p: &PressureTensor<T>,
    poses: &[TransducerPose],
    grid: &VoxelGrid,
    c0: f64,
    dt: f64,
) -> Result<Volume<T>> {
    grid.validate()?;
    check_inputs(p, poses, c0, dt)?;
    let bp = Backprojector {
        filtered: filtered_data(p, dt)?,
        poses,
        c0,
        dt,
    };
    let mut vol = Volume::<T>::zeros(grid.clone());
    vol.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut plane)| {
            let points: Vec<Vec3> = plane.indexed_iter().map(|((j, k), _)| grid.position(i, j, k)).collect();
            for (v, x) in plane.iter_mut().zip(bp.values(&points)) {
                *v = T::of(x);
            }
        });
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SystemConfig;

    #[test]
    fn derivative_of_ramp_and_constant() {
        let ramp: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 * 0.05 + 1.0).collect();
        let d = time_derivative(&ramp, 0.05).unwrap();
        assert!(d.iter().all(|v| (v - 3.0).abs() < 1e-9));
        let d = time_derivative(&[2.0f32; 5], 0.05).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(time_derivative(&[1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn derivative_of_sine_within_truncation_bound() {
        let (f, dt) = (0.8, 0.05);
        let w = 2.0 * std::f64::consts::PI * f;
        let x: Vec<f64> = (0..400).map(|i| (w * i as f64 * dt).sin()).collect();
        let d = time_derivative(&x, dt).unwrap();
        // Central difference error is w^3 dt^2 / 6; one-sided ends w^3 dt^2 / 3.
        let bound = w.powi(3) * dt * dt / 3.0 * 1.01;
        for (i, v) in d.iter().enumerate() {
            let exact = w * (w * i as f64 * dt).cos();
            assert!((v - exact).abs() <= bound, "sample {i}");
        }
    }

    #[test]
    fn gaussian_taps_have_requested_width() {
        let taps = gaussian_taps(0.5, 1.5, 0.05);
        let sum: f64 = taps.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let half = taps.len() / 2;
        let var: f64 = taps
            .iter()
            .enumerate()
            .map(|(k, w)| w * ((k as f64 - half as f64) * 0.05 * 1.5).powi(2))
            .sum();
        let fwhm = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * var.sqrt();
        assert!((fwhm - 0.5).abs() < 0.005, "{fwhm}");
    }

    #[test]
    fn presmooth_rejects_unresolvable_width() {
        let cfg = SystemConfig {
            n_elements: 1,
            n_views: 1,
            n_samples: 64,
            ..SystemConfig::default()
        };
        let p = PressureTensor::<f64>::zeros(&cfg);
        assert!(presmooth(&p, 0.1, 1.5, 0.05).is_err());
        assert!(presmooth(&p, 0.5, 1.5, 0.05).is_ok());
    }

    #[test]
    fn ubp_of_zero_data_is_zero() {
        let cfg = SystemConfig {
            n_elements: 3,
            n_views: 4,
            n_samples: 128,
            ..SystemConfig::default()
        };
        let poses = crate::geometry::build_array(&cfg).unwrap();
        let p = PressureTensor::<f32>::zeros(&cfg);
        let grid = VoxelGrid::covering([-2.0, -2.0, -2.0], 1.0, [4, 4, 4]);
        let v = ubp(&p, &poses, &grid, cfg.sos, cfg.dt).unwrap();
        assert!(v.data.iter().all(|&x| x == 0.0));
        assert!(ubp(&p, &[], &grid, cfg.sos, cfg.dt).is_err());
        assert!(ubp(&p, &poses, &grid, 0.0, cfg.dt).is_err());
    }
}
