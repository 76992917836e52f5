//! Multi-scale Frangi vesselness for bright tubular structures.

use nalgebra::Matrix3;
use ndarray::{Array3, Axis, Zip};

use crate::error::{Error, Result};
use crate::recon::Volume;
use crate::scalar::Real;

const ALPHA: f64 = 0.5;
const BETA: f64 = 0.5;

#[derive(Clone, Copy)]
enum Order {
    Smooth,
    First,
    Second,
}

fn taps(sigma: f64, order: Order) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let xs: Vec<f64> = (-radius..=radius).map(|k| k as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = g.iter().sum();
    let s2 = sigma * sigma;
    match order {
        Order::Smooth => g.iter().map(|v| v / norm).collect(),
        Order::First => xs.iter().zip(&g).map(|(x, v)| -x / s2 * v / norm).collect(),
        Order::Second => {
            let mut t: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| (x * x / (s2 * s2) - 1.0 / s2) * v / norm).collect();
            // exact zero response to constants despite truncation
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            t.iter_mut().for_each(|v| *v -= mean);
            t
        }
    }
}

/// Correlates every lane along `axis` with `taps`, clamping at the borders.
fn filter_axis(input: &Array3<f64>, taps: &[f64], axis: usize) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros(input.raw_dim());
    let radius = (taps.len() / 2) as i64;
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(input.lanes(Axis(axis)))
        .par_for_each(|mut o, i| {
            let n = i.len() as i64;
            for r in 0..n {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let idx = (r + k as i64 - radius).clamp(0, n - 1);
                    acc += t * i[idx as usize];
                }
                o[r as usize] = acc;
            }
        });
    out
}

fn separable(input: &Array3<f64>, orders: [Order; 3], sigma: f64) -> Array3<f64> {
    let mut v = filter_axis(input, &taps(sigma, orders[0]), 0);
    v = filter_axis(&v, &taps(sigma, orders[1]), 1);
    filter_axis(&v, &taps(sigma, orders[2]), 2)
}

/// Scale-normalized Hessian components `(xx, yy, zz, xy, xz, yz)`.
fn hessian(input: &Array3<f64>, sigma: f64) -> [Array3<f64>; 6] {
    use Order::*;
    let s2 = sigma * sigma;
    let mut h = [
        separable(input, [Second, Smooth, Smooth], sigma),
        separable(input, [Smooth, Second, Smooth], sigma),
        separable(input, [Smooth, Smooth, Second], sigma),
        separable(input, [First, First, Smooth], sigma),
        separable(input, [First, Smooth, First], sigma),
        separable(input, [Smooth, First, First], sigma),
    ];
    for c in h.iter_mut() {
        c.mapv_inplace(|v| v * s2);
    }
    h
}

/// Eigenvalues sorted by magnitude, `|l1| <= |l2| <= |l3|`.
fn sorted_eigenvalues(h: [f64; 6]) -> [f64; 3] {
    let m = Matrix3::new(h[0], h[3], h[4], h[3], h[1], h[5], h[4], h[5], h[2]);
    let e = m.symmetric_eigenvalues();
    let mut l = [e[0], e[1], e[2]];
    l.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    l
}

fn response(l: [f64; 3], c: f64) -> f64 {
    let [l1, l2, l3] = l;
    if l2 > 0.0 || l3 > 0.0 || l3 == 0.0 || l2 == 0.0 {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = l1.abs() / (l2 * l3).abs().sqrt();
    let s2 = l1 * l1 + l2 * l2 + l3 * l3;
    (1.0 - (-ra * ra / (2.0 * ALPHA * ALPHA)).exp())
        * (-rb * rb / (2.0 * BETA * BETA)).exp()
        * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

fn eigen_field(data: &Array3<f64>, sigma: f64) -> Array3<[f64; 3]> {
    let h = hessian(data, sigma);
    let mut eig = Array3::<[f64; 3]>::from_elem(data.raw_dim(), [0.0; 3]);
    Zip::indexed(&mut eig).par_for_each(|idx, e| *e = sorted_eigenvalues(h.each_ref().map(|c| c[idx])));
    eig
}

/// Vesselness at one scale; `sigma` is in voxels.
pub fn vesselness_at_scale(data: &Array3<f64>, sigma: f64) -> Array3<f64> {
    let eig = eigen_field(data, sigma);
    let max_norm = eig
        .iter()
        .map(|l| (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt())
        .fold(0.0f64, f64::max);
    let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // A Hessian at rounding level carries no structure; the adaptive c would blow it up.
    if max_norm <= 1e-9 * scale || max_norm == 0.0 {
        return Array3::zeros(data.raw_dim());
    }
    let c = 0.5 * max_norm;
    eig.mapv(|l| response(l, c))
}

/// Multi-scale maximum of the bright-tube vesselness over `sigmas` (voxels).
pub fn frangi<T: Real>(vol: &Volume<T>, sigmas: &[f64]) -> Result<Volume<f64>> {
    if sigmas.is_empty() {
        return Err(Error::Empty("Frangi scales".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::config(format!("Frangi scale must be positive, got {s}")));
    }
    let data = vol.data.mapv(|v| v.to64());
    let mut best = Array3::<f64>::zeros(data.raw_dim());
    for &s in sigmas {
        let v = vesselness_at_scale(&data, s);
        Zip::from(&mut best).and(&v).for_each(|b, &x| *b = b.max(x));
    }
    Volume::from_array(vol.grid.clone(), best)
}
