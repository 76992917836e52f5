//! Hemispherical depth shells and the masked image-fidelity metrics.

use ndarray::{Array3, Zip};

use crate::error::{Error, Result};
use crate::geometry::{SystemConfig, VoxelGrid};
use crate::recon::Volume;
use crate::scalar::Real;

/// Voxels at depth `inner <= R - |r| < outer` below the aperture (`z < 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ShellMask {
    pub grid: VoxelGrid,
    pub mask: Array3<bool>,
    pub inner: f64,
    pub outer: f64,
}

impl ShellMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn shell_mask(grid: &VoxelGrid, config: &SystemConfig, inner: f64, outer: f64) -> Result<ShellMask> {
    grid.validate()?;
    if !(inner < outer) {
        return Err(Error::config(format!("shell bounds must satisfy inner < outer, got {inner}..{outer}")));
    }
    let radius = config.aperture_radius;
    let mask = Array3::from_shape_fn(grid.dims, |(i, j, k)| {
        let r = grid.position(i, j, k);
        let depth = radius - r.norm();
        r.z < 0.0 && depth >= inner && depth < outer
    });
    let shell = ShellMask {
        grid: grid.clone(),
        mask,
        inner,
        outer,
    };
    if shell.count() == 0 {
        return Err(Error::Empty(format!("shell {inner}..{outer} mm contains no voxels")));
    }
    Ok(shell)
}

fn masked_pairs<'a, T: Real>(
    vol: &'a Volume<T>,
    reference: &'a Volume<T>,
    mask: &'a ShellMask,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if vol.data.shape() != reference.data.shape() || vol.data.shape() != mask.mask.shape() {
        return Err(Error::Shape("volumes and mask must share a grid".into()));
    }
    if mask.count() == 0 {
        return Err(Error::Empty("mask".into()));
    }
    Ok(vol
        .data
        .iter()
        .zip(reference.data.iter())
        .zip(mask.mask.iter())
        .filter(|(_, &m)| m)
        .map(|((v, r), _)| (v.to64(), r.to64())))
}

/// `sum (v - r)^2 / sum r^2` over the mask.
pub fn rse<T: Real>(vol: &Volume<T>, reference: &Volume<T>, mask: &ShellMask) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, r) in masked_pairs(vol, reference, mask)? {
        num += (v - r).powi(2);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::Degenerate("reference is zero inside the mask".into()));
    }
    Ok(num / den)
}

/// Pearson correlation over the mask.
pub fn ncc<T: Real>(vol: &Volume<T>, reference: &Volume<T>, mask: &ShellMask) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = masked_pairs(vol, reference, mask)?.collect();
    let n = pairs.len() as f64;
    let mv = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mr = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut vv, mut rr) = (0.0, 0.0, 0.0);
    for (v, r) in pairs {
        cov += (v - mv) * (r - mr);
        vv += (v - mv).powi(2);
        rr += (r - mr).powi(2);
    }
    if vv == 0.0 || rr == 0.0 {
        return Err(Error::Degenerate("zero variance inside the mask".into()));
    }
    Ok(cov / (vv * rr).sqrt())
}

/// `2 |A n B| / (|A| + |B|)`, with two empty masks scoring 1.
pub fn dice(a: &Array3<bool>, b: &Array3<bool>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape("dice needs masks of equal shape".into()));
    }
    let (mut both, mut na, mut nb) = (0usize, 0usize, 0usize);
    Zip::from(a).and(b).for_each(|&x, &y| {
        both += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    });
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}
