//! Hemispherical measurement aperture, transducer frames, and voxel grids.
//!
//! Lengths are in mm, times in µs, speeds in mm/µs, angles in degrees at the
//! configuration boundary and radians internally.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Acquisition system: a transducer arc on a hemisphere rotated through `n_views`
/// azimuthal positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub aperture_radius: f64,
    pub polar_start: f64,
    pub polar_end: f64,
    pub n_elements: usize,
    pub n_views: usize,
    pub n_samples: usize,
    pub dt: f64,
    pub sos: f64,
    /// Element size along the arc (polar tangent).
    pub elem_a: f64,
    /// Element size along the view (azimuthal tangent).
    pub elem_b: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            aperture_radius: 85.0,
            polar_start: 90.25,
            polar_end: 170.25,
            n_elements: 96,
            n_views: 320,
            n_samples: 2267,
            dt: 0.05,
            sos: 1.5,
            elem_a: 1.2,
            elem_b: 6.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.aperture_radius, "aperture_radius")?;
        positive(self.dt, "dt")?;
        positive(self.sos, "sos")?;
        positive(self.elem_a, "elem_a")?;
        positive(self.elem_b, "elem_b")?;
        if !(self.polar_start > 0.0 && self.polar_start < self.polar_end && self.polar_end <= 180.0)
        {
            return Err(Error::config(format!(
                "polar span must satisfy 0 < start < end <= 180, got {}..{}",
                self.polar_start, self.polar_end
            )));
        }
        if self.n_elements == 0 || self.n_views == 0 || self.n_samples == 0 {
            return Err(Error::config(
                "n_elements, n_views and n_samples must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn n_transducers(&self) -> usize {
        self.n_elements * self.n_views
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_elements, self.n_views, self.n_samples]
    }

    /// Stable identifier over every field; ties tensors to the geometry that made them.
    pub fn config_hash(&self) -> String {
        let canonical = format!(
            "{:?}|{:?}|{:?}|{}|{}|{}|{:?}|{:?}|{:?}|{:?}",
            self.aperture_radius,
            self.polar_start,
            self.polar_end,
            self.n_elements,
            self.n_views,
            self.n_samples,
            self.dt,
            self.sos,
            self.elem_a,
            self.elem_b
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn polar_angle(&self, element: usize) -> f64 {
        if self.n_elements == 1 {
            return self.polar_start;
        }
        self.polar_start
            + element as f64 * (self.polar_end - self.polar_start) / (self.n_elements - 1) as f64
    }

    pub fn azimuth_angle(&self, view: usize) -> f64 {
        view as f64 * 360.0 / self.n_views as f64
    }

    pub fn time(&self, sample: usize) -> f64 {
        sample as f64 * self.dt
    }
}

/// Named system presets.
pub fn desk_config(preset: &str) -> Result<SystemConfig> {
    match preset {
        "full" => Ok(SystemConfig::default()),
        "desk" => Ok(SystemConfig {
            n_elements: 24,
            n_views: 64,
            n_samples: DESK_SAMPLES,
            ..SystemConfig::default()
        }),
        other => Err(Error::UnknownName {
            kind: "preset",
            name: other.to_string(),
        }),
    }
}

/// Record length of the desk preset: 102.4 µs covers every source-to-element
/// distance inside the 60 mm field of view (at most 145 mm plus a sphere radius).
pub const DESK_SAMPLES: usize = 2048;

/// Element center plus its local frame. `axis_x` runs along the short side `a`
/// (polar tangent), `axis_y` along the long side `b` (azimuthal tangent), and
/// `axis_z` is the inward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransducerPose {
    pub center: Vec3,
    pub axis_x: Vec3,
    pub axis_y: Vec3,
    pub axis_z: Vec3,
    /// Relative surface area of the element's cell on the hemisphere (`sin` of the polar angle).
    pub area_weight: f64,
}

impl TransducerPose {
    pub fn on_sphere(radius: f64, polar_deg: f64, azimuth_deg: f64) -> Self {
        let (st, ct) = polar_deg.to_radians().sin_cos();
        let (sp, cp) = azimuth_deg.to_radians().sin_cos();
        let radial = Vec3::new(st * cp, st * sp, ct);
        let e_polar = Vec3::new(ct * cp, ct * sp, -st);
        let e_azimuth = Vec3::new(-sp, cp, 0.0);
        // (-e_polar) x e_azimuth = -radial, so the frame is right-handed with an inward z.
        Self {
            center: radial * radius,
            axis_x: -e_polar,
            axis_y: e_azimuth,
            axis_z: -radial,
            area_weight: st.abs(),
        }
    }

    pub fn global_to_local(&self, r: Vec3) -> Vec3 {
        let d = r - self.center;
        Vec3::new(d.dot(self.axis_x), d.dot(self.axis_y), d.dot(self.axis_z))
    }

    pub fn local_to_global(&self, l: Vec3) -> Vec3 {
        self.center + self.axis_x * l.x + self.axis_y * l.y + self.axis_z * l.z
    }
}

/// Free-function form of [`TransducerPose::global_to_local`].
pub fn global_to_local(pose: &TransducerPose, r: Vec3) -> Vec3 {
    pose.global_to_local(r)
}

/// All element poses, view-major: index `view * n_elements + element`.
pub fn build_array(config: &SystemConfig) -> Result<Vec<TransducerPose>> {
    if config.n_elements == 0 || config.n_views == 0 {
        return Err(Error::config("array needs at least one element and one view"));
    }
    config.validate()?;
    let mut poses = Vec::with_capacity(config.n_transducers());
    for v in 0..config.n_views {
        let azimuth = config.azimuth_angle(v);
        for e in 0..config.n_elements {
            poses.push(TransducerPose::on_sphere(
                config.aperture_radius,
                config.polar_angle(e),
                azimuth,
            ));
        }
    }
    Ok(poses)
}

/// Regular isotropic grid of voxel centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Default for VoxelGrid {
    /// 480 x 480 x 240 voxels of 0.25 mm covering x, y in [-60, 60] and z in [-60, 0].
    fn default() -> Self {
        Self::covering([-60.0, -60.0, -60.0], 0.25, [480, 480, 240])
    }
}

impl VoxelGrid {
    /// Grid whose voxel cells tile the box starting at `corner`.
    pub fn covering(corner: [f64; 3], spacing: f64, dims: [usize; 3]) -> Self {
        let h = spacing / 2.0;
        Self {
            origin: [corner[0] + h, corner[1] + h, corner[2] + h],
            spacing,
            dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::config("voxel spacing must be positive"));
        }
        if self.dims.contains(&0) {
            return Err(Error::config("voxel grid dims must be at least 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2] + k as f64 * self.spacing,
        )
    }
}
