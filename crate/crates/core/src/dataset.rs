//! Stochastic-spheres objects, paired (rect, point) datasets with split
//! manifests, and the fixed six-sphere resolution phantom.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal as LogNormalCdf};

use crate::error::{Error, Result};
use crate::forward::{add_noise, noise_scale, simulate, Mode, PressureTensor, Sphere};
use crate::geometry::{SystemConfig, Vec3};
use crate::io::{read_pressure, write_pressure};
use crate::scalar::Real;

/// Noise level of the training data, relative to the 90th percentile of |rect data|.
pub const BASELINE_NOISE: f64 = 0.0267;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereDistribution {
    pub n_spheres: usize,
    /// Mean and standard deviation of the log-normal radius itself (mm).
    pub radius_mean: f64,
    pub radius_std: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Centers are uniform in the `z < 0` half of a ball of this radius (mm).
    pub region_radius: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
}

impl Default for SphereDistribution {
    fn default() -> Self {
        Self {
            n_spheres: 200,
            radius_mean: 0.375,
            radius_std: 1.0,
            radius_min: 0.125,
            radius_max: 5.0,
            region_radius: 60.0,
            amplitude_min: 0.0,
            amplitude_max: 0.02,
        }
    }
}

impl SphereDistribution {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.radius_mean) && pos(self.radius_std)) {
            return Err(Error::config("radius mean and std must be positive"));
        }
        if !(pos(self.radius_min) && self.radius_min < self.radius_max && self.radius_max.is_finite()) {
            return Err(Error::config(format!(
                "radius bounds must satisfy 0 < min < max, got [{}, {}]",
                self.radius_min, self.radius_max
            )));
        }
        if !pos(self.region_radius) {
            return Err(Error::config("region radius must be positive"));
        }
        if !(self.amplitude_min.is_finite() && self.amplitude_max.is_finite() && self.amplitude_min <= self.amplitude_max)
        {
            return Err(Error::config("amplitude bounds must satisfy min <= max"));
        }
        Ok(())
    }

    /// `(mu, sigma)` of the underlying normal, matching the variate's mean and std.
    pub fn lognormal_params(&self) -> (f64, f64) {
        let (m, s) = (self.radius_mean, self.radius_std);
        let mu = (m * m / (m * m + s * s).sqrt()).ln();
        let sigma = (1.0 + s * s / (m * m)).ln().sqrt();
        (mu, sigma)
    }

    /// CDF of the radius after truncation to `[radius_min, radius_max]`.
    pub fn truncated_cdf(&self, r: f64) -> f64 {
        let (mu, sigma) = self.lognormal_params();
        let d = LogNormalCdf::new(mu, sigma).expect("validated parameters");
        let (lo, hi) = (d.cdf(self.radius_min), d.cdf(self.radius_max));
        ((d.cdf(r.clamp(self.radius_min, self.radius_max)) - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    fn acceptance(&self) -> f64 {
        let (mu, sigma) = self.lognormal_params();
        let d = LogNormalCdf::new(mu, sigma).expect("validated parameters");
        d.cdf(self.radius_max) - d.cdf(self.radius_min)
    }
}

/// Draws one object: log-normal radii truncated by rejection, centers uniform in
/// the lower half-ball, amplitudes uniform. Overlaps are allowed.
pub fn sample_object(dist: &SphereDistribution, seed: u64) -> Result<Vec<Sphere>> {
    dist.validate()?;
    if dist.acceptance() < 1e-9 {
        return Err(Error::config(format!(
            "radius truncation [{}, {}] has negligible probability under the log-normal",
            dist.radius_min, dist.radius_max
        )));
    }
    let (mu, sigma) = dist.lognormal_params();
    let radii = LogNormal::new(mu, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big = dist.region_radius;
    let mut out = Vec::with_capacity(dist.n_spheres);
    for _ in 0..dist.n_spheres {
        let radius = loop {
            let r: f64 = radii.sample(&mut rng);
            if r >= dist.radius_min && r <= dist.radius_max {
                break r;
            }
        };
        let center = loop {
            let c = Vec3::new(
                rng.random_range(-big..big),
                rng.random_range(-big..big),
                rng.random_range(-big..0.0),
            );
            if c.norm() < big && c.z < 0.0 {
                break c;
            }
        };
        let amplitude = if dist.amplitude_min == dist.amplitude_max {
            dist.amplitude_min
        } else {
            rng.random_range(dist.amplitude_min..dist.amplitude_max)
        };
        out.push(Sphere::new(center, radius, amplitude));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::UnknownName {
                kind: "split",
                name: s.into(),
            }),
        }
    }
}

/// 70/10/20 by rounding, the remainder going to the test split.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = ((0.7 * n as f64).round() as usize).min(n);
    let val = ((0.1 * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    /// Relative to the manifest's root.
    pub input: PathBuf,
    pub target: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub config: SystemConfig,
    pub distribution: SphereDistribution,
    pub noise_fraction: f64,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn load_pair<T: Real>(&self, entry: &ManifestEntry) -> Result<(PressureTensor<T>, PressureTensor<T>)> {
        let input = read_pressure(&self.root.join(&entry.input))?;
        let target = read_pressure(&self.root.join(&entry.target))?;
        input.check_matches(&self.config)?;
        target.check_matches(&self.config)?;
        Ok((input, target))
    }

    /// Spheres that generated `entry`, stored next to its tensors.
    pub fn load_spheres(&self, entry: &ManifestEntry) -> Result<Vec<Sphere>> {
        read_spheres(&self.root.join(spheres_path(&entry.id)))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# seed = {}", self.seed).unwrap();
        writeln!(s, "# noise_fraction = {}", self.noise_fraction).unwrap();
        writeln!(s, "# system = {}", json(&self.config)).unwrap();
        writeln!(s, "# distribution = {}", json(&self.distribution)).unwrap();
        for e in &self.entries {
            writeln!(
                s,
                "{}\t{}\t{}\t{}",
                e.id,
                e.split.as_str(),
                e.input.display(),
                e.target.display()
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    /// Reads `dir/manifest.tsv` (or the given file) and resolves paths against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let bad = |reason: String| Error::Format {
            path: file.clone(),
            reason,
        };
        let mut seed = None;
        let mut noise = None;
        let mut config = None;
        let mut distribution = None;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {}: header without `=`", lineno + 1)))?;
                let v = v.trim();
                let parse_err = |e: String| bad(format!("line {}: {e}", lineno + 1));
                match k.trim() {
                    "seed" => seed = Some(v.parse::<u64>().map_err(|e| parse_err(e.to_string()))?),
                    "noise_fraction" => noise = Some(v.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
                    "system" => config = Some(serde_json::from_str(v).map_err(|e| parse_err(e.to_string()))?),
                    "distribution" => distribution = Some(serde_json::from_str(v).map_err(|e| parse_err(e.to_string()))?),
                    other => return Err(parse_err(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(format!("line {}: expected 4 tab-separated fields", lineno + 1)));
            }
            entries.push(ManifestEntry {
                id: f[0].into(),
                split: f[1].parse()?,
                input: f[2].into(),
                target: f[3].into(),
            });
        }
        let missing = |k: &str| bad(format!("missing `{k}` header"));
        Ok(Self {
            root: file.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
            seed: seed.ok_or_else(|| missing("seed"))?,
            config: config.ok_or_else(|| missing("system"))?,
            distribution: distribution.ok_or_else(|| missing("distribution"))?,
            noise_fraction: noise.ok_or_else(|| missing("noise_fraction"))?,
        })
    }
}

fn json<S: Serialize>(v: &S) -> String {
    serde_json::to_string(v).expect("plain config structs serialize")
}

/// Independent seed for `(seed, stream, purpose)`.
pub fn substream_seed(seed: u64, stream: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(purpose as u128 * 16);
    rng.next_u64()
}

const PURPOSE_OBJECT: u64 = 0;
const PURPOSE_NOISE: u64 = 1;
const PURPOSE_SPLIT: u64 = 2;

fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

fn spheres_path(id: &str) -> PathBuf {
    PathBuf::from("samples").join(format!("{id}_spheres.tsv"))
}

/// Tab-separated `x y z radius amplitude`, one sphere per line.
pub fn write_spheres(path: &Path, spheres: &[Sphere]) -> Result<()> {
    let mut s = String::from("# x\ty\tz\tradius\tamplitude\n");
    for sp in spheres {
        // `{:?}` prints the shortest round-tripping representation
        writeln!(
            s,
            "{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            sp.center.x, sp.center.y, sp.center.z, sp.radius, sp.amplitude
        )
        .unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_spheres(path: &Path) -> Result<Vec<Sphere>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        if v.len() != 5 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: expected x y z radius amplitude", lineno + 1),
            });
        }
        let s = Sphere::new([v[0], v[1], v[2]], v[3], v[4]);
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

/// Noisy rect input and noiseless point target for one object.
pub fn simulate_pair(
    spheres: &[Sphere],
    config: &SystemConfig,
    noise_fraction: f64,
    noise_seed: u64,
) -> Result<(PressureTensor<f64>, PressureTensor<f64>)> {
    let rect = simulate::<f64>(spheres, config, Mode::Rect)?;
    let point = simulate::<f64>(spheres, config, Mode::Point)?;
    let input = if noise_fraction > 0.0 {
        let sigma = noise_scale(&rect, noise_fraction)?;
        add_noise(&rect, sigma, noise_seed)?
    } else {
        rect
    };
    Ok((input, point))
}

/// Writes `n` sample pairs under `out/samples/` and the manifest at `out/manifest.tsv`.
pub fn generate_dataset(
    n: usize,
    config: &SystemConfig,
    dist: &SphereDistribution,
    noise_fraction: f64,
    seed: u64,
    out: &Path,
) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::Empty("dataset must contain at least one sample".into()));
    }
    config.validate()?;
    dist.validate()?;
    if !(noise_fraction >= 0.0 && noise_fraction.is_finite()) {
        return Err(Error::config(format!("noise fraction must be nonnegative, got {noise_fraction}")));
    }
    let samples = out.join("samples");
    fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;

    let mut order: Vec<usize> = (0..n).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, u64::MAX, PURPOSE_SPLIT));
        order.shuffle(&mut rng);
    }
    let (n_train, n_val, _) = split_counts(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let entries: Vec<ManifestEntry> = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = sample_id(i);
            let spheres = sample_object(dist, substream_seed(seed, i as u64, PURPOSE_OBJECT))?;
            let (input, target) =
                simulate_pair(&spheres, config, noise_fraction, substream_seed(seed, i as u64, PURPOSE_NOISE))?;
            let input_rel = PathBuf::from("samples").join(format!("{id}_input.tns"));
            let target_rel = PathBuf::from("samples").join(format!("{id}_target.tns"));
            write_pressure(&out.join(&input_rel), &input)?;
            write_pressure(&out.join(&target_rel), &target)?;
            write_spheres(&out.join(spheres_path(&id)), &spheres)?;
            log::debug!("generated sample {id}");
            Ok(ManifestEntry {
                id,
                split: splits[i],
                input: input_rel,
                target: target_rel,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
        seed,
        config: config.clone(),
        distribution: dist.clone(),
        noise_fraction,
    };
    manifest.write()?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    HighNoise,
    LowSos,
    HighSos,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::HighNoise, Variant::LowSos, Variant::HighSos];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::HighNoise => "high_noise",
            Variant::LowSos => "low_sos",
            Variant::HighSos => "high_sos",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "variant",
                name: s.into(),
            })
    }
}

/// Six spheres of radius 1.2 mm at `(10n - 5, 0, -2)` mm, with the variant's
/// sound speed applied to `base` and its noise fraction.
pub fn deterministic_spheres(variant: Variant, base: &SystemConfig) -> (Vec<Sphere>, SystemConfig, f64) {
    let spheres = (1..=6)
        .map(|n| Sphere::new([10.0 * n as f64 - 5.0, 0.0, -2.0], 1.2, 1.0))
        .collect();
    let (sos, noise) = match variant {
        Variant::Baseline => (1.5, BASELINE_NOISE),
        Variant::HighNoise => (1.5, 10.0 * BASELINE_NOISE),
        Variant::LowSos => (1.447, BASELINE_NOISE),
        Variant::HighSos => (1.555, BASELINE_NOISE),
    };
    (spheres, SystemConfig { sos, ..base.clone() }, noise)
}
