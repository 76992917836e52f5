//! Randomized invariant suites, one or more per module. Each runs a
//! deterministic proptest runner for `CASES` cases and reports the first
//! minimized counterexample.

use ndarray::{Array3, Array4};
use pact_core::compensation::{softmax_channels, synthesize, wiener_deconvolve, SirKernel};
use pact_core::config::RunConfig;
use pact_core::dataset::{sample_object, split_counts, SphereDistribution};
use pact_core::forward::{sir_spectrum, simulate, Mode, PressureTensor, Sphere};
use pact_core::geometry::{build_array, SystemConfig, TransducerPose, Vec3, VoxelGrid};
use pact_core::io::{read_pressure, write_pressure, TensorFile};
use pact_core::metrics::{dice, mann_whitney_one_sided, ncc, rse, shell_mask};
use pact_core::recon::{ubp, Volume};
use pact_core::spectral::FrequencyGrid;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};

pub const CASES: u32 = 100;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub fn suites() -> Vec<Suite> {
    vec![
        ("geometry: pose frames are orthonormal and invertible", pose_round_trip),
        ("forward: superposition in both modes", superposition),
        ("forward: amplitude scaling is exact", amplitude_scaling),
        ("forward: |SIR| <= 1 everywhere", sir_bounded),
        ("dataset: sampled objects respect the distribution bounds", object_bounds),
        ("dataset: split counts partition the samples", split_partition),
        ("compensation: softmax weights sum to one", softmax_sums),
        ("compensation: Wiener deconvolution is linear", wiener_linear),
        ("recon: UBP is linear", ubp_linear),
        ("metrics: shells are disjoint and nested", shell_disjoint),
        ("metrics: identity and symmetry of rse/ncc/dice", metric_identities),
        ("metrics: U-test p-values are probabilities", u_test_range),
        ("io: tensor file round trip is bit-exact", tensor_round_trip),
        ("config: resolved TOML round trips", config_round_trip),
    ]
}

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm))
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn small_system() -> SystemConfig {
    SystemConfig {
        n_elements: 2,
        n_views: 3,
        n_samples: 2048,
        ..SystemConfig::default()
    }
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn sphere() -> impl Strategy<Value = Sphere> {
    (-40.0..40.0f64, -40.0..40.0f64, -50.0..0.0f64, 0.2..3.0f64, 0.0..1.0f64)
        .prop_map(|(x, y, z, r, a)| Sphere::new([x, y, z], r, a))
}

fn pose_round_trip() -> Result<(), String> {
    run((60.0..120.0f64, 90.5..179.5f64, 0.0..360.0f64, prop::array::uniform3(-50.0..50.0f64)), |(rad, pol, az, l)| {
        let p = TransducerPose::on_sphere(rad, pol, az);
        let axes = [p.axis_x, p.axis_y, p.axis_z];
        for (i, a) in axes.iter().enumerate() {
            for (j, b) in axes.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((a.dot(*b) - want).abs() < 1e-12);
            }
        }
        prop_assert!((p.axis_x.cross(p.axis_y) - p.axis_z).norm() < 1e-12);
        let l = Vec3::new(l[0], l[1], l[2]);
        prop_assert!((p.global_to_local(p.local_to_global(l)) - l).norm() < 1e-9);
        Ok(())
    })
}

fn superposition() -> Result<(), String> {
    let cfg = small_system();
    run((prop::collection::vec(sphere(), 0..3), prop::collection::vec(sphere(), 0..3), prop::bool::ANY), |(a, b, rect)| {
        let mode = if rect { Mode::Rect } else { Mode::Point };
        let both: Vec<Sphere> = a.iter().chain(&b).cloned().collect();
        let pa = simulate::<f64>(&a, &cfg, mode).unwrap();
        let pb = simulate::<f64>(&b, &cfg, mode).unwrap();
        let pab = simulate::<f64>(&both, &cfg, mode).unwrap();
        for ((x, y), z) in pa.data.iter().zip(pb.data.iter()).zip(pab.data.iter()) {
            prop_assert!((x + y - z).abs() <= 1e-9);
        }
        Ok(())
    })
}

fn amplitude_scaling() -> Result<(), String> {
    let cfg = small_system();
    run((prop::collection::vec(sphere(), 1..3), prop::bool::ANY), |(s, rect)| {
        let mode = if rect { Mode::Rect } else { Mode::Point };
        let doubled: Vec<Sphere> = s.iter().map(|s| Sphere::new(s.center, s.radius, 2.0 * s.amplitude)).collect();
        let p = simulate::<f64>(&s, &cfg, mode).unwrap();
        let q = simulate::<f64>(&doubled, &cfg, mode).unwrap();
        for (x, y) in p.data.iter().zip(q.data.iter()) {
            prop_assert_eq!(2.0 * x, *y);
        }
        Ok(())
    })
}

fn sir_bounded() -> Result<(), String> {
    let cfg = small_system();
    let freqs = FrequencyGrid::for_config(&cfg);
    run(prop::array::uniform3(-80.0..80.0f64), |l| {
        let local = Vec3::new(l[0], l[1], l[2]);
        prop_assume!(local.norm() > 1e-3);
        let h = sir_spectrum(local, &cfg, &freqs).unwrap();
        prop_assert!((h[0] - 1.0).abs() < 1e-12);
        prop_assert!(h.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        Ok(())
    })
}

fn object_bounds() -> Result<(), String> {
    let dist = SphereDistribution {
        n_spheres: 50,
        ..SphereDistribution::default()
    };
    run(any::<u64>(), |seed| {
        let s = sample_object(&dist, seed).unwrap();
        prop_assert_eq!(s.len(), 50);
        for s in &s {
            prop_assert!(s.radius >= dist.radius_min && s.radius <= dist.radius_max);
            prop_assert!(s.amplitude >= dist.amplitude_min && s.amplitude <= dist.amplitude_max);
            prop_assert!(s.center.z <= 0.0 && s.center.norm() <= dist.region_radius);
        }
        prop_assert_eq!(sample_object(&dist, seed).unwrap(), s);
        Ok(())
    })
}

fn split_partition() -> Result<(), String> {
    run(1usize..10_000, |n| {
        let (a, b, c) = split_counts(n);
        prop_assert_eq!(a + b + c, n);
        prop_assert!((a as f64 - 0.7 * n as f64).abs() <= 0.5 + 1e-9);
        Ok(())
    })
}

fn softmax_sums() -> Result<(), String> {
    let shape = (1usize..6, 1usize..4, 1usize..4, 1usize..8);
    let strategy = shape.prop_flat_map(|(c, r, v, t)| {
        prop::collection::vec(-50.0..50.0f64, c * r * v * t).prop_map(move |d| Array4::from_shape_vec((c, r, v, t), d).unwrap())
    });
    run(strategy, |logits| {
        let w = softmax_channels(&logits);
        let sums = w.sum_axis(ndarray::Axis(0));
        prop_assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let out = synthesize(&logits, &w).unwrap();
        let lo = logits.fold_axis(ndarray::Axis(0), f64::MAX, |a, &b| a.min(b));
        prop_assert!(out.iter().zip(lo.iter()).all(|(o, l)| *o >= l - 1e-9));
        Ok(())
    })
}

fn wiener_linear() -> Result<(), String> {
    let cfg = SystemConfig {
        n_samples: 256,
        ..small_system()
    };
    let freqs = FrequencyGrid::for_config(&cfg);
    let traces = prop::collection::vec(-1.0..1.0f64, 256);
    run((traces.clone(), traces, -3.0..3.0f64, prop::array::uniform3(-20.0..20.0f64), -6.0..0.0f64), |(x, y, a, l, lg)| {
        let k = SirKernel::new(Vec3::new(l[0], l[1], 70.0 + l[2]), 10f64.powf(lg));
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let dx = wiener_deconvolve(&x, &k, &cfg, &freqs).unwrap();
        let dy = wiener_deconvolve(&y, &k, &cfg, &freqs).unwrap();
        let dz = wiener_deconvolve(&z, &k, &cfg, &freqs).unwrap();
        let err = l2(dx.iter().zip(&dy).zip(&dz).map(|((p, q), r)| a * p + q - r));
        prop_assert!(err <= 1e-9 * (1.0 + l2(dz.iter().copied())));
        Ok(())
    })
}

fn ubp_linear() -> Result<(), String> {
    let cfg = SystemConfig {
        n_samples: 2048,
        ..small_system()
    };
    let poses = build_array(&cfg).unwrap();
    let grid = VoxelGrid::covering([-10.0, -10.0, -20.0], 5.0, [4, 4, 4]);
    let n = cfg.n_elements * cfg.n_views * cfg.n_samples;
    let data = prop::collection::vec(-1.0..1.0f64, n);
    run((data.clone(), data, -2.0..2.0f64), |(x, y, a)| {
        let shape = (cfg.n_elements, cfg.n_views, cfg.n_samples);
        let p = PressureTensor::<f64>::from_array(Array3::from_shape_vec(shape, x).unwrap(), &cfg).unwrap();
        let q = PressureTensor::<f64>::from_array(Array3::from_shape_vec(shape, y).unwrap(), &cfg).unwrap();
        let mut r = q.clone();
        r.data = &p.data * a + &q.data;
        let (vp, vq, vr) = (
            ubp(&p, &poses, &grid, cfg.sos, cfg.dt).unwrap(),
            ubp(&q, &poses, &grid, cfg.sos, cfg.dt).unwrap(),
            ubp(&r, &poses, &grid, cfg.sos, cfg.dt).unwrap(),
        );
        let scale = 1.0 + l2(vr.data.iter().copied());
        let err = l2(vp.data.iter().zip(vq.data.iter()).zip(vr.data.iter()).map(|((p, q), r)| a * p + q - r));
        prop_assert!(err <= 1e-9 * scale);
        Ok(())
    })
}

fn shell_disjoint() -> Result<(), String> {
    let cfg = small_system();
    let grid = VoxelGrid::covering([-60.0, -60.0, -60.0], 6.0, [20, 20, 10]);
    run((0.0..30.0f64, 0.5..20.0f64, 0.5..20.0f64), |(a, w1, w2)| {
        let inner = shell_mask(&grid, &cfg, a, a + w1).unwrap();
        let outer = shell_mask(&grid, &cfg, a + w1, a + w1 + w2).unwrap();
        let union = shell_mask(&grid, &cfg, a, a + w1 + w2).unwrap();
        for ((i, o), u) in inner.mask.iter().zip(outer.mask.iter()).zip(union.mask.iter()) {
            prop_assert!(!(*i && *o));
            prop_assert_eq!(*i || *o, *u);
        }
        Ok(())
    })
}

fn metric_identities() -> Result<(), String> {
    let cfg = small_system();
    let grid = VoxelGrid::covering([-60.0, -60.0, -60.0], 8.0, [15, 15, 8]);
    let mask = shell_mask(&grid, &cfg, 25.0, 45.0).unwrap();
    let n = grid.len();
    let vol = prop::collection::vec(-1.0..1.0f64, n);
    run((vol.clone(), vol, prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)), |(x, y, a, b)| {
        let vx = Volume::from_array(grid.clone(), Array3::from_shape_vec(grid.dims, x).unwrap()).unwrap();
        let vy = Volume::from_array(grid.clone(), Array3::from_shape_vec(grid.dims, y).unwrap()).unwrap();
        prop_assert!(rse(&vx, &vx, &mask).unwrap().abs() < 1e-12);
        prop_assert!((ncc(&vx, &vx, &mask).unwrap() - 1.0).abs() < 1e-12);
        let c = ncc(&vx, &vy, &mask).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - ncc(&vy, &vx, &mask).unwrap()).abs() < 1e-12);
        let a = Array3::from_shape_vec(grid.dims, a).unwrap();
        let b = Array3::from_shape_vec(grid.dims, b).unwrap();
        prop_assume!(a.iter().any(|&v| v) && b.iter().any(|&v| v));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        Ok(())
    })
}

fn u_test_range() -> Result<(), String> {
    let sample = prop::collection::vec(-10.0..10.0f64, 1..30);
    run((sample.clone(), sample), |(a, b)| {
        let p = mann_whitney_one_sided(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        // a shifted far below b is always the most extreme arrangement
        let low: Vec<f64> = a.iter().map(|v| v - 100.0).collect();
        let q = mann_whitney_one_sided(&low, &b).unwrap();
        prop_assert!(q <= p + 1e-12);
        Ok(())
    })
}

fn tensor_round_trip() -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let dims = prop::collection::vec(1usize..6, 1..4);
    let strategy = dims.prop_flat_map(|d| {
        let n: usize = d.iter().product();
        (Just(d), prop::collection::vec(any::<f32>(), n), prop::option::of("[a-z {}:\"0-9]{0,40}"))
    });
    run(strategy, |(dims, data, meta)| {
        let t = TensorFile::new(dims, data, meta).unwrap();
        let path = dir.path().join("t.tns");
        t.write(&path).unwrap();
        let back = TensorFile::read(&path).unwrap();
        prop_assert_eq!(&back.dims, &t.dims);
        prop_assert_eq!(&back.metadata, &t.metadata);
        prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        Ok(())
    })?;
    let cfg = SystemConfig {
        n_samples: 16,
        ..small_system()
    };
    run(prop::collection::vec(-1e3..1e3f32, 2 * 3 * 16), |v| {
        let p = PressureTensor::<f32>::from_array(Array3::from_shape_vec((2, 3, 16), v).unwrap(), &cfg).unwrap();
        let path = dir.path().join("p.tns");
        write_pressure(&path, &p).unwrap();
        prop_assert_eq!(read_pressure::<f32>(&path).unwrap(), p);
        Ok(())
    })
}

fn config_round_trip() -> Result<(), String> {
    run((1.3..1.7f64, 1usize..500, 0.0..0.1f64, 1e-5..1e-1f64, 0.0..3.0f64), |(sos, n, noise, lr, fwhm)| {
        let mut c = RunConfig::preset("desk").unwrap();
        c.system.sos = sos;
        c.dataset.n_samples = n;
        c.dataset.noise_fraction = noise;
        c.train.lr = lr;
        c.recon.presmooth_fwhm = fwhm;
        prop_assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        Ok(())
    })
}
