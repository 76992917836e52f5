//! End-to-end acceptance run: every criterion at its stated tolerance, one
//! PASS/FAIL line each, nonzero exit if any fails.
//!
//! The learning criterion trains for up to `PACT_ACCEPT_TRAIN_SECONDS`
//! (default 4800 s) so that the whole criterion stays inside two hours.

mod invariants;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{s, Array3};
use pact_core::compensation::{init_model, mae_loss, mae_with_grad, forward_patch, patch_backward, train, wiener_deconvolve, DeconvNetModel, ModelGrad, SirKernel};
use pact_core::config::RunConfig;
use pact_core::dataset::{generate_dataset, Variant};
use pact_core::forward::{add_noise, noise_scale, simulate, sir_spectrum, sphere_trace_point, Mode, Sphere};
use pact_core::geometry::{build_array, desk_config, SystemConfig, TransducerPose, Vec3, VoxelGrid};
use pact_core::metrics::{dice, mann_whitney_one_sided, ncc, rse, shell_mask, triangle_threshold};
use pact_core::recon::Volume;
use pact_core::spectral::FrequencyGrid;
use pact_core::study::{evaluate_split, resolution_study, summarize, Method, ResolutionStudy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

type Outcome = Result<String, String>;

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

/// Spherical mean of the source indicator over the sphere of radius `r` about
/// `r0`, times 4 pi: tensor quadrature in azimuth with the polar boundary of
/// the intersection located by bisection along each meridian.
fn solid_angle(s: &Sphere, r0: Vec3, r: f64) -> f64 {
    const N_PHI: usize = 512;
    let axis = s.center - r0;
    let d = axis.norm();
    let e = axis * (1.0 / d);
    let helper = if e.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let u = {
        let c = e.cross(helper);
        c * (1.0 / c.norm())
    };
    let v = e.cross(u);
    let inside = |theta: f64, phi: f64| {
        let dir = e * theta.cos() + (u * phi.cos() + v * phi.sin()) * theta.sin();
        (r0 + dir * r - s.center).norm() <= s.radius
    };
    let mut total = 0.0;
    for k in 0..N_PHI {
        let phi = 2.0 * PI * (k as f64 + 0.5) / N_PHI as f64;
        if !inside(0.0, phi) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inside(mid, phi) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        // integral of sin(theta) over [0, lo], written to avoid cancellation
        total += 2.0 * (0.5 * lo).sin().powi(2) * (2.0 * PI / N_PHI as f64);
    }
    total
}

/// Volume-integral forward model for a point detector: `(A / 4 pi) d/dt [t Omega(t)]`,
/// differentiated with a fourth-order central stencil.
fn point_oracle(s: &Sphere, r0: Vec3, cfg: &SystemConfig) -> Vec<f64> {
    let c0 = cfg.sos;
    let h = 1e-5 * cfg.dt;
    let g = |t: f64| t * solid_angle(s, r0, c0 * t);
    let d = (s.center - r0).norm();
    (0..cfg.n_samples)
        .map(|i| {
            let t = i as f64 * cfg.dt;
            let far = (d - c0 * t).abs() - s.radius;
            if far > 4.0 * c0 * h {
                return 0.0;
            }
            let deriv = (-g(t + 2.0 * h) + 8.0 * g(t + h) - 8.0 * g(t - h) + g(t - 2.0 * h)) / (12.0 * h);
            s.amplitude / (4.0 * PI) * deriv
        })
        .collect()
}

/// Aperture average of point traces over the element face, midpoint rule.
fn rect_oracle(s: &Sphere, pose: &TransducerPose, cfg: &SystemConfig) -> Vec<f64> {
    const NA: usize = 64;
    const NB: usize = 320;
    let mut acc = vec![0.0; cfg.n_samples];
    for i in 0..NA {
        for j in 0..NB {
            let x = cfg.elem_a * ((i as f64 + 0.5) / NA as f64 - 0.5);
            let y = cfg.elem_b * ((j as f64 + 0.5) / NB as f64 - 0.5);
            let sub = TransducerPose {
                center: pose.local_to_global(Vec3::new(x, y, 0.0)),
                ..*pose
            };
            for (a, v) in acc.iter_mut().zip(sphere_trace_point(s, &sub, cfg).unwrap()) {
                *a += v;
            }
        }
    }
    acc.iter().map(|v| v / (NA * NB) as f64).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config("desk").unwrap();
    let poses = build_array(&cfg).unwrap();
    let (element, view) = (12, 5);
    let pose = poses[view * cfg.n_elements + element];
    let mut worst_rect: f64 = 0.0;
    let mut worst_point: f64 = 0.0;
    let mut notes = Vec::new();
    for local in [Vec3::new(0.0, 0.0, 40.0), Vec3::new(3.0, 6.0, 40.0), Vec3::new(5.0, 12.0, 60.0), Vec3::new(-8.0, 4.0, 80.0)] {
        let s = Sphere::new(pose.local_to_global(local), 1.2, 1.0);
        let point = simulate::<f64>(&[s], &cfg, Mode::Point).unwrap();
        let rect = simulate::<f64>(&[s], &cfg, Mode::Rect).unwrap();
        let got_p: Vec<f64> = point.trace(element, view).to_vec();
        let got_r: Vec<f64> = rect.trace(element, view).to_vec();
        let ep = rel_l2(&got_p, &point_oracle(&s, pose.center, &cfg));
        let er = rel_l2(&got_r, &rect_oracle(&s, &pose, &cfg));
        notes.push(format!("d={:.0} rect {:.2}% point {:.1e}", local.norm(), 100.0 * er, ep));
        worst_rect = worst_rect.max(er);
        worst_point = worst_point.max(ep);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_rect <= 0.03 && worst_point <= 1e-3 && secs < 60.0, notes.join(", "))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let cfg = desk_config("desk").unwrap();
    let freqs = FrequencyGrid::for_config(&cfg);
    let n_fft = freqs.n_fft;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for local in [Vec3::new(0.5, 0.8, 80.0), Vec3::new(1.0, -1.5, 60.0)] {
        let h = sir_spectrum(local, &cfg, &freqs).unwrap();
        // band limit: stay where the kernel keeps at least a tenth of its gain
        let band = h.iter().position(|v| v.abs() < 0.1).unwrap_or(h.len()).min(h.len() / 2);
        let len = cfg.n_samples / 2;
        let tones: Vec<(f64, f64, f64)> = (0..20)
            .map(|_| (rng.random_range(1.0..band as f64 - 1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let mut x = vec![0.0; cfg.n_samples];
        for (i, xi) in x.iter_mut().take(len).enumerate() {
            let w = (PI * i as f64 / len as f64).sin().powi(2);
            *xi = w * tones.iter().map(|(k, a, p)| a * (2.0 * PI * k * i as f64 / n_fft as f64 + p).cos()).sum::<f64>();
        }
        // forward filter on the padded axis with an independent complex FFT
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex<f64>> = (0..n_fft).map(|i| Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        planner.plan_fft_forward(n_fft).process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            *b *= h[k.min(n_fft - k)];
        }
        planner.plan_fft_inverse(n_fft).process(&mut buf);
        let y: Vec<f64> = buf[..cfg.n_samples].iter().map(|c| c.re / n_fft as f64).collect();
        let back = wiener_deconvolve(&y, &SirKernel::new(local, 1e-8), &cfg, &freqs).unwrap();
        worst = worst.max(rel_l2(&back, &x));
    }
    check(worst <= 1e-3, format!("worst relative L2 {worst:.2e}"))
}

// ------------------------------------------------------------ criteria 3 and 4

fn fwhms(study: &ResolutionStudy, v: Variant, m: Method) -> Vec<f64> {
    study.fwhm(v, m).into_iter().map(|f| f.unwrap_or(f64::NAN)).collect()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(" ")
}

fn oracle_at_55(study: &ResolutionStudy, v: Variant) -> (bool, f64) {
    let f = *fwhms(study, v, Method::Oracle).last().unwrap();
    ((0.4..=0.65).contains(&f), f)
}

fn criterion_3(cfg: &RunConfig) -> (Outcome, ResolutionStudy) {
    let start = Instant::now();
    let study = resolution_study::<f32>(&cfg.system, &[Variant::Baseline], None, &cfg.eval, 3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rect = fwhms(&study, Variant::Baseline, Method::Rect);
    let point = fwhms(&study, Variant::Baseline, Method::Point);
    let increasing = rect.windows(2).all(|w| w[1] > w[0]);
    let point_ok = point.iter().all(|f| (f - 0.505).abs() <= 0.05);
    let (oracle_ok, f55) = oracle_at_55(&study, Variant::Baseline);
    let detail = format!(
        "(a) rect [{}] {} (b) point [{}] {} (c) oracle at 55 mm {f55:.3} {} ({secs:.0} s)",
        fmt(&rect),
        if increasing { "increasing" } else { "NOT increasing" },
        fmt(&point),
        if point_ok { "ok" } else { "out of 0.505 +- 0.05" },
        if oracle_ok { "ok" } else { "outside [0.4, 0.65]" },
    );
    (check(increasing && point_ok && oracle_ok && secs < 600.0, detail), study)
}

fn criterion_4(cfg: &RunConfig, baseline: &ResolutionStudy) -> Outcome {
    let others = [Variant::HighNoise, Variant::LowSos, Variant::HighSos];
    let study = resolution_study::<f32>(&cfg.system, &others, None, &cfg.eval, 3).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for v in Variant::ALL {
        let s = if v == Variant::Baseline { baseline } else { &study };
        let (pass, f) = oracle_at_55(s, v);
        ok &= pass;
        notes.push(format!("{} {f:.3}", v.as_str()));
    }
    check(ok, format!("oracle FWHM at 55 mm: {}", notes.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let budget: f64 = std::env::var("PACT_ACCEPT_TRAIN_SECONDS").ok().and_then(|v| v.parse().ok()).unwrap_or(4800.0);
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(64, &cfg.system, &cfg.dataset.distribution, cfg.dataset.noise_fraction, 5, dir.path()).unwrap();
    let mut model_cfg = cfg.model.clone();
    model_cfg.n_kernels = 16;
    let model = init_model::<f32>(&model_cfg, &manifest.config, 5).unwrap();
    let mut hp = cfg.train.clone();
    hp.max_seconds = budget;
    let (model, history) = train(model, &manifest, &hp).unwrap();
    let ratio = history.best_val_mae() / history.identity_val_mae;
    println!("  training: {} epochs, best validation MAE {ratio:.3} x identity", history.epochs.len() - 1);
    let rows = evaluate_split(&manifest, &model, &cfg.recon, &cfg.eval).unwrap();
    let summary = summarize(&rows, &[[25.0, 35.0]]).unwrap();
    let m = &summary[0];
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "val MAE {ratio:.3} x identity (need <= 0.7); shell 25-35: RSE {:.3} -> {:.3} (p {:.2e}), NCC {:.3} -> {:.3} (p {:.2e}), improved both on {}/{} samples; {secs:.0} s",
        m.mean_rse[0], m.mean_rse[1], m.p_rse, m.mean_ncc[0], m.mean_ncc[1], m.p_ncc, m.improved_both, m.n
    );
    let ok = ratio <= 0.7 && m.improved_both == m.n && m.p_rse < 0.05 && m.p_ncc < 0.05 && secs < 7200.0;
    check(ok, detail)
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(cfg: &RunConfig) -> Outcome {
    let system = &cfg.system;
    let mut model_cfg = cfg.model.clone();
    model_cfg.n_kernels = 16;
    let mut m: DeconvNetModel<f64> = init_model(&model_cfg, system, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in m.kernels.iter_mut() {
        k.log_lambda += rng.random_range(-1.0..1.0);
    }
    m.net.params.iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
    // a fixed patch of simulated data, scaled to unit RMS
    let spheres: Vec<Sphere> = (0..30)
        .map(|_| {
            let c = [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-40.0..-5.0)];
            Sphere::new(c, rng.random_range(0.3..2.0), rng.random_range(0.0..1.0))
        })
        .collect();
    let rect = simulate::<f64>(&spheres, system, Mode::Rect).unwrap();
    let rect = add_noise(&rect, noise_scale(&rect, 0.0267).unwrap(), 6).unwrap();
    let point = simulate::<f64>(&spheres, system, Mode::Point).unwrap();
    let (nr, nv) = (model_cfg.patch.n_r_patch, model_cfg.patch.n_v_patch);
    let p: Array3<f64> = rect.data.slice(s![4..4 + nr, 0..nv, ..]).to_owned();
    let t: Array3<f64> = point.data.slice(s![4..4 + nr, 0..nv, ..]).to_owned();
    let scale = 1.0 / (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt();
    let (p, t) = (p * scale, t * scale);
    // compensated summation: plain accumulation over ~10^5 residuals leaves
    // roundoff that swamps difference quotients of the smaller gradients
    let loss = |m: &DeconvNetModel<f64>| {
        let o = forward_patch(m, p.view()).unwrap();
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for (a, b) in o.iter().zip(t.iter()) {
            let x = (a - b).abs();
            let s = sum + x;
            carry += if sum.abs() >= x { (sum - s) + x } else { (x - s) + sum };
            sum = s;
        }
        (sum + carry) / o.len() as f64
    };
    let plain = mae_loss(forward_patch(&m, p.view()).unwrap().view(), t.view()).unwrap();
    assert!((plain - loss(&m)).abs() <= 1e-12 * plain);
    let mut g = ModelGrad::zeros(&m);
    patch_backward(&m, p.view(), |o| mae_with_grad(o, t.view()), &mut g).unwrap();
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-12);
    let mut worst: f64 = 0.0;
    // steps small enough that few of the ~10^5 residuals change sign inside the
    // stencil, where the MAE kink would bias the difference quotient
    for k in 0..m.n_kernels() {
        let h = 1e-7;
        let (mut a, mut b) = (m.clone(), m.clone());
        a.kernels[k].log_lambda += h;
        b.kernels[k].log_lambda -= h;
        let fd = (loss(&a) - loss(&b)) / (2.0 * h);
        worst = worst.max(rel(fd, g.log_lambda[k]));
    }
    let worst_lambda = worst;
    for _ in 0..10 {
        let i = rng.random_range(0..m.net.params.len());
        let h = 1e-8;
        let (mut a, mut b) = (m.clone(), m.clone());
        a.net.params[i] += h;
        b.net.params[i] -= h;
        let fd = (loss(&a) - loss(&b)) / (2.0 * h);
        worst = worst.max(rel(fd, g.net[i]));
    }
    check(worst <= 1e-3, format!("worst relative error: lambda {worst_lambda:.1e}, overall {worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let cfg = SystemConfig::default();
    let grid = VoxelGrid::covering([-60.0, -60.0, -60.0], 4.0, [30, 30, 15]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Volume::from_array(grid.clone(), Array3::from_shape_fn(grid.dims, |_| rng.random_range(-1.0..1.0f64))).unwrap();
    let mask = shell_mask(&grid, &cfg, 25.0, 35.0).unwrap();
    let r = rse(&x, &x, &mask).unwrap();
    let c = ncc(&x, &x, &mask).unwrap();
    let a = Array3::from_shape_fn(grid.dims, |(i, j, k)| (i + 2 * j + k) % 3 == 0);
    let d = dice(&a, &a).unwrap();
    let p = mann_whitney_one_sided(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
    // tall narrow mode on [0, 0.2] and a low broad mode on [0.6, 1]
    let mut values = Vec::new();
    for i in 0..2000 {
        // triangular on [0, 0.2] with its mode at 0.1
        let u = (i as f64 + 0.5) / 2000.0;
        values.push(if u < 0.5 { (0.02 * u).sqrt() } else { 0.2 - (0.02 * (1.0 - u)).sqrt() });
    }
    values.extend((0..200).map(|i| 0.6 + 0.4 * (i as f64 + 0.5) / 200.0));
    let t = triangle_threshold(&values).unwrap();
    let separates = values.iter().all(|&v| (v < 0.2) == (v < t)) && t < 0.6;
    let ok = r == 0.0 && (c - 1.0).abs() < 1e-12 && d == 1.0 && (p - 1.0 / 6.0).abs() < 1e-12 && separates;
    check(ok, format!("rse {r:e}, ncc {c}, dice {d}, U-test p {p:.6} (1/6 = {:.6}), triangle threshold {t:.3}", 1.0 / 6.0))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut failed = Vec::new();
    let suites = invariants::suites();
    for (name, suite) in &suites {
        if let Err(e) = suite() {
            failed.push(format!("{name}: {e}"));
        }
    }
    check(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} suites x {} cases", suites.len(), invariants::CASES)
        } else {
            failed.join("; ")
        },
    )
}

fn report(n: usize, title: &str, start: Instant, outcome: &Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n} {tag}: {title} [{secs:.1} s] {detail}");
    outcome.is_ok()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = RunConfig::preset("desk").unwrap();
    // e.g. PACT_ACCEPT_ONLY=1,2,7 while iterating; unset runs everything
    let only: Option<Vec<usize>> = std::env::var("PACT_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut all = true;
    let mut baseline = None;
    for n in [1, 2, 3, 4, 6, 7, 8, 5] {
        if !wanted(n) {
            println!("criterion {n} SKIPPED");
            continue;
        }
        let t = Instant::now();
        let (title, outcome) = match n {
            1 => ("forward model vs quadrature oracles", criterion_1()),
            2 => ("Wiener round trip", criterion_2()),
            3 => {
                let (o, study) = criterion_3(&cfg);
                baseline = Some(study);
                ("resolution study, baseline", o)
            }
            4 => {
                let study = match baseline.take() {
                    Some(s) => s,
                    None => resolution_study::<f32>(&cfg.system, &[Variant::Baseline], None, &cfg.eval, 3).unwrap(),
                };
                ("robustness sweep", criterion_4(&cfg, &study))
            }
            5 => ("learning sanity", criterion_5(&cfg)),
            6 => ("gradient check", criterion_6(&cfg)),
            7 => ("metric identities", criterion_7()),
            _ => ("invariant suites", criterion_8()),
        };
        all &= report(n, title, t, &outcome);
    }
    match (all, only.is_some()) {
        (true, false) => println!("acceptance: all criteria pass"),
        (true, true) => println!("acceptance: selected criteria pass (partial run)"),
        (false, _) => println!("acceptance: some criteria FAILED"),
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
