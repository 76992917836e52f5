//! End-to-end experiments: the six-sphere resolution study and the held-out
//! image-quality evaluation of a compensation model.

use std::fmt::Write as _;

use crate::compensation::{infer_full, oracle_compensate, DeconvNetModel};
use crate::config::{EvalConfig, ReconConfig};
use crate::dataset::{deterministic_spheres, substream_seed, Manifest, Split, Variant};
use crate::error::{Error, Result};
use crate::forward::{add_noise, noise_scale, simulate, Mode, PressureTensor};
use crate::geometry::{build_array, SystemConfig, Vec3};
use crate::metrics::{dice, fit_fwhm_with, frangi, mann_whitney_one_sided, ncc, rse, shell_mask, triangle_threshold, FwhmOptions, ShellMask};
use crate::recon::{presmooth, ubp, ubp_points, Volume};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rect,
    Compensated,
    Oracle,
    Point,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rect, Method::Compensated, Method::Oracle, Method::Point];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rect => "rect",
            Method::Compensated => "compensated",
            Method::Oracle => "oracle-kernel",
            Method::Point => "point",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionRow {
    pub variant: Variant,
    pub method: Method,
    /// Sphere center x, mm.
    pub x: f64,
    /// `None` when there is no model or the fit was rejected.
    pub fwhm: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub variant: Variant,
    pub method: Method,
    pub x: f64,
    pub y: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResolutionStudy {
    pub rows: Vec<ResolutionRow>,
    pub profiles: Vec<Profile>,
}

impl ResolutionStudy {
    pub fn fwhm(&self, variant: Variant, method: Method) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .filter(|r| r.variant == variant && r.method == method)
            .map(|r| r.fwhm)
            .collect()
    }

    pub fn table_tsv(&self) -> String {
        let mut s = String::from("variant\tmethod\tx_mm\tfwhm_mm\tresidual\n");
        let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            writeln!(s, "{}\t{}\t{}\t{}\t{}", r.variant.as_str(), r.method.as_str(), r.x, na(r.fwhm), na(r.residual)).unwrap();
        }
        s
    }

    pub fn profiles_tsv(&self) -> String {
        let mut s = String::from("variant\tmethod\tx_mm\ty_mm\tvalue\n");
        for p in &self.profiles {
            for (y, v) in p.y.iter().zip(&p.value) {
                writeln!(s, "{}\t{}\t{}\t{y:.3}\t{v:e}", p.variant.as_str(), p.method.as_str(), p.x).unwrap();
            }
        }
        s
    }
}

/// Applies a model trained for `model.system` to data from a system differing
/// only in sound speed, as in the sound-speed robustness variants.
fn compensate_foreign<T: Real>(model: &DeconvNetModel<T>, p: &PressureTensor<f64>) -> Result<PressureTensor<f64>> {
    if p.shape() != model.system.shape() {
        return Err(Error::Shape(format!("data {:?} vs model system {:?}", p.shape(), model.system.shape())));
    }
    let tagged = PressureTensor::<T> {
        data: p.data.mapv(|v| T::of(v)),
        config_hash: model.config_hash(),
    };
    Ok(infer_full(model, &tagged)?.cast())
}

/// FWHM of each phantom sphere's y-profile for every method and variant. The
/// compensated method is skipped (rows with `None`) without a model.
pub fn resolution_study<T: Real>(
    base: &SystemConfig,
    variants: &[Variant],
    model: Option<&DeconvNetModel<T>>,
    eval: &EvalConfig,
    seed: u64,
) -> Result<ResolutionStudy> {
    let mut study = ResolutionStudy::default();
    let n_prof = (2.0 * eval.profile_half_length / eval.profile_step).round() as usize + 1;
    let ys: Vec<f64> = (0..n_prof).map(|i| -eval.profile_half_length + eval.profile_step * i as f64).collect();
    let opts = FwhmOptions {
        fixed_half_width: Some(eval.sphere_half_width),
        ..FwhmOptions::default()
    };
    for &variant in variants {
        let (spheres, cfg, noise) = deterministic_spheres(variant, base);
        let poses = build_array(&cfg)?;
        let clean = simulate::<f64>(&spheres, &cfg, Mode::Rect)?;
        let sigma = noise_scale(&clean, noise)?;
        let rect = add_noise(&clean, sigma, substream_seed(seed, variant as u64, 0))?;
        for method in Method::ALL {
            let data = match method {
                Method::Rect => Some(rect.clone()),
                Method::Point => Some(simulate::<f64>(&spheres, &cfg, Mode::Point)?),
                Method::Oracle => Some(oracle_compensate(&rect, &spheres, &cfg, eval.oracle_lambda)?),
                Method::Compensated => model.map(|m| compensate_foreign(m, &rect)).transpose()?,
            };
            let Some(data) = data else {
                log::info!("no model given: skipping the compensated method for {}", variant.as_str());
                study.rows.extend(spheres.iter().map(|s| ResolutionRow {
                    variant,
                    method,
                    x: s.center.x,
                    fwhm: None,
                    residual: None,
                }));
                continue;
            };
            let smooth = presmooth(&data, eval.study_presmooth_fwhm, cfg.sos, cfg.dt)?;
            for s in &spheres {
                let pts: Vec<Vec3> = ys.iter().map(|&y| Vec3::new(s.center.x, s.center.y + y, s.center.z)).collect();
                let value = ubp_points(&smooth, &poses, &pts, cfg.sos, cfg.dt)?;
                let fit = fit_fwhm_with(&ys, &value, opts);
                if let Err(e) = &fit {
                    log::warn!("{} {} x = {}: {e}", variant.as_str(), method.as_str(), s.center.x);
                }
                let fit = fit.ok();
                study.rows.push(ResolutionRow {
                    variant,
                    method,
                    x: s.center.x,
                    fwhm: fit.map(|f| f.fwhm),
                    residual: fit.map(|f| f.residual),
                });
                study.profiles.push(Profile {
                    variant,
                    method,
                    x: s.center.x,
                    y: ys.clone(),
                    value,
                });
            }
        }
    }
    Ok(study)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub sample: String,
    pub shell: [f64; 2],
    pub method: Method,
    pub rse: f64,
    pub ncc: f64,
    pub dice: f64,
}

/// Reconstructs with optional pre-smoothing.
pub fn reconstruct<T: Real>(p: &PressureTensor<T>, config: &SystemConfig, recon: &ReconConfig) -> Result<Volume<T>> {
    let poses = build_array(config)?;
    match recon.presmooth() {
        Some(f) => ubp(&presmooth(p, f, config.sos, config.dt)?, &poses, &recon.grid, config.sos, config.dt),
        None => ubp(p, &poses, &recon.grid, config.sos, config.dt),
    }
}

/// Vessel map: Frangi vesselness above its triangle threshold within the shell.
fn vessel_map(vesselness: &Volume<f64>, shell: &ShellMask) -> Result<ndarray::Array3<bool>> {
    let values: Vec<f64> = vesselness
        .data
        .iter()
        .zip(shell.mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    let t = triangle_threshold(&values)?;
    Ok(ndarray::Zip::from(&vesselness.data)
        .and(&shell.mask)
        .map_collect(|&v, &m| m && v > t))
}

/// RSE, NCC and vessel-map DICE against the point-data reconstruction in every
/// shell, for the rect and compensated reconstructions of one sample.
pub fn evaluate_sample<T: Real>(
    sample: &str,
    point: &Volume<T>,
    rect: &Volume<T>,
    compensated: &Volume<T>,
    config: &SystemConfig,
    eval: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    let vesselness = |v: &Volume<T>| frangi(v, &eval.frangi_sigmas);
    let ref_v = vesselness(point)?;
    let methods = [(Method::Rect, rect, vesselness(rect)?), (Method::Compensated, compensated, vesselness(compensated)?)];
    let mut rows = Vec::new();
    for &[inner, outer] in &eval.shells {
        let shell = shell_mask(&point.grid, config, inner, outer)?;
        let ref_map = vessel_map(&ref_v, &shell)?;
        for (method, vol, ves) in &methods {
            rows.push(EvalRow {
                sample: sample.to_string(),
                shell: [inner, outer],
                method: *method,
                rse: rse(vol, point, &shell)?,
                ncc: ncc(vol, point, &shell)?,
                dice: dice(&vessel_map(ves, &shell)?, &ref_map)?,
            });
        }
    }
    Ok(rows)
}

/// Evaluates every test-split sample of `manifest`: reconstructs the target,
/// the noisy input and its compensation, then scores them per shell.
pub fn evaluate_split(
    manifest: &Manifest,
    model: &DeconvNetModel<f32>,
    recon: &ReconConfig,
    eval: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for entry in manifest.split(Split::Test) {
        let (input, target) = manifest.load_pair::<f32>(entry)?;
        let compensated = infer_full(model, &input)?;
        let config = &manifest.config;
        let vols = [&target, &input, &compensated]
            .into_iter()
            .map(|p| reconstruct(p, config, recon))
            .collect::<Result<Vec<_>>>()?;
        let sample = evaluate_sample(&entry.id, &vols[0], &vols[1], &vols[2], config, eval)?;
        for r in &sample {
            log::info!(
                "{} shell {}-{} {}: rse {:.4} ncc {:.4} dice {:.4}",
                r.sample,
                r.shell[0],
                r.shell[1],
                r.method.as_str(),
                r.rse,
                r.ncc,
                r.dice
            );
        }
        rows.extend(sample);
    }
    if rows.is_empty() {
        return Err(Error::Empty("the manifest has no test samples".into()));
    }
    Ok(rows)
}

/// One-sided tests per shell: compensated RSE smaller and NCC/DICE larger than rect.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellSummary {
    pub shell: [f64; 2],
    pub n: usize,
    pub mean_rse: [f64; 2],
    pub mean_ncc: [f64; 2],
    pub mean_dice: [f64; 2],
    pub p_rse: f64,
    pub p_ncc: f64,
    pub p_dice: f64,
    /// Samples where compensation lowered RSE and raised NCC.
    pub improved_both: usize,
}

pub fn summarize(rows: &[EvalRow], shells: &[[f64; 2]]) -> Result<Vec<ShellSummary>> {
    let mut out = Vec::new();
    for &shell in shells {
        let pick = |m: Method| -> Vec<&EvalRow> { rows.iter().filter(|r| r.shell == shell && r.method == m).collect() };
        let (rect, comp) = (pick(Method::Rect), pick(Method::Compensated));
        if rect.is_empty() || rect.len() != comp.len() {
            return Err(Error::Empty(format!("paired evaluation rows for shell {shell:?}")));
        }
        let col = |rs: &[&EvalRow], f: fn(&EvalRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (rr, cr) = (col(&rect, |r| r.rse), col(&comp, |r| r.rse));
        let (rn, cn) = (col(&rect, |r| r.ncc), col(&comp, |r| r.ncc));
        let (rd, cd) = (col(&rect, |r| r.dice), col(&comp, |r| r.dice));
        let improved_both = rect
            .iter()
            .zip(&comp)
            .filter(|(a, b)| b.rse < a.rse && b.ncc > a.ncc)
            .count();
        out.push(ShellSummary {
            shell,
            n: rect.len(),
            mean_rse: [mean(&rr), mean(&cr)],
            mean_ncc: [mean(&rn), mean(&cn)],
            mean_dice: [mean(&rd), mean(&cd)],
            p_rse: mann_whitney_one_sided(&cr, &rr)?,
            p_ncc: mann_whitney_one_sided(&rn, &cn)?,
            p_dice: mann_whitney_one_sided(&rd, &cd)?,
            improved_both,
        });
    }
    Ok(out)
}

pub fn eval_rows_tsv(rows: &[EvalRow]) -> String {
    let mut s = String::from("sample\tshell\tmethod\trse\tncc\tdice\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{}-{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.sample,
            r.shell[0],
            r.shell[1],
            r.method.as_str(),
            r.rse,
            r.ncc,
            r.dice
        )
        .unwrap();
    }
    s
}

pub fn summary_tsv(summary: &[ShellSummary]) -> String {
    let mut s = String::from(
        "shell\tn\trse_rect\trse_comp\tp_rse\tncc_rect\tncc_comp\tp_ncc\tdice_rect\tdice_comp\tp_dice\timproved_both\n",
    );
    for m in summary {
        writeln!(
            s,
            "{}-{}\t{}\t{:.4}\t{:.4}\t{:.3e}\t{:.4}\t{:.4}\t{:.3e}\t{:.4}\t{:.4}\t{:.3e}\t{}",
            m.shell[0],
            m.shell[1],
            m.n,
            m.mean_rse[0],
            m.mean_rse[1],
            m.p_rse,
            m.mean_ncc[0],
            m.mean_ncc[1],
            m.p_ncc,
            m.mean_dice[0],
            m.mean_dice[1],
            m.p_dice,
            m.improved_both
        )
        .unwrap();
    }
    s
}
