use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use absorber_core::analysis::AchievedImpedance;
use absorber_core::dsp::{self, Controller, TimeSeries};
use absorber_core::identify::{self, MeasuredSpectrum, ProbeGain};
use absorber_core::model::{current_source_gains, CurrentSourceDesign};
use absorber_core::synthesis::ControlSpecJson;
use absorber_core::vkundt;
use absorber_core::{
    absorption_coefficient, csvio, monte_carlo_absorption, stability_report, synthesize_controller,
    DriverModel, MonteCarloConfig, RationalTransfer, StabilityReport,
};
use anyhow::Context;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Resolved};
use crate::create_dir;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// The model the controller is designed with: the truth with the
/// configured estimate errors applied.
fn design_model(r: &Resolved) -> anyhow::Result<DriverModel> {
    Ok(r.estimates.to_model(r.model.air)?)
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    name: Option<&'a str>,
    model: DriverModel,
    control: ControlSpecJson,
    h1: &'a RationalTransfer,
    h2: &'a RationalTransfer,
}

pub fn design(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let r = cfg.resolve()?;
    let model = design_model(&r)?;
    let pair = synthesize_controller(&model, &r.target, &r.feedback)?;
    let report: StabilityReport = stability_report(&model, &r.feedback)?;
    let lc = &cfg.simulate.loop_cfg;
    let h1 = dsp::discretize(&pair.h1, lc.fs_hz, lc.warping)?;
    let h2 = dsp::discretize(&pair.h2, lc.fs_hz, lc.warping)?;

    create_dir(out)?;
    write_json(
        out,
        "controller.json",
        &DesignOutput {
            name: cfg.name.as_deref(),
            model,
            control: cfg.control.clone(),
            h1: &pair.h1,
            h2: &pair.h2,
        },
    )?;
    write_json(out, "h1_sos.json", &h1)?;
    write_json(out, "h2_sos.json", &h2)?;
    write_json(out, "stability.json", &report)?;
    println!(
        "stable: {} (kg lower bound {:.4}), H1 {} sections, H2 {} sections",
        report.stable,
        report.kg_lower_bound,
        h1.sections.len(),
        h2.sections.len()
    );
    Ok(())
}

pub fn montecarlo(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let r = cfg.resolve()?;
    let mc = MonteCarloConfig {
        n_draws: cfg.montecarlo.n_draws,
        rel_std: cfg.montecarlo.rel_std,
        seed: cfg.montecarlo.seed,
        freqs_hz: cfg.grid.points()?,
    };
    create_dir(out)?;
    for (file, fb) in [("mc_feedforward.csv", r.feedback.with_gain(0.0)), ("mc_mixed.csv", r.feedback)] {
        let band = monte_carlo_absorption(&r.model, &r.target, &fb, &mc)?;
        band.write_csv(create(out, file)?)?;
        if let Some(i) = band.nearest(r.model.f0_hz()) {
            println!(
                "{file}: interquartile width {:.4} at {:.1} Hz",
                band.width(i),
                band.freqs_hz[i]
            );
        }
    }
    Ok(())
}

#[derive(Deserialize, Serialize)]
pub struct ProbeFile {
    pub k1: ProbeGain,
    pub k2: ProbeGain,
}

pub fn identify(passive: &Path, front: &Path, rear: &Path, probes: &Path, out: &Path) -> anyhow::Result<()> {
    let air = absorber_core::AirProperties::default();
    let open = |p: &Path| File::open(p).with_context(|| format!("opening {}", p.display()));
    let read = |p: &Path| -> anyhow::Result<MeasuredSpectrum> {
        MeasuredSpectrum::read_csv(open(p)?, &air).with_context(|| format!("reading {}", p.display()))
    };
    let probes: ProbeFile = serde_json::from_reader(open(probes)?)
        .map_err(|e| crate::config::ConfigError(format!("{}: {e}", probes.display())))?;
    let (p, f, r) = (read(passive)?, read(front)?, read(rear)?);
    let report = identify::identify_model(&p, (&f, &probes.k1), (&r, &probes.k2), air)?;
    create_dir(out)?;
    write_json(out, "identified.json", &report)?;
    let m = report.model;
    println!(
        "Rss = {:.4} rho0 c0, f0 = {:.3} Hz, Qms = {:.4}, F = {:.2} Pa/A, Csb = {:.4e} m/Pa",
        m.rss / air.z0(),
        m.f0_hz(),
        m.qms,
        m.f,
        m.csb
    );
    Ok(())
}

pub fn synth_spectra(
    model: &DriverModel,
    band: &[f64],
    noise: f64,
    seed: u64,
    out: &Path,
    prefix: &str,
) -> anyhow::Result<()> {
    let k1 = ProbeGain::default_front(model);
    let k2 = ProbeGain::default_rear(model);
    let mut s = identify::synthesize_spectra(model, band, k1, k2)?;
    if noise > 0.0 {
        s.passive = identify::add_noise(&s.passive, noise, seed);
        s.front = identify::add_noise(&s.front, noise, seed.wrapping_add(1));
        s.rear = identify::add_noise(&s.rear, noise, seed.wrapping_add(2));
    }
    create_dir(out)?;
    s.passive.write_csv(create(out, &format!("{prefix}passive.csv"))?, &model.air)?;
    s.front.write_csv(create(out, &format!("{prefix}front.csv"))?, &model.air)?;
    s.rear.write_csv(create(out, &format!("{prefix}rear.csv"))?, &model.air)?;
    write_json(out, &format!("{prefix}probes.json"), &ProbeFile { k1, k2 })
}

pub fn kundt(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let r = cfg.resolve()?;
    let air = r.model.air;
    let freqs = cfg.grid.points()?;
    let k = &cfg.kundt;
    let mixed = AchievedImpedance::new(&r.model, &r.estimates, &r.target, &r.feedback)?;
    let ff = AchievedImpedance::new(&r.model, &r.estimates, &r.target, &r.feedback.with_gain(0.0))?;
    let infinite = Complex64::new(f64::INFINITY, 0.0);
    let curves: [(&str, Vec<Complex64>); 4] = [
        ("passive", freqs.iter().map(|&f| r.model.zss_at(2.0 * PI * f)).collect()),
        ("target", freqs.iter().map(|&f| r.target.impedance_at(2.0 * PI * f)).collect()),
        ("feedforward", freqs.iter().map(|&f| ff.eval(2.0 * PI * f).unwrap_or(infinite)).collect()),
        ("mixed", freqs.iter().map(|&f| mixed.eval(2.0 * PI * f).unwrap_or(infinite)).collect()),
    ];

    let mut header = vec!["freq_hz".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![freqs.clone()];
    for (i, (name, z)) in curves.iter().enumerate() {
        let mut meas = vkundt::simulate_two_mic(&freqs, z, &k.geometry, &air)?;
        if k.noise_rel > 0.0 {
            meas = vkundt::add_h12_noise(&meas, k.noise_rel, k.seed.wrapping_add(i as u64));
        }
        let rec = vkundt::recover_reflection(&meas, &k.geometry, &air)?;
        let z0 = air.z0();
        let zr: Vec<Complex64> = rec.iter().map(|s| s.impedance.unwrap_or(Complex64::new(f64::NAN, f64::NAN))).collect();
        header.extend([format!("alpha_{name}"), format!("re_z_{name}"), format!("im_z_{name}")]);
        columns.push(rec.iter().map(|s| s.absorption().unwrap_or(f64::NAN)).collect());
        columns.push(zr.iter().map(|z| z.re / z0).collect());
        columns.push(zr.iter().map(|z| z.im / z0).collect());
    }
    create_dir(out)?;
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..freqs.len()).map(|i| columns.iter().map(|c| c[i]).collect::<Vec<f64>>());
    csvio::write_table(create(out, "kundt.csv")?, &header_refs, rows)?;
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let r = cfg.resolve()?;
    let s = &cfg.simulate;
    let lc = s.loop_cfg;
    let controller = if s.passive {
        Controller::open(lc.fs_hz)
    } else {
        let pair = synthesize_controller(&design_model(&r)?, &r.target, &r.feedback)?;
        Controller::from_pair(&pair, lc.fs_hz, lc.warping, lc.latency_samples)?
    };
    if s.freqs_hz.is_empty() {
        return Err(crate::config::ConfigError("simulate.freqs_hz is empty".into()).into());
    }
    let meas = dsp::measure_impedance_sweep(&r.model, &controller, &lc, &s.freqs_hz)?;
    let z0 = r.model.air.z0();
    let mut rows = Vec::with_capacity(meas.len());
    for m in &meas {
        let pred = dsp::predicted_impedance(&r.model, &controller, lc.hold, m.freq_hz);
        let target = if s.passive { r.model.zss_at(2.0 * PI * m.freq_hz) } else { r.target.impedance_at(2.0 * PI * m.freq_hz) };
        rows.push(vec![
            m.freq_hz,
            m.impedance.re / z0,
            m.impedance.im / z0,
            pred.re / z0,
            pred.im / z0,
            target.re / z0,
            target.im / z0,
            absorption_coefficient(m.impedance, &r.model.air)?,
        ]);
        println!(
            "{:8.2} Hz: Z/(rho0 c0) = {:.4}{:+.4}j, |Z/Z_ref - 1| = {:.3e}",
            m.freq_hz,
            m.impedance.re / z0,
            m.impedance.im / z0,
            (m.impedance / target - 1.0).norm()
        );
    }
    create_dir(out)?;
    csvio::write_table(
        create(out, "simulate.csv")?,
        &[
            "freq_hz",
            "re_z_norm",
            "im_z_norm",
            "re_pred_norm",
            "im_pred_norm",
            "re_ref_norm",
            "im_ref_norm",
            "alpha",
        ],
        rows,
    )?;

    // time series of the first excitation
    let f = s.freqs_hz[0];
    let n = ((lc.settle_s + lc.window_s) * lc.fs_hz).round() as usize;
    let mut c = controller.clone();
    c.reset();
    let ts: TimeSeries =
        dsp::closed_loop_sim(&r.model, &mut c, &lc, |t| (2.0 * PI * f * t).sin(), n)?;
    ts.write_csv(create(out, "timeseries.csv")?)?;
    Ok(())
}

pub fn current_source(r1: f64, r2: f64, r3: f64, r4: f64, r5: f64) -> anyhow::Result<()> {
    let d = CurrentSourceDesign { r1, r2, r3, r4, r5, zl: Complex64::new(0.0, 0.0) };
    let g = current_source_gains(&d)?;
    println!("{}", serde_json::to_string_pretty(&g)?);
    Ok(())
}
