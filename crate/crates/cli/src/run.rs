//! Experiment pipelines.

use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::Context;
use hsf_core::basis::{sector_dimensions, symmetrize_inversion};
use hsf_core::constraints::{build_fragment, fragmentation_stats, FragmentStats};
use hsf_core::disorder::{fss_collapse, sweep, Diagnostics, FssOptions, FssPoint, ScalingForm, SweepResult, SweepSpec};
use hsf_core::dynamics::{evolve, linear_time_grid, log_time_grid, EvolveOptions};
use hsf_core::model::{build_effective_hamiltonian, build_exact_hamiltonian, ModelParams};
use hsf_core::spectral::{diagonalize, eigen_csv, eigenstate_entropy, eigenvalues, r_statistics, Histogram, Window};
use hsf_core::{Error, SpinConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    ConfigError, Experiment, ExperimentConfig, FragmentConfig, FssConfig, GridKind, Observable, QuenchConfig,
    SectorsConfig, SpectrumConfig, SweepConfig, TimeUnit,
};
use crate::output::{result_of, Sink};

/// Run failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Solver(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidParams(_)
            | Error::UnsupportedLength { .. }
            | Error::RegimeMismatch { .. }
            | Error::NotInBasis(_)
            | Error::NotClosedUnderReversal(_)
            | Error::UndefinedImbalance => Failure::Config(ConfigError::new("experiment", e.to_string())),
            other => Failure::Solver(other.into()),
        }
    }
}

type Outcome = Result<Vec<String>, Failure>;

/// Execute a resolved config; returns summary lines for stdout.
pub fn run(config: &ExperimentConfig) -> Outcome {
    let mut sink = Sink::new(config)?;
    sink.config_echo()?;
    let mut lines = vec![format!("experiment {}", config.experiment.name())];
    lines.extend(match &config.experiment {
        Experiment::Sectors(s) => sectors(config, s, &mut sink)?,
        Experiment::Fragment(f) => fragment(config, f, &mut sink)?,
        Experiment::Spectrum(s) => spectrum(config, s, &mut sink)?,
        Experiment::Quench(q) => quench(config, q, &mut sink)?,
        Experiment::DisorderSweep(s) => disorder_sweep(config, s, &mut sink)?,
        Experiment::Fss(f) => fss(f, &mut sink)?,
    });
    lines.extend(sink.written().iter().map(|p| format!("wrote {}", p.display())));
    Ok(lines)
}

fn root_of(spec: &crate::config::RootSpec) -> Result<SpinConfig, Failure> {
    Ok(spec.resolve("experiment.root")?)
}

#[derive(Serialize)]
struct SectorRow {
    key: hsf_core::SectorKey,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fragments: Option<FragmentStats>,
}

fn sectors(config: &ExperimentConfig, s: &SectorsConfig, sink: &mut Sink) -> Outcome {
    let regime = config.model.regime();
    let dims = sector_dimensions(s.length, regime)?;
    let rows: Vec<SectorRow> = dims
        .into_par_iter()
        .map(|(key, dim)| -> Result<SectorRow, Error> {
            let fragments = if s.fragments { Some(fragmentation_stats(s.length, &key, regime)?) } else { None };
            Ok(SectorRow { key, dim, fragments })
        })
        .collect::<Result<_, _>>()?;
    let total: usize = rows.iter().map(|r| r.dim).sum();
    let mut table = String::from("charges,dim,fragments,max_fragment,frozen\n");
    for r in &rows {
        let charges = r.key.charges().iter().map(u32::to_string).collect::<Vec<_>>().join(";");
        let f = r.fragments.map_or(",,".into(), |f| format!("{},{},{}", f.fragment_count, f.max_dim, f.frozen_count));
        let _ = writeln!(table, "{charges},{},{f}", r.dim);
    }
    let largest = rows.iter().max_by(|a, b| a.dim.cmp(&b.dim).then(a.key.cmp(&b.key))).expect("at least one sector");
    sink.csv("sectors.csv", &table)?;
    sink.json("sectors.json", &json!({ "length": s.length, "regime": regime, "total": total, "sectors": rows }))?;
    let mut lines = vec![
        format!("L={} regime {}: {} sectors, {total} states", s.length, regime.name(), rows.len()),
        format!("largest sector {} with {} states", largest.key, largest.dim),
    ];
    if let Some(f) = largest.fragments {
        lines.push(format!(
            "  {} fragments, largest {} (ratio {:.6}), {} frozen",
            f.fragment_count,
            f.max_dim,
            f.max_ratio(),
            f.frozen_count
        ));
    }
    Ok(lines)
}

fn fragment(config: &ExperimentConfig, f: &FragmentConfig, sink: &mut Sink) -> Outcome {
    let root = root_of(&f.root)?;
    let regime = config.model.regime();
    let frag = build_fragment(root, regime, f.cap)?;
    let summary = json!({
        "root": root.to_string(),
        "regime": regime,
        "dimension": frag.dim(),
        "edges": frag.edges().len(),
        "canonical_id": frag.canonical_id().to_string(),
    });
    if f.dump_basis {
        sink.json("fragment.json", &json!({ "summary": summary, "dump": frag.to_dump() }))?;
    } else {
        sink.json("fragment.json", &json!({ "summary": summary }))?;
    }
    Ok(vec![format!("fragment of {root} ({}): dimension {}, {} edges", regime.name(), frag.dim(), frag.edges().len())])
}

fn spectrum(config: &ExperimentConfig, s: &SpectrumConfig, sink: &mut Sink) -> Outcome {
    let root = root_of(&s.root)?;
    let params = config.model.params()?;
    let frag = build_fragment(root, params.regime, None)?;
    let mut h = build_effective_hamiltonian(&frag, &params, config.model.effective)?;
    let inv = if s.inversion {
        let inv = Arc::new(symmetrize_inversion(frag.basis())?);
        h = h.restrict_inversion_even(&inv)?;
        Some(inv)
    } else {
        None
    };
    let window: Window = s.window.into();
    let (energies, eig) = if s.entropy || matches!(window, Window::Mid(_)) {
        let eig = diagonalize(&h, window)?;
        (eig.energies.clone(), Some(eig))
    } else {
        (eigenvalues(&h)?, None)
    };
    let stats = r_statistics(&energies)?;
    let cut = s.cut.unwrap_or(root.len() / 2);
    let mut entropies = Vec::new();
    if let Some(eig) = eig.as_ref().filter(|_| s.entropy) {
        entropies = (0..eig.len())
            .into_par_iter()
            .map(|k| {
                let v = eig.vector(k);
                match &inv {
                    Some(inv) => {
                        let (basis, amps) = inv.expand(&v);
                        eigenstate_entropy(&amps, &basis, cut)
                    }
                    None => eigenstate_entropy(&v, frag.basis(), cut),
                }
            })
            .collect::<Result<_, _>>()?;
    }
    let table = match &eig {
        Some(eig) => eigen_csv(eig, &entropies),
        None => energies.iter().enumerate().fold(String::from("n,E_n\n"), |mut acc, (k, e)| {
            let _ = writeln!(acc, "{k},{e:.12}");
            acc
        }),
    };
    let hist = Histogram::new(&stats.r_values, 0.0, 1.0, s.bins);
    sink.csv("spectrum.csv", &table)?;
    sink.csv("r_histogram.csv", &hist.to_csv("r", "density"))?;
    let mean_entropy = (!entropies.is_empty()).then(|| entropies.iter().sum::<f64>() / entropies.len() as f64);
    sink.json(
        "spectrum.json",
        &json!({
            "fragment_dimension": frag.dim(),
            "matrix_dimension": h.dim(),
            "levels": energies.len(),
            "mean_r": stats.mean_r,
            "merged_degeneracies": stats.merged_degeneracies,
            "j_p": params.j_p(),
            "j_q": params.j_q(),
            "entropy_cut": cut,
            "mean_entropy": mean_entropy,
        }),
    )?;
    let mut lines = vec![format!(
        "fragment dim {}, matrix dim {}, {} levels: <r> = {:.4}",
        frag.dim(),
        h.dim(),
        stats.levels,
        stats.mean_r
    )];
    if let Some(m) = mean_entropy {
        lines.push(format!("mean eigenstate entropy at cut {cut}: {m:.4}"));
    }
    Ok(lines)
}

fn time_unit(params: &ModelParams, unit: TimeUnit) -> f64 {
    match unit {
        TimeUnit::JP => 1.0 / params.j_p(),
        TimeUnit::JQ => 1.0 / params.j_q(),
        TimeUnit::Omega => 1.0 / params.omega,
    }
}

fn quench(config: &ExperimentConfig, q: &QuenchConfig, sink: &mut Sink) -> Outcome {
    let root = root_of(&q.root)?;
    let params = config.model.params()?;
    let t = &q.times;
    let times = match t.kind {
        GridKind::Log => log_time_grid(t.start, t.stop, t.points),
        GridKind::Linear => linear_time_grid(t.start, t.stop, t.points),
    };
    let opts = EvolveOptions {
        time_unit: time_unit(&params, t.unit),
        propagator: q.propagator,
        cut: q.cut,
        ..Default::default()
    };
    let frag = build_fragment(root, params.regime, None)?;
    let h = build_effective_hamiltonian(&frag, &params, config.model.effective)?;
    let eff = evolve(root, &h, &times, &opts)?;
    sink.csv("quench.csv", &eff.to_csv())?;
    let mut summary = json!({
        "fragment_dimension": frag.dim(),
        "j_p": params.j_p(),
        "j_q": params.j_q(),
        "time_unit": opts.time_unit,
        "max_norm_drift": eff.max_norm_drift,
        "max_energy_drift": eff.max_energy_drift,
    });
    let mut lines = vec![format!(
        "effective evolution of {root} in a fragment of dim {}: {} times, norm drift {:.1e}",
        frag.dim(),
        times.len(),
        eff.max_norm_drift
    )];
    if q.compare_exact {
        let exact_h = build_exact_hamiltonian(root.len(), &params, q.exact_cutoff)?;
        let exact = evolve(root, &exact_h, &times, &opts).context("exact evolution")?;
        sink.csv("quench_exact.csv", &exact.to_csv())?;
        let (table, max_dev) = paired_densities(&eff.times, &eff.densities, &exact.densities);
        sink.csv("densities_paired.csv", &table)?;
        summary["max_density_deviation"] = json!(max_dev);
        lines.push(format!("exact comparison (cutoff {}): max |n_eff - n_exact| = {max_dev:.4}", q.exact_cutoff));
    }
    sink.json("quench.json", &summary)?;
    Ok(lines)
}

/// Long-format `t,site,n_eff,n_exact,diff` table and the largest deviation.
fn paired_densities(times: &[f64], eff: &[Vec<f64>], exact: &[Vec<f64>]) -> (String, f64) {
    let mut table = String::from("t,site,n_eff,n_exact,diff\n");
    let mut max_dev: f64 = 0.0;
    for ((t, a), b) in times.iter().zip(eff).zip(exact) {
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            max_dev = max_dev.max((x - y).abs());
            let _ = writeln!(table, "{t:.8},{},{x:.10},{y:.10},{:.10}", i + 1, x - y);
        }
    }
    (table, max_dev)
}

fn disorder_sweep(config: &ExperimentConfig, s: &SweepConfig, sink: &mut Sink) -> Outcome {
    let params = config.model.params()?;
    let spec = SweepSpec {
        template: s.template,
        lengths: s.lengths.clone(),
        widths: s.widths.clone(),
        realizations: s.realizations,
        seed: s.seed,
        window: s.window,
        cutoff: s.cutoff,
        diagnostics: Diagnostics { r: s.r, entropy: s.entropy },
    };
    let res = sweep(&spec, &params)?;
    sink.json("sweep.json", &res)?;
    sink.csv("sweep.csv", &res.to_csv())?;
    let failed: usize = res.cells.iter().map(|c| c.failures).sum();
    let total: usize = res.cells.iter().map(|c| c.realizations).sum();
    if total == 0 {
        return Err(Failure::Solver(anyhow::anyhow!("every realization failed")));
    }
    let mut lines = vec![format!("{} cells, {total} realizations, {failed} failed", res.cells.len())];
    for c in &res.cells {
        let fmt = |e: Option<hsf_core::disorder::Estimate>| e.map_or("-".into(), |e| format!("{:.4}", e.mean));
        lines.push(format!(
            "  L={} dR={}: <r>={} S={} dS2={}",
            c.len,
            c.width,
            fmt(c.mean_r),
            fmt(c.entropy),
            fmt(c.entropy_variance)
        ));
    }
    Ok(lines)
}

fn fss(f: &FssConfig, sink: &mut Sink) -> Outcome {
    let text = std::fs::read_to_string(&f.input)
        .map_err(|e| ConfigError::new("experiment.input", format!("cannot read {}: {e}", f.input.display())))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::new("experiment.input", format!("not JSON: {e}")))?;
    let res: SweepResult = serde_json::from_value(result_of(doc))
        .map_err(|e| ConfigError::new("experiment.input", format!("not a sweep result: {e}")))?;
    let points: Vec<FssPoint> = res
        .cells
        .iter()
        .filter_map(|c| {
            let est = match f.observable {
                Observable::R => c.mean_r,
                Observable::Entropy => c.entropy,
                Observable::EntropyVariance => c.entropy_variance,
            };
            est.map(|e| FssPoint { len: c.len, width: c.width, value: e.mean })
        })
        .collect();
    if points.is_empty() {
        return Err(ConfigError::new("experiment.observable", "not present in the sweep result").into());
    }
    let mut fits = Vec::new();
    let mut lines = Vec::new();
    for form in [ScalingForm::Standard, ScalingForm::Bare] {
        let opts = FssOptions {
            critical_range: f.critical_range,
            nu_range: f.nu_range,
            grid: f.grid,
            refinements: f.refinements,
            form,
            per_site: f.per_site,
        };
        match fss_collapse(&points, &opts) {
            Ok(fit) => {
                lines.push(format!("{form:?}: dR_c = {:.5}, nu = {:.4}, cost {:.3e}", fit.critical, fit.nu, fit.cost));
                fits.push(json!({ "form": form, "fit": fit }));
            }
            Err(e) => {
                lines.push(format!("{form:?}: no interior optimum ({e})"));
                fits.push(json!({ "form": form, "error": e.to_string() }));
            }
        }
    }
    sink.json("fss.json", &json!({ "points": points, "fits": fits }))?;
    if fits.iter().all(|x| x.get("error").is_some()) {
        return Err(Failure::Solver(anyhow::anyhow!("no scaling form produced an interior optimum")));
    }
    Ok(lines)
}
