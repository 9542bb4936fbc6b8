use std::path::{Path, PathBuf};

use eobkit::config::ExperimentConfig;
use eobkit::desk::{insight_experiment, run_grid, GridSpec, InsightConfig, ModelSpec, TrainConfig};
use eobkit::diagnostics::{fit_ar, ortho_report, sliding_windows, transform_windows, ArFit, OrthoReport, WindowBasis};
use eobkit::eob::{corr_matrix_from_ar, eob_ar_closed_form, eob_mgm, EobReport};
use eobkit::losses::{
    freq_amp_phase, freq_error_amp_phase, freq_real_imag_l1, freq_real_imag_l2, harmonized_l1, harmonized_l2,
    temporal_l1, temporal_l2, update_ema, whitened_loss, EmaMagnitudes, HarmonizedConfig, LossEval, Norm,
};
use eobkit::processes::{sample_innovation, synthesize_hybrid, ArSpec, HybridSpec, InnovationDist};
use eobkit::rng::derive_seed;
use eobkit::transforms::{dft_forward, dwt_forward, max_dwt_levels, TransformKind, Wavelet};
use serde::Serialize;

use crate::io::{csv_err, csv_writer, fmt_f64, read_column, read_json, write_json};
use crate::{
    BasisArg, CliError, DiagnoseArgs, EobArgs, GenerateArgs, InsightArgs, KindArg, LossCheckArgs, SimulateArgs,
    TransformArgs,
};

type CliResult = Result<(), CliError>;

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn generate(a: GenerateArgs) -> CliResult {
    let mut spec: HybridSpec = read_json(&a.spec)?;
    if let Some(n) = a.length {
        spec.length = n;
    }
    let series = synthesize_hybrid(&spec, a.seed)?;
    log::info!("generated {} points (SSNR_x = {:?})", series.len(), spec.ssnr_x().ok());
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(["x"]).map_err(csv_err)?;
    for v in series {
        w.write_record([fmt_f64(v)]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn eob(a: EobArgs) -> CliResult {
    let spec: ArSpec = if a.estimate {
        let input = a.input.as_deref().expect("clap enforces --input");
        let fit = fit_ar(&read_column(input, a.column.as_deref())?, a.order)?;
        log::info!("fitted AR({}): phi = {:?}, SSNR = {}", a.order, fit.phi, fit.ssnr);
        fit.to_spec()
    } else if let Some(path) = &a.spec {
        read_json(path)?
    } else {
        ArSpec::gaussian(a.phi.clone(), a.sigma_eps2)
    };
    spec.validate()?;
    let report: EobReport<f64> = if a.determinant {
        let mut r = eob_mgm(&corr_matrix_from_ar(&spec, a.t)?)?;
        r.p = spec.order();
        r
    } else {
        eob_ar_closed_form(&spec, a.t)?
    };
    let report = if a.bits { report.in_bits() } else { report };
    write_json(None, &report)
}

#[derive(Serialize)]
struct PadMeta {
    original_length: usize,
    padded_length: usize,
    kind: &'static str,
    wavelet: Wavelet,
    levels: usize,
}

pub fn transform(a: TransformArgs) -> CliResult {
    let mut x = read_column(&a.input, a.column.as_deref())?;
    let original = x.len();
    let mut w = csv_writer(a.out.as_deref())?;
    match a.kind {
        KindArg::Dft => {
            let f = dft_forward(&x);
            w.write_record(["k", "re", "im"]).map_err(csv_err)?;
            for k in 0..f.len() {
                w.write_record([k.to_string(), fmt_f64(f.re[k]), fmt_f64(f.im[k])])
                    .map_err(csv_err)?;
            }
        }
        KindArg::Identity => {
            w.write_record(["index", "coeff"]).map_err(csv_err)?;
            for (i, v) in x.iter().enumerate() {
                w.write_record([i.to_string(), fmt_f64(*v)]).map_err(csv_err)?;
            }
        }
        KindArg::Dwt => {
            if !x.len().is_power_of_two() {
                if !a.pad {
                    return Err(CliError::Validation(format!(
                        "DWT needs a power-of-two length, got {}; pass --pad to extend it",
                        x.len()
                    )));
                }
                let last = *x.last().expect("read_column never returns an empty column");
                x.resize(x.len().next_power_of_two(), last);
            }
            let levels = a.levels.unwrap_or_else(|| max_dwt_levels(x.len(), 4));
            let wavelet: Wavelet = a.wavelet.into();
            let c = dwt_forward(&x, wavelet, levels)?;
            w.write_record(["index", "band", "coeff"]).map_err(csv_err)?;
            let mut index = 0;
            let mut emit = |band: String, vals: &[f64], w: &mut csv::Writer<_>| -> CliResult {
                for v in vals {
                    w.write_record([index.to_string(), band.clone(), fmt_f64(*v)])
                        .map_err(csv_err)?;
                    index += 1;
                }
                Ok(())
            };
            emit(format!("a{levels}"), c.approximation(), &mut w)?;
            for level in (1..=levels).rev() {
                emit(format!("d{level}"), c.detail(level), &mut w)?;
            }
            if a.pad {
                let meta = PadMeta {
                    original_length: original,
                    padded_length: x.len(),
                    kind: "dwt",
                    wavelet,
                    levels,
                };
                match &a.out {
                    Some(out) => write_json(Some(&sidecar(out)), &meta)?,
                    None => eprintln!("{}", serde_json::to_string(&meta).map_err(|e| CliError::Runtime(e.to_string()))?),
                }
            }
        }
    }
    w.flush().map_err(csv_err)
}

#[derive(Serialize)]
struct Diagnosis {
    #[serde(flatten)]
    report: OrthoReport,
    basis: WindowBasis,
    window: usize,
    ar_fit: ArFit,
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult {
    let x = read_column(&a.input, a.column.as_deref())?;
    let basis = match a.transform {
        BasisArg::None => WindowBasis::None,
        BasisArg::Dft => WindowBasis::Dft,
        BasisArg::Dwt => WindowBasis::Dwt,
    };
    let windows = transform_windows(&sliding_windows(&x, a.window)?, basis, a.wavelet.into())?;
    let out = Diagnosis {
        report: ortho_report(&windows)?,
        basis,
        window: a.window,
        ar_fit: fit_ar(&x, a.order)?,
    };
    write_json(a.out.as_deref(), &out)
}

#[derive(Serialize)]
struct LossRow {
    loss: String,
    value: f64,
    /// Largest |analytic - finite difference| over the largest gradient entry.
    grad_rel_error: f64,
}

fn fd_rel_error(f: &dyn Fn(&[f64]) -> LossEval<f64>, x_hat: &[f64]) -> LossRow {
    let at = f(x_hat);
    let h = 1e-6;
    let mut p = x_hat.to_vec();
    let mut worst = 0.0f64;
    let mut scale = 1e-12f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p).value;
        p[i] = orig - h;
        let down = f(&p).value;
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - at.grad[i]).abs());
        scale = scale.max(fd.abs()).max(at.grad[i].abs());
    }
    LossRow {
        loss: String::new(),
        value: at.value,
        grad_rel_error: worst / scale,
    }
}

pub fn loss_check(a: LossCheckArgs) -> CliResult {
    let (x, xh) = match (&a.target, &a.prediction) {
        (Some(t), Some(p)) => (read_column(t, None)?, read_column(p, None)?),
        _ => {
            let unit = InnovationDist::Uniform { a: -1.0, b: 1.0 };
            (
                sample_innovation(&unit, a.length, a.seed)?,
                sample_innovation(&unit, a.length, derive_seed(a.seed, 1))?,
            )
        }
    };
    if x.len() != xh.len() || x.is_empty() {
        return Err(CliError::Validation(format!(
            "target and prediction lengths differ ({} vs {})",
            x.len(),
            xh.len()
        )));
    }
    let n = x.len();
    temporal_l2(&x, &xh)?;

    let mut rows = Vec::new();
    let mut add = |name: String, f: &dyn Fn(&[f64]) -> LossEval<f64>| {
        let mut row = fd_rel_error(f, &xh);
        row.loss = name;
        rows.push(row);
    };
    add("temporal_l2".into(), &|p| temporal_l2(&x, p).unwrap());
    add("temporal_l1".into(), &|p| temporal_l1(&x, p).unwrap());
    add("freq_real_imag_l2".into(), &|p| freq_real_imag_l2(&x, p).unwrap());
    add("freq_real_imag_l1".into(), &|p| freq_real_imag_l1(&x, p).unwrap());
    for norm in [Norm::L2, Norm::L1] {
        let tag = if norm == Norm::L1 { "l1" } else { "l2" };
        add(format!("amp_phase_amplitude_{tag}"), &|p| freq_amp_phase(&x, p, norm, 1e-8).unwrap().amplitude);
        add(format!("amp_phase_phase_{tag}"), &|p| freq_amp_phase(&x, p, norm, 1e-8).unwrap().phase);
        add(format!("error_amp_phase_amplitude_{tag}"), &|p| {
            freq_error_amp_phase(&x, p, norm, 1e-8).unwrap().amplitude
        });
        add(format!("error_amp_phase_phase_{tag}"), &|p| freq_error_amp_phase(&x, p, norm, 1e-8).unwrap().phase);
        for kind in [TransformKind::Dft, TransformKind::Dwt, TransformKind::Identity] {
            if kind == TransformKind::Dwt && !n.is_power_of_two() {
                continue;
            }
            let cfg = HarmonizedConfig {
                norm,
                transform: kind,
                ..Default::default()
            };
            let t = cfg.transform_for(n)?;
            let f = t.forward(&x)?;
            let ema = update_ema(&EmaMagnitudes::new(n, cfg.beta)?, &f.magnitudes())?;
            let name = format!("{kind:?}").to_lowercase();
            add(format!("harmonized_{name}_{tag}"), &|p| {
                let fh = t.forward(p).unwrap();
                match norm {
                    Norm::L1 => harmonized_l1(&f, &fh, &ema, &cfg, &t).unwrap(),
                    Norm::L2 => harmonized_l2(&f, &fh, &ema, &cfg, &t).unwrap(),
                }
            });
            let mags = f.magnitudes();
            if mags.iter().all(|m| *m > 0.0) {
                add(format!("whitened_{name}_{tag}"), &|p| {
                    whitened_loss(&f, &t.forward(p).unwrap(), &mags, norm, &t).unwrap()
                });
            }
        }
    }
    write_json(a.out.as_deref(), &rows)
}

#[derive(Serialize)]
struct SurfaceMeta<'a> {
    grid: &'a GridSpec,
    model: &'a ModelSpec,
    train: &'a TrainConfig,
    amplitudes: Vec<(f64, usize, usize, f64)>,
    epochs_run: Vec<usize>,
    failures: &'a [eobkit::desk::CellFailure],
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if jobs == Some(0) {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let raw: serde_json::Value = read_json(&a.grid)?;
    let (mut grid, mut model, mut train) = if raw.get("schema_version").is_some() {
        let cfg = ExperimentConfig::from_json(&raw.to_string())?;
        let grid = cfg
            .grid
            .ok_or_else(|| CliError::Validation("config has no `grid` section".into()))?;
        let model = cfg.model.unwrap_or_else(|| ModelSpec::linear(grid.history, 1));
        (grid, model, cfg.train.unwrap_or_default())
    } else {
        let grid: GridSpec =
            serde_json::from_value(raw).map_err(|e| CliError::Validation(format!("{}: {e}", a.grid.display())))?;
        let model = ModelSpec::linear(grid.history, 1);
        (grid, model, TrainConfig::default())
    };
    if let Some(s) = a.seed {
        grid.seed = s;
        train.seed = s;
        model.init_seed = s;
    }
    let pool = thread_pool(a.jobs)?;
    let res = pool.install(|| run_grid(&grid, &model, &train))?;
    if res.records.is_empty() {
        return Err(CliError::Runtime(format!(
            "every grid cell failed; first error: {}",
            res.failures.first().map_or("none", |f| f.error.as_str())
        )));
    }
    let mut w = csv_writer(Some(&a.out))?;
    w.write_record([
        "ssnr_x",
        "horizon",
        "replication",
        "mse_actual",
        "mse_relative",
        "mse_opt_rel",
        "inefficiency",
    ])
    .map_err(csv_err)?;
    for r in &res.records {
        let p = r.point;
        w.write_record([
            fmt_f64(p.ssnr_x),
            p.horizon.to_string(),
            r.replication.to_string(),
            fmt_f64(p.mse_actual),
            fmt_f64(p.mse_relative),
            fmt_f64(p.mse_opt_rel),
            fmt_f64(p.inefficiency),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    let meta = SurfaceMeta {
        grid: &grid,
        model: &model,
        train: &train,
        amplitudes: res
            .records
            .iter()
            .map(|r| (r.point.ssnr_x, r.point.horizon, r.replication, r.amplitude))
            .collect(),
        epochs_run: res.records.iter().map(|r| r.epochs_run).collect(),
        failures: &res.failures,
    };
    write_json(Some(&sidecar(&a.out)), &meta)?;
    for f in &res.failures {
        log::warn!("cell ssnr_x={} h={} rep={} failed: {}", f.ssnr_x, f.horizon, f.replication, f.error);
    }
    Ok(())
}

pub fn insight(a: InsightArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_json(&text)?.insight.unwrap_or_default()
        }
        None => InsightConfig::default(),
    };
    if let Some(s) = a.seed {
        let n = cfg.seeds.len() as u64;
        cfg.seeds = (s..s + n).collect();
    }
    let pool = thread_pool(Some(1))?;
    let report = pool.install(|| insight_experiment(&cfg))?;
    write_json(a.out.as_deref(), &report)
}
