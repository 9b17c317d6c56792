use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use wavesim::config::RunConfig;
use wavesim::ingest::{read_series_auto, write_model_csv, HourlySeries, Regime};
use wavesim::pipeline::{fit_all, load_model, save_model, simulate as run_simulation, FittedModel};
use wavesim::renewal::PairKind;
use wavesim::rng::replicate_seed;
use wavesim::steepness::{bin_max_steepness, fit_limit_curve};
use wavesim::validate::validation_report;

const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The error chain on one line. Causes whose text the previous message
/// already ends with are skipped.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// 3 when an estimator failed, 2 for every other error.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<wavesim::Error>()) {
        Some(w) if w.is_fit_failure() => 3,
        _ => 2,
    }
}

/// Parses a TOML run configuration. Unknown keys are rejected by name.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let config = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| wavesim::Error::Config(e.message().to_string()))
                .with_context(|| format!("config {}", p.display()))?
        }
    };
    config.validate()?;
    Ok(config)
}

fn read_series(path: &Path) -> Result<HourlySeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut s = read_series_auto(BufReader::new(f))
        .with_context(|| format!("reading {}", path.display()))?;
    if s.source_id.is_empty() {
        s.source_id = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
    }
    if s.is_empty() {
        return Err(
            wavesim::Error::Size(format!("{} holds no hourly rows", path.display())).into(),
        );
    }
    Ok(s)
}

/// `<path>` with `suffix` appended to the file name.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_series(path: &Path, series: &HourlySeries) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_model_csv(series, BufWriter::new(f))?;
    Ok(())
}

pub fn fit(input: &Path, config: Option<&Path>, output: &Path) -> Result<()> {
    let config = load_config(config)?;
    let series = read_series(input)?;
    log::info!(
        "fitting {} hours ({} model years)",
        series.len(),
        series.years()
    );
    let model = fit_all(&series, &config)?;
    save_model(&model, output).with_context(|| format!("writing {}", output.display()))?;
    let checksum = model.checksum()?;
    write_json(
        &sidecar(output, ".diagnostics.json"),
        &json!({
            "engine_version": ENGINE_VERSION,
            "model_sha256": checksum,
            "config": model.config,
            "provenance": model.provenance,
            "diagnostics": model.diagnostics,
        }),
    )?;
    log::info!("model written to {} (sha256 {checksum})", output.display());
    Ok(())
}

fn replicate_path(output: &Path, k: u64) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    let name = match output.extension() {
        Some(ext) => format!("{stem}_r{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_r{k}"),
    };
    output.with_file_name(name)
}

pub fn simulate(
    model: &Path,
    years: usize,
    seed: Option<u64>,
    output: &Path,
    replicates: u64,
) -> Result<()> {
    if years == 0 {
        bail!(wavesim::Error::Config("years: must be at least 1".into()));
    }
    if replicates == 0 {
        bail!(wavesim::Error::Config(
            "replicates: must be at least 1".into()
        ));
    }
    let m = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let base = seed.unwrap_or(m.config.seed);
    let jobs: Vec<(PathBuf, u64)> = if replicates == 1 {
        vec![(output.to_path_buf(), base)]
    } else {
        (0..replicates)
            .map(|k| (replicate_path(output, k), replicate_seed(base, k)))
            .collect()
    };
    jobs.par_iter().try_for_each(|(path, seed)| -> Result<()> {
        let out = run_simulation(&m, years, *seed)?;
        write_series(path, &out.series)?;
        write_json(
            &sidecar(path, ".meta.json"),
            &json!({
                "engine_version": ENGINE_VERSION,
                "model_sha256": out.model_sha256,
                "seed": out.seed,
                "years": years,
                "rows": out.series.len(),
                "config": m.config,
            }),
        )?;
        log::info!("{} model years written to {}", years, path.display());
        Ok(())
    })
}

fn storms_csv(path: &Path, report: &wavesim::validate::ValidationReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "quantile,h_star_m,t_star_s,observed_count,band_q05,band_q95,in_band"
    )?;
    for b in &report.storms {
        let th = &b.thresholds;
        let (lo, hi) = b
            .band
            .as_ref()
            .map(|c| (c.q05.to_string(), c.q95.to_string()))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{lo},{hi},{}",
            th.quantile.map(|q| q.to_string()).unwrap_or_default(),
            th.h_star,
            th.t_star,
            b.observed_count,
            b.observed_in_band
                .map(|v| v.to_string())
                .unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn percentages_csv(path: &Path, report: &wavesim::validate::ValidationReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "season,source,year,southwest_fraction")?;
    for s in &report.percentages {
        for (source, rows) in [("observed", &s.observed), ("simulated", &s.simulated)] {
            for (y, v) in rows.iter().enumerate() {
                let v = v.map(|x| x.to_string()).unwrap_or_default();
                writeln!(w, "{},{source},{y},{v}", s.season)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn validate(
    observed: &Path,
    simulated: &Path,
    quantiles: &[f64],
    config: Option<&Path>,
    output: &Path,
) -> Result<()> {
    let config = load_config(config)?;
    if quantiles.is_empty() {
        bail!(wavesim::Error::Config(
            "quantiles: at least one is needed".into()
        ));
    }
    if let Some(q) = quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        bail!(wavesim::Error::Config(format!(
            "quantiles: {q} is outside (0, 1)"
        )));
    }
    let obs = read_series(observed)?;
    let sim = read_series(simulated)?;
    let report = validation_report(&obs, &sim, quantiles, &config.seasons)?;
    let f = File::create(output).with_context(|| format!("creating {}", output.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, &report)?;
    w.flush()?;
    storms_csv(&sidecar(output, ".storms.csv"), &report)?;
    percentages_csv(&sidecar(output, ".percentages.csv"), &report)?;
    write_json(
        &sidecar(output, ".meta.json"),
        &json!({
            "engine_version": ENGINE_VERSION,
            "observed": observed.display().to_string(),
            "simulated": simulated.display().to_string(),
            "quantiles": quantiles,
            "config": config,
        }),
    )?;
    for b in &report.storms {
        if let (Some(band), Some(q)) = (&b.band, b.thresholds.quantile) {
            log::info!(
                "q{q}: observed {} storms, simulated band ({:.0}, {:.0})",
                b.observed_count,
                band.q05,
                band.q95
            );
        }
    }
    Ok(())
}

pub fn steepness_fit(input: &Path, config: Option<&Path>, output: &Path) -> Result<()> {
    let config = load_config(config)?;
    let series = read_series(input)?;
    let bins = bin_max_steepness(&series, config.steepness_bins)?;
    let curve = fit_limit_curve(&bins, config.b_upper)?;
    log::info!(
        "a = {:.5}, b = {:.4} m, c = {:.5} m",
        curve.a,
        curve.b,
        curve.c
    );
    write_json(
        output,
        &json!({
            "engine_version": ENGINE_VERSION,
            "curve": curve,
            "bins": bins,
            "config": config,
        }),
    )
}

fn summary(m: &FittedModel) -> String {
    let mut s = String::new();
    let p = &m.provenance;
    s += &format!(
        "source {} ({} years from {}), engine {}\n",
        p.source_id, p.years, p.origin_year, p.engine_version
    );
    s += &format!(
        "training max hm0 {:.3} m, tm02 {:.3} s\n",
        p.training_hm0_max, p.training_tm02_max
    );
    let c = &m.steepness;
    s += &format!("steepness limit a={:.5} b={:.4} c={:.5}\n", c.a, c.b, c.c);
    for (name, a) in [("hm0", &m.arma_hm0), ("tm02", &m.arma_tm02)] {
        s += &format!(
            "arma {name} ({},{}) ar={:?} ma={:?} sigma2={:.5}\n",
            a.p, a.q, a.ar, a.ma, a.sigma2
        );
    }
    for r in [Regime::North, Regime::Southwest] {
        let x = m.residuals.regime(r);
        s += &format!(
            "residuals regime {}: hm0 {:?}, tm02 {:?}, copula {} (tau {:.3})\n",
            r.as_u8(),
            x.hm0,
            x.tm02,
            x.copula,
            x.copula.tau()
        );
    }
    for season in &m.renewal.seasons {
        for kind in [PairKind::NorthToSouthwest, PairKind::SouthwestToNorth] {
            let c = season.copula(kind);
            s += &format!(
                "renewal {} {kind:?}: {c} (tau {:.3})\n",
                season.season,
                c.tau()
            );
        }
    }
    for r in &m.diagnostics.seasonal_r2 {
        let flag = if r.meets_target {
            ""
        } else {
            "  [below target]"
        };
        s += &format!("seasonal r2 {}: {:.3}{flag}\n", r.process, r.r2);
    }
    for a in &m.diagnostics.arma {
        s += &format!(
            "ljung-box {}: Q={:.1} dof={} p={:.3}\n",
            a.process, a.ljung_box.statistic, a.ljung_box.dof, a.ljung_box.p_value
        );
    }
    s
}

pub fn report(model: &Path) -> Result<()> {
    let m = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    print!("{}", summary(&m));
    println!("sha256 {}", m.checksum()?);
    Ok(())
}

pub fn synth(years: usize, seed: u64, output: &Path) -> Result<()> {
    if years == 0 {
        bail!(wavesim::Error::Config("years: must be at least 1".into()));
    }
    let reference = wavesim::synthetic::reference_model()?;
    let out = wavesim::synthetic::observations(&reference, years, seed)?;
    let mut series = out.series;
    series.source_id = format!("synthetic reference seed={seed}");
    write_series(output, &series)?;
    write_json(
        &sidecar(output, ".meta.json"),
        &json!({
            "engine_version": ENGINE_VERSION,
            "generator": "reference",
            "model_sha256": out.model_sha256,
            "seed": seed,
            "years": years,
            "config": reference.config,
        }),
    )
}
