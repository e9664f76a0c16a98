use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cdcv::backtest::{report_table, rolling_backtest, BacktestMode, SkippedStep, VaRBacktestReport};
use cdcv::cdcv::{
    conditioning_diagnostics, fit_cdcv, fit_cdcv_with_partition, selection_summary, CdcvConfig, CdcvModel,
    ConditioningDiagnostics, SelectionRow, Stage, Summary,
};
use cdcv::clustering::{fixed_partition, load_labels, StoppingRule};
use cdcv::generator::generate as generate_panel;
use cdcv::panel::{load_panel, ReturnPanel, RollingWindow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{CliError, SCHEMA_VERSION};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(cdcv::Error::from)?;
    s.push('\n');
    write_text(path, &s)
}

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub config: RunConfig,
    pub model: CdcvModel,
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(cdcv::Error::from)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!("{}: unsupported schema version {}", path.display(), file.schema_version)));
    }
    file.model.validate()?;
    Ok(file)
}

fn load_data(c: &RunConfig) -> Result<ReturnPanel, CliError> {
    Ok(load_panel(c.data_path()?)?)
}

fn fit_window(c: &RunConfig, panel: &ReturnPanel, config: &CdcvConfig, start: usize) -> Result<(CdcvModel, ReturnPanel), CliError> {
    let window = panel.window(RollingWindow::new(start, c.window))?;
    let model = match &c.labels {
        Some(p) => {
            let partition = fixed_partition(window.assets(), &load_labels(p)?)?;
            fit_cdcv_with_partition(&window, partition, config, start)?
        }
        None => fit_cdcv(&window, config, start)?,
    };
    Ok((model, window))
}

fn default_start(c: &RunConfig, panel: &ReturnPanel) -> Result<usize, CliError> {
    if c.window > panel.n_obs() {
        return Err(CliError::Usage(format!("window length {} exceeds the {} observations", c.window, panel.n_obs())));
    }
    Ok(c.window_start.unwrap_or(panel.n_obs() - c.window))
}

#[derive(Serialize)]
struct GeneratorFile<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    sectors: Vec<usize>,
    market_beta: Vec<f64>,
    sector_loading: Vec<f64>,
}

pub fn generate(c: &RunConfig) -> Result<(), CliError> {
    let mut gen = c.generator.clone();
    gen.seed = c.seed;
    let data = generate_panel(&gen)?;
    create_dir(&c.output)?;
    let path = c.output.join("returns.csv");
    let mut w = create(&path)?;
    data.panel.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let mut labels = String::from("asset,label\n");
    for (a, s) in data.panel.assets().iter().zip(&data.sectors) {
        labels.push_str(&format!("{a},S{}\n", s + 1));
    }
    write_text(&c.output.join("sectors.csv"), &labels)?;
    let mut resolved = c.clone();
    resolved.generator = gen;
    write_json(
        &c.output.join("generator.json"),
        &GeneratorFile {
            schema_version: SCHEMA_VERSION,
            config: &resolved,
            sectors: data.sectors,
            market_beta: data.market_beta,
            sector_loading: data.sector_loading,
        },
    )
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    window_start: usize,
    window_len: usize,
    n_clusters: usize,
    parameter_count: usize,
    stages: Vec<ConditioningDiagnostics>,
    selection: Vec<SelectionRow>,
}

fn diagnostics_file<'a>(c: &'a RunConfig, model: &CdcvModel, window: &ReturnPanel) -> Result<DiagnosticsFile<'a>, CliError> {
    Ok(DiagnosticsFile {
        schema_version: SCHEMA_VERSION,
        config: c,
        window_start: model.window_start,
        window_len: window.n_obs(),
        n_clusters: model.n_clusters(),
        parameter_count: model.parameter_count(),
        stages: conditioning_diagnostics(model, window)?,
        selection: selection_summary(std::slice::from_ref(model))?,
    })
}

pub fn fit(c: &RunConfig) -> Result<(), CliError> {
    let panel = load_data(c)?;
    let config = c.cdcv_config()?;
    let start = default_start(c, &panel)?;
    let (model, window) = fit_window(c, &panel, &config, start)?;
    let mut resolved = c.clone();
    resolved.window_start = Some(start);
    create_dir(&c.output)?;
    write_json(&c.output.join("diagnostics.json"), &diagnostics_file(&resolved, &model, &window)?)?;
    write_json(&c.output.join("model.json"), &ModelFile { schema_version: SCHEMA_VERSION, config: resolved, model })
}

#[derive(Serialize)]
struct SimulateFile<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    model: String,
    n: usize,
    seed: u64,
    output: String,
}

pub fn simulate(c: &RunConfig, model_path: &Path, n: usize) -> Result<(), CliError> {
    let file = load_model(model_path)?;
    let sim = file.model.simulate(n, c.seed)?;
    create_dir(&c.output)?;
    let path = c.output.join("simulated.csv");
    let mut w = create(&path)?;
    sim.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    write_json(
        &c.output.join("simulate.json"),
        &SimulateFile {
            schema_version: SCHEMA_VERSION,
            config: c,
            model: model_path.display().to_string(),
            n,
            seed: c.seed,
            output: path.display().to_string(),
        },
    )
}

#[derive(Serialize)]
struct BacktestFile<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    mode: BacktestMode,
    reports: &'a [VaRBacktestReport],
    skipped: &'a [SkippedStep],
}

pub fn backtest(c: &RunConfig, mode: &str) -> Result<(), CliError> {
    let mode = match mode {
        "out-of-sample" | "oos" => BacktestMode::OutOfSample,
        "within-sample" | "within" => BacktestMode::WithinSample,
        other => return Err(CliError::Usage(format!("--mode: unknown value {other:?}"))),
    };
    if c.labels.is_some() {
        return Err(CliError::Usage("backtest does not support fixed labels".into()));
    }
    let panel = load_data(c)?;
    let outcome = rolling_backtest(&panel, &c.backtest_config()?, &c.alphas, mode)?;
    for s in &outcome.skipped {
        eprintln!("warning: day {} skipped: {}", s.day, s.error);
    }
    let table = report_table(&outcome.reports);
    create_dir(&c.output)?;
    write_json(
        &c.output.join("backtest.json"),
        &BacktestFile {
            schema_version: SCHEMA_VERSION,
            config: c,
            mode,
            reports: &outcome.reports,
            skipped: &outcome.skipped,
        },
    )?;
    write_text(&c.output.join("backtest.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    B,
    Upsilon,
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    n_windows: usize,
    summary: Summary,
    abs_summary: Summary,
}

#[derive(Serialize)]
struct SweepFile<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    axis: SweepAxis,
    window_starts: Vec<usize>,
    rows: Vec<SweepRow>,
}

fn mean_summary(s: &[Summary]) -> Summary {
    let n = s.len() as f64;
    let avg = |f: fn(&Summary) -> f64| s.iter().map(f).sum::<f64>() / n;
    Summary {
        mean: avg(|x| x.mean),
        std: avg(|x| x.std),
        q1: avg(|x| x.q1),
        q25: avg(|x| x.q25),
        q50: avg(|x| x.q50),
        q75: avg(|x| x.q75),
        q99: avg(|x| x.q99),
    }
}

/// Evenly spaced window starts, the last one ending at the panel's end.
fn sweep_starts(c: &RunConfig, panel: &ReturnPanel, k: usize) -> Result<Vec<usize>, CliError> {
    if k == 0 {
        return Err(CliError::Usage("--windows must be at least 1".into()));
    }
    let last = default_start(c, panel)?;
    if k == 1 {
        return Ok(vec![last]);
    }
    let mut v: Vec<usize> = (0..k).map(|i| ((i as f64) * last as f64 / (k - 1) as f64).round() as usize).collect();
    v.dedup();
    Ok(v)
}

pub fn sweep(c: &RunConfig, axis: &str, values: Option<Vec<f64>>, windows: usize) -> Result<(), CliError> {
    let axis = match axis {
        "b" => SweepAxis::B,
        "upsilon" => SweepAxis::Upsilon,
        other => return Err(CliError::Usage(format!("--axis: expected b or upsilon, got {other:?}"))),
    };
    let values = values.unwrap_or_else(|| match axis {
        SweepAxis::B => (3..=18).map(f64::from).collect(),
        SweepAxis::Upsilon => (6..=15).map(f64::from).collect(),
    });
    if values.is_empty() {
        return Err(CliError::Usage("--values is empty".into()));
    }
    let panel = load_data(c)?;
    let base = c.cdcv_config()?;
    let starts = sweep_starts(c, &panel, windows)?;
    let mut configs = Vec::with_capacity(values.len());
    for &v in &values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::B => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Usage(format!("cluster count must be a positive integer, got {v}")));
                }
                cfg.clustering.stop = StoppingRule::Clusters(v as usize);
            }
            SweepAxis::Upsilon => cfg.index.upsilon = v,
        }
        cfg.validate()?;
        configs.push(cfg);
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|i| starts.iter().map(move |&s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, s)| -> Result<ConditioningDiagnostics, CliError> {
            let (model, window) = fit_window(c, &panel, &configs[i], s)?;
            let mut d = conditioning_diagnostics(&model, &window)?;
            Ok(d.remove(2))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<SweepRow> = results
        .chunks(starts.len())
        .zip(&values)
        .map(|(ds, &value)| {
            debug_assert!(ds.iter().all(|d| d.stage == Stage::FullyConditioned));
            let s: Vec<Summary> = ds.iter().map(|d| d.summary).collect();
            let a: Vec<Summary> = ds.iter().map(|d| d.abs_summary).collect();
            SweepRow { value, n_windows: ds.len(), summary: mean_summary(&s), abs_summary: mean_summary(&a) }
        })
        .collect();

    create_dir(&c.output)?;
    let mut csv = String::from(
        "value,n_windows,mean,std,q1,q25,q50,q75,q99,abs_mean,abs_std,abs_q1,abs_q25,abs_q50,abs_q75,abs_q99\n",
    );
    for r in &rows {
        let f = |s: &Summary| format!("{},{},{},{},{},{},{}", s.mean, s.std, s.q1, s.q25, s.q50, s.q75, s.q99);
        csv.push_str(&format!("{},{},{},{}\n", r.value, r.n_windows, f(&r.summary), f(&r.abs_summary)));
    }
    write_text(&c.output.join("sweep.csv"), &csv)?;
    write_json(
        &c.output.join("sweep.json"),
        &SweepFile { schema_version: SCHEMA_VERSION, config: c, axis, window_starts: starts, rows },
    )
}

pub fn diagnostics(c: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let file = load_model(model_path)?;
    let data = c.data.clone().or(file.config.data.clone());
    let mut resolved = c.clone();
    resolved.data = data;
    let panel = load_data(&resolved)?;
    let len = file.model.market.values.len();
    let window = panel.window(RollingWindow::new(file.model.window_start, len))?;
    create_dir(&c.output)?;
    write_json(&c.output.join("diagnostics.json"), &diagnostics_file(&resolved, &file.model, &window)?)
}
