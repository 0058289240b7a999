//! Command-line surface. Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, ErrorClass, Result};
use crate::evaluation::{evaluate, horizon_seconds, permutation_importance, pi_feature_names, MetricTable, PiDataset};
use crate::features::{chronological_split, write_feature_csv, SampleWindow};
use crate::forecasters::{build_model, ForecastData, Method, Network};
use crate::imaging::{FrameMeta, SkyImage};
use crate::io::{read_tensor, write_tensor};
use crate::manifest::{parse_frame_time, DatasetManifest, DayEntry};
use crate::motion::{aggregate_cmv, cross_camera_filter, sky_flow};
use crate::nn::{train, Tensor, TensorF32};
use crate::pipeline::{
    assemble_windows, calibrate_dataset, extract_features, feature_csv_path, frame_tensor_path, load_days,
    prediction_rows, read_predictions, records_from_predictions, sun_dir, write_predictions, write_synthetic_dataset,
    Calibration, DayData, KeepFrames, Preprocessor, CALIBRATION_FILE, CAMERAS,
};
use crate::segmentation::segment_with_sun;
use crate::solar::solar_position;
use crate::stereo_cbh::{match_height, temporal_fill, CbhMap};
use crate::svg;
use crate::synth::{benchmark_suite, Split};

#[derive(Parser, Debug)]
#[command(name = "asi-nowcast", version, about = "All-sky-imager irradiance nowcasting")]
pub struct Cli {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 selects the sequential reference path.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset directory holding manifest.json.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct StageArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output of `preprocess`.
    #[arg(long)]
    pub pre: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::A => Method::A,
            MethodArg::B => Method::B,
            MethodArg::C => Method::C,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the synthetic benchmark suite as a raw dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 120)]
        frames: usize,
        /// Only the first N days: two thirds train, the rest split between val and test.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Fit lens deviation and camera azimuth from sun detections.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        /// Defaults to <data>/calibration.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproject raw frames onto the sky grid and downsample.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cloud segmentation of preprocessed frames.
    Segment(StageArgs),
    /// Dense flow and filtered cloud motion vectors.
    Flow(StageArgs),
    /// Stereo cloud base height maps.
    Cbh(StageArgs),
    /// Feature series (and optional image tensors) per day.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Read preprocessed frames instead of reprojecting raw ones.
        #[arg(long)]
        pre: Option<PathBuf>,
        /// Also write per-frame input tensors for these image methods.
        #[arg(long, value_delimiter = ',', ignore_case = true)]
        tensors: Vec<MethodArg>,
    },
    /// Train a forecaster on the train split with early stopping on val.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, ignore_case = true)]
        method: MethodArg,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecasts and smart persistence for one split.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Metric tables and figures from prediction files.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Score the persistence column against itself.
        #[arg(long)]
        persistence_self: bool,
    },
    /// Permutation importance of a Method C model.
    Importance {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Quick oracle checks of every stage.
    Selftest,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ErrorClass::Config.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.importance.solar_constant = cfg.solar_constant;
    match cli.threads {
        Some(0) => return Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => {
            // A second call in the same process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        None => {}
    }
    match cli.command {
        Command::Synth { out, frames, days } => cmd_synth(&cfg, &out, frames, days),
        Command::Calibrate { data, out } => {
            let m = DatasetManifest::load(&data.data)?;
            let cal = calibrate_dataset(&data.data, &m, &cfg)?;
            cal.save(&out.unwrap_or_else(|| data.data.join(CALIBRATION_FILE)))
        }
        Command::Preprocess { data, out } => cmd_preprocess(&cfg, &data.data, &out),
        Command::Segment(a) => cmd_segment(&cfg, &a),
        Command::Flow(a) => cmd_flow(&cfg, &a),
        Command::Cbh(a) => cmd_cbh(&cfg, &a),
        Command::Features { data, out, pre, tensors } => cmd_features(&cfg, &data.data, &out, pre.as_deref(), &tensors),
        Command::Train { data, method, features, out } => cmd_train(&cfg, &data.data, method.into(), &features, &out),
        Command::Predict { data, model, features, out, split } => {
            cmd_predict(&cfg, &data.data, &model, &features, &out, split.into())
        }
        Command::Evaluate { predictions, out, persistence_self } => cmd_evaluate(&predictions, &out, persistence_self),
        Command::Importance { data, model, features, out, split } => {
            cmd_importance(&cfg, &data.data, &model, &features, &out, split.into())
        }
        Command::Selftest => {
            let checks = crate::selftest::run();
            for c in &checks {
                println!("{} {:<28} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.pass) {
                Ok(())
            } else {
                Err(Error::Numeric("selftest failed".into()))
            }
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn cmd_synth(cfg: &RunConfig, out: &Path, frames: usize, days: Option<usize>) -> Result<()> {
    let mut suite = benchmark_suite(cfg.seed, frames);
    if let Some(n) = days {
        suite.truncate(n);
        let n = suite.len();
        let train = (n * 2 / 3).max(1);
        let val = (n - train.min(n)) / 2;
        for (i, b) in suite.iter_mut().enumerate() {
            b.split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    for b in &suite {
        b.spec.validate()?;
    }
    let m = write_synthetic_dataset(out, &suite)?;
    log::info!("wrote {} days to {}", m.days.len(), out.display());
    Ok(())
}

fn calibration_for(cfg: &RunConfig, data: &Path, m: &DatasetManifest) -> Result<Calibration> {
    let path = data.join(CALIBRATION_FILE);
    if path.exists() {
        Calibration::load(&path)
    } else {
        calibrate_dataset(data, m, cfg)
    }
}

fn cmd_preprocess(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let m = DatasetManifest::load(data)?;
    let pre = Preprocessor::new(&calibration_for(cfg, data, &m)?, cfg)?;
    for day in &m.days {
        let cams = pre.load_day(data, day)?;
        for (k, frames) in cams.iter().enumerate() {
            let dir = day.camera_dir(out, CAMERAS[k]);
            mkdir(&dir)?;
            for (img, name) in frames.iter().zip(&day.frames) {
                img.write_png(&dir.join(name))?;
            }
        }
    }
    Ok(())
}

fn load_pre_day(cfg: &RunConfig, pre: &Path, day: &DayEntry) -> Result<[Vec<SkyImage>; 2]> {
    let cam = |k: usize| -> Result<Vec<SkyImage>> {
        day.frames
            .iter()
            .map(|f| {
                let meta = FrameMeta::new(parse_frame_time(f)?, CAMERAS[k]);
                SkyImage::read_png(&day.camera_dir(pre, CAMERAS[k]).join(f), cfg.imaging.grid_fov_deg, meta)
            })
            .collect()
    };
    Ok([cam(0)?, cam(1)?])
}

#[derive(Serialize)]
struct CloudFractionRow {
    timestamp: chrono::DateTime<chrono::Utc>,
    camera: &'static str,
    cloud_fraction: f64,
}

fn cmd_segment(cfg: &RunConfig, a: &StageArgs) -> Result<()> {
    let m = DatasetManifest::load(&a.data)?;
    let loc = cfg.site.location()?;
    for day in &m.days {
        let cams = load_pre_day(cfg, &a.pre, day)?;
        let mut rows = Vec::new();
        for (k, frames) in cams.iter().enumerate() {
            let dir = day.camera_dir(&a.out, CAMERAS[k]);
            mkdir(&dir)?;
            for (img, name) in frames.iter().zip(&day.frames) {
                let sun = sun_dir(&solar_position(img.meta.timestamp, &loc));
                let seg = segment_with_sun(img, &cfg.segmentation, Some(&sun))?;
                seg.write_png(&dir.join(name))?;
                rows.push(CloudFractionRow {
                    timestamp: img.meta.timestamp,
                    camera: CAMERAS[k],
                    cloud_fraction: seg.cloud_fraction(),
                });
            }
        }
        write_csv(&day.dir(&a.out).join("cloud_fraction.csv"), &rows)?;
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(d) = path.parent() {
        mkdir(d)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct CmvRow {
    timestamp: chrono::DateTime<chrono::Utc>,
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
    filled: bool,
}

fn cmd_flow(cfg: &RunConfig, a: &StageArgs) -> Result<()> {
    let m = DatasetManifest::load(&a.data)?;
    let loc = cfg.site.location()?;
    for day in &m.days {
        let [c1, c2] = load_pre_day(cfg, &a.pre, day)?;
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        for i in 1..c1.len() {
            let sun = sun_dir(&solar_position(c1[i].meta.timestamp, &loc));
            let t = c1[i].meta.timestamp;
            let m1 = segment_with_sun(&c1[i], &cfg.segmentation, Some(&sun))?.cloud_mask();
            let m2 = segment_with_sun(&c2[i], &cfg.segmentation, Some(&sun))?.cloud_mask();
            s1.push(aggregate_cmv(&sky_flow(&c1[i - 1], &c1[i], &cfg.motion.flow)?, &m1, CAMERAS[0], t)?);
            s2.push(aggregate_cmv(&sky_flow(&c2[i - 1], &c2[i], &cfg.motion.flow)?, &m2, CAMERAS[1], t)?);
        }
        let (s1, s2) = cross_camera_filter(&s1, &s2, cfg.motion.inconsistency_px)?;
        let rows: Vec<CmvRow> = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| CmvRow {
                timestamp: a.timestamp,
                u1: a.mean_u,
                v1: a.mean_v,
                u2: b.mean_u,
                v2: b.mean_v,
                filled: a.filled_by_locf,
            })
            .collect();
        write_csv(&day.dir(&a.out).join("cmv.csv"), &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CbhRow {
    timestamp: chrono::DateTime<chrono::Utc>,
    median_cbh_m: Option<f64>,
    valid_pixels: usize,
}

fn cmd_cbh(cfg: &RunConfig, a: &StageArgs) -> Result<()> {
    let m = DatasetManifest::load(&a.data)?;
    let loc = cfg.site.location()?;
    let rig = cfg.site.rig()?;
    for day in &m.days {
        let [c1, c2] = load_pre_day(cfg, &a.pre, day)?;
        let dir = day.camera_dir(&a.out, CAMERAS[0]);
        mkdir(&dir)?;
        let mut prev: Option<CbhMap> = None;
        let mut rows = Vec::new();
        for ((i1, i2), name) in c1.iter().zip(&c2).zip(&day.frames) {
            let sun = sun_dir(&solar_position(i1.meta.timestamp, &loc));
            let mask = segment_with_sun(i1, &cfg.segmentation, Some(&sun))?.cloud_mask();
            let cur = match_height(i1, i2, &mask, &cfg.cbh, &rig, Some(&sun))?;
            let map = temporal_fill(&cur, prev.as_ref(), &mask)?;
            map.write_png(&dir.join(name))?;
            rows.push(CbhRow {
                timestamp: i1.meta.timestamp,
                median_cbh_m: map.median_m(),
                valid_pixels: map.heights().len(),
            });
            prev = Some(map);
        }
        write_csv(&day.dir(&a.out).join("cbh.csv"), &rows)?;
    }
    Ok(())
}

fn cmd_features(cfg: &RunConfig, data: &Path, out: &Path, pre: Option<&Path>, tensors: &[MethodArg]) -> Result<()> {
    let m = DatasetManifest::load(data)?;
    let keep = KeepFrames {
        method_a: tensors.contains(&MethodArg::A),
        method_b: tensors.contains(&MethodArg::B),
    };
    let preprocessor = match pre {
        Some(_) => None,
        None => Some(Preprocessor::new(&calibration_for(cfg, data, &m)?, cfg)?),
    };
    mkdir(out)?;
    for day in &m.days {
        let [c1, c2] = match (&preprocessor, pre) {
            (Some(p), _) => p.load_day(data, day)?,
            (None, Some(dir)) => load_pre_day(cfg, dir, day)?,
            (None, None) => unreachable!("one frame source is always set"),
        };
        let f = extract_features(&c1, &c2, cfg, keep)?;
        write_feature_csv(&feature_csv_path(out, day.date), &f.rows)?;
        for (method, frames) in [("A", &f.frames_a), ("B", &f.frames_b)] {
            if !frames.is_empty() {
                write_tensor(&frame_tensor_path(out, day.date, method), &stack(frames)?)?;
            }
        }
        log::info!("{}: {} feature rows", day.date, f.rows.len());
    }
    Ok(())
}

fn stack(frames: &[TensorF32]) -> Result<TensorF32> {
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(&frames[0].shape);
    Tensor::from_vec(&shape, frames.iter().flat_map(|f| f.data.iter().copied()).collect())
}

fn unstack(t: TensorF32) -> Vec<TensorF32> {
    let inner = t.shape[1..].to_vec();
    (0..t.shape[0])
        .map(|i| Tensor::from_vec(&inner, t.outer(i).to_vec()).expect("slice of a stacked tensor"))
        .collect()
}

/// Windows (and model inputs) of the days assigned to `split`.
pub fn split_data(
    cfg: &RunConfig,
    data: &Path,
    features: &Path,
    manifest: &DatasetManifest,
    split: Split,
    method: Method,
) -> Result<(Vec<SampleWindow>, ForecastData<f32>)> {
    let subset = DatasetManifest {
        days: manifest.days_in(split).cloned().collect(),
        ..manifest.clone()
    };
    let days: Vec<DayData> = load_days(data, features, &subset)?;
    let windows = assemble_windows(&days, cfg.solar_constant)?;
    let parts = chronological_split(windows, &manifest.boundaries()?)?;
    let windows = match split {
        Split::Train => parts.train,
        Split::Val => parts.val,
        Split::Test => parts.test,
    };
    let fd = if method.uses_images() {
        let mut frames = Vec::new();
        for d in &subset.days {
            let t = read_tensor(&frame_tensor_path(features, d.date, method.tag()))?;
            frames.extend(unstack(t));
        }
        ForecastData::frames(frames, &windows)?
    } else {
        ForecastData::series(&windows)?
    };
    Ok((windows, fd))
}

fn cmd_train(cfg: &RunConfig, data: &Path, method: Method, features: &Path, out: &Path) -> Result<()> {
    let m = DatasetManifest::load(data)?;
    let spec = cfg.architecture(method)?;
    let (train_w, train_d) = split_data(cfg, data, features, &m, Split::Train, method)?;
    let (val_w, val_d) = split_data(cfg, data, features, &m, Split::Val, method)?;
    if train_w.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    let mut net: Network<f32> = build_model(&spec, cfg.seed)?;
    log::info!("{}", net.summary());
    let history = train(&mut net, &train_d, Some(&val_d), &cfg.train_config(&spec))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    let extra = serde_json::json!({
        "seed": cfg.seed,
        "train_windows": train_w.len(),
        "val_windows": val_w.len(),
        "history": history,
    });
    net.save(out, extra)
}

fn cmd_predict(cfg: &RunConfig, data: &Path, model: &Path, features: &Path, out: &Path, split: Split) -> Result<()> {
    let m = DatasetManifest::load(data)?;
    let net = Network::<f32>::load(model)?;
    let (windows, fd) = split_data(cfg, data, features, &m, split, net.spec.method)?;
    if windows.is_empty() {
        return Err(Error::InsufficientData(format!("no {split:?} windows")));
    }
    let times: Vec<_> = windows.iter().map(|w| w.issue_time).collect();
    let records = net.predict(&fd, &times, cfg.solar_constant)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    write_predictions(out, &prediction_rows(&records, &windows, cfg.solar_constant)?)
}

fn write_tables(path: &Path, tables: &[MetricTable]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["day", "horizon_s", "rmse", "mae", "ss", "model"])?;
    for t in tables {
        for c in &t.cells {
            w.write_record([
                c.day.map(|d| d.to_string()).unwrap_or_default(),
                c.horizon_s.map(|h| h.to_string()).unwrap_or_default(),
                c.rmse.to_string(),
                c.mae.to_string(),
                c.ss.map(|s| s.to_string()).unwrap_or_default(),
                t.model.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_evaluate(predictions: &[PathBuf], out: &Path, persistence_self: bool) -> Result<()> {
    mkdir(out)?;
    let mut tables = Vec::new();
    let mut persistence_line = None;
    for p in predictions {
        let (f, r, t) = records_from_predictions(&read_predictions(p)?)?;
        if f.is_empty() {
            return Err(Error::InsufficientData(format!("{}: no predictions", p.display())));
        }
        let (name, forecasts) = if persistence_self {
            ("persistence".to_string(), r.clone())
        } else {
            (f[0].method.clone(), f)
        };
        let table = evaluate(&name, &forecasts, &r, &t)?;
        persistence_line.get_or_insert_with(|| table.by_horizon.iter().map(|c| (c.horizon_s.unwrap_or(0) as f64, c.rmse_reference)).collect::<Vec<_>>());
        tables.push(table);
    }
    write_tables(&out.join("metrics.csv"), &tables)?;

    let mut series: Vec<svg::Series> = tables
        .iter()
        .map(|t| svg::Series {
            label: &t.model,
            points: t.by_horizon.iter().map(|c| (c.horizon_s.unwrap_or(0) as f64, c.rmse)).collect(),
        })
        .collect();
    series.push(svg::Series {
        label: "smart persistence",
        points: persistence_line.unwrap_or_default(),
    });
    svg::write(
        &out.join("rmse_by_horizon.svg"),
        &svg::line_plot("RMSE by horizon", "horizon [s]", "RMSE [W/m2]", &series),
    )?;

    for t in &tables {
        let days: Vec<_> = t.by_day.iter().filter_map(|c| c.day).collect();
        let cols: Vec<String> = (0..crate::features::HORIZONS).map(|h| horizon_seconds(h).to_string()).collect();
        let values: Vec<Vec<f64>> = days
            .iter()
            .map(|d| {
                let mut row = vec![f64::NAN; cols.len()];
                for c in t.cells.iter().filter(|c| c.day == Some(*d)) {
                    if let Some(h) = c.horizon_s {
                        row[(h / 10 - 1) as usize] = c.ss.unwrap_or(f64::NAN);
                    }
                }
                row
            })
            .collect();
        let rows: Vec<String> = days.iter().map(|d| d.to_string()).collect();
        let map = svg::heat_map(&format!("skill score, {}", t.model), &rows, &cols, &values)?;
        svg::write(&out.join(format!("ss_heatmap_{}.svg", t.model)), &map)?;
    }
    Ok(())
}

fn cmd_importance(cfg: &RunConfig, data: &Path, model: &Path, features: &Path, out: &Path, split: Split) -> Result<()> {
    let m = DatasetManifest::load(data)?;
    let net = Network::<f32>::load(model)?;
    if net.spec.method != Method::C {
        return Err(Error::Config("permutation importance needs a Method C model".into()));
    }
    let (windows, _) = split_data(cfg, data, features, &m, split, Method::C)?;
    let ds = PiDataset::from_windows(&windows, cfg.solar_constant)?;
    let names = pi_feature_names();
    let all: Vec<usize> = (0..names.len()).collect();
    let report = permutation_importance(&net, &ds, &all, &cfg.importance)?;
    mkdir(out)?;
    report.write_csv(&out.join("importance.csv"))?;
    let cols: Vec<String> = (1..=report.reference_mae.len())
        .map(|b| (b as u32 * report.bucket_s).to_string())
        .collect();
    let rows: Vec<String> = report.rows.iter().map(|r| r.feature.clone()).collect();
    let values: Vec<Vec<f64>> = report.rows.iter().map(|r| r.delta_mae.clone()).collect();
    svg::write(
        &out.join("importance.svg"),
        &svg::heat_map("delta MAE by horizon bucket [W/m2]", &rows, &cols, &values)?,
    )
}
