use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hlstm_core::dataset::{generate_synthetic, load_dataset, save_dataset, GridDataset, SyntheticConfig};
use hlstm_core::experiments::{
    evaluate_models, make_split, run_experiment, run_hindcast_on, write_reports, ExperimentConfig, HindcastConfig,
    HindcastReport, SplitSpec,
};
use hlstm_core::io_util::write_atomic;
use hlstm_core::training::{train_lstm, TrainingConfig};
use hlstm_core::{Error, ModelContainer, ModelKind};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::{RunInputs, RunManifest, RUN_FORMAT, RUN_MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let mut root = &e;
        while let Error::AtStep { source, .. } = root {
            root = source;
        }
        match root {
            Error::InvalidArgument(_)
            | Error::NumericInput(_)
            | Error::InvalidSplit(_)
            | Error::Load { .. }
            | Error::Structural(_)
            | Error::Container(_)
            | Error::Json(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub struct Options {
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub model_file: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Configuration plus, when the file was a run manifest, the recorded inputs.
struct Loaded<T> {
    config: T,
    replay: Option<RunInputs>,
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> CliResult<Loaded<T>> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: T::default(),
            replay: None,
        });
    };
    let value = read_json(path)?;
    let bad = |e: serde_json::Error| CliError::Validation(format!("{}: {e}", path.display()));
    if value.get("format").and_then(Value::as_str) == Some(RUN_FORMAT) {
        let m: RunManifest = serde_json::from_value(value).map_err(bad)?;
        if m.command != command {
            return Err(CliError::Validation(format!(
                "{} records a {} run, not {command}",
                path.display(),
                m.command
            )));
        }
        return Ok(Loaded {
            config: serde_json::from_value(m.config).map_err(bad)?,
            replay: Some(m.inputs),
        });
    }
    Ok(Loaded {
        config: serde_json::from_value(value).map_err(bad)?,
        replay: None,
    })
}

/// A split file holds either a bare spec or the output of `split`.
fn load_split(path: &Path) -> CliResult<SplitSpec> {
    let value = read_json(path)?;
    let value = match value.get("spec") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn resolve_data(opts: &Options, replay: Option<&RunInputs>) -> CliResult<PathBuf> {
    opts.data
        .clone()
        .or_else(|| replay.and_then(|r| r.data.clone()))
        .ok_or_else(|| CliError::Validation("--data is required".into()))
}

fn resolve_split(opts: &Options, replay: Option<&RunInputs>) -> CliResult<SplitSpec> {
    match &opts.split {
        Some(p) => load_split(p),
        None => replay
            .and_then(|r| r.split.clone())
            .ok_or_else(|| CliError::Validation("--split is required".into())),
    }
}

fn load_data(path: &Path) -> CliResult<GridDataset> {
    load_dataset(path).map_err(|e| match e {
        Error::Io { .. } => CliError::Validation(e.to_string()),
        e => e.into(),
    })
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(write_atomic(path, text.as_bytes())?)
}

struct Run {
    command: &'static str,
    clock: Instant,
    started: f64,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Run {
            command,
            clock: Instant::now(),
            started,
            outputs: Vec::new(),
        }
    }

    fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    fn finish(self, out: &Path, config: Value, seeds: BTreeMap<String, u64>, inputs: RunInputs) -> CliResult<()> {
        let mut outputs = self.outputs;
        outputs.push(RUN_MANIFEST_FILE.to_string());
        let manifest = RunManifest {
            format: RUN_FORMAT.to_string(),
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs,
            output_dir: out.to_path_buf(),
            outputs,
            started_unix: self.started,
            wall_seconds: self.clock.elapsed().as_secs_f64(),
        };
        Ok(manifest.write(out)?)
    }
}

fn apply_model_seed(config: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        config.training.seed = s;
        config.ffnn.seed = s;
    }
}

fn model_seeds(config: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("training".to_string(), config.training.seed),
        ("ffnn".to_string(), config.ffnn.seed),
    ])
}

pub fn synth(opts: &Options) -> CliResult<()> {
    let mut run = Run::start("synth");
    let Loaded { mut config, .. } = load_config::<SyntheticConfig>(opts.config.as_deref(), "synth")?;
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    config.validate()?;
    let dataset = generate_synthetic(&config)?;
    create_out(&opts.out)?;
    save_dataset(&dataset, &opts.out)?;
    log::info!("wrote {} pixels x {} days to {}", dataset.pixels.len(), dataset.n_days, opts.out.display());
    run.output(hlstm_core::dataset::MANIFEST_FILE);
    let seeds = BTreeMap::from([("synthetic".to_string(), config.seed)]);
    run.finish(&opts.out, to_value(&config)?, seeds, RunInputs::default())
}

fn day_list(dataset: &GridDataset, set: &hlstm_core::dataset::PixelTimeSet) -> Value {
    json!({
        "start": dataset.date(set.days.start),
        "end": dataset.date(set.days.end - 1),
        "days": [set.days.start, set.days.end],
        "pixel_ids": set.pixels.iter().map(|&p| dataset.pixels[p].id.clone()).collect::<Vec<_>>(),
    })
}

pub fn split(opts: &Options) -> CliResult<()> {
    let mut run = Run::start("split");
    let loaded = load_config::<Value>(opts.config.as_deref(), "split")?;
    let replay = loaded.replay.as_ref();
    let data = resolve_data(opts, replay)?;
    let spec = match (&opts.split, replay) {
        (None, None) if opts.config.is_some() => serde_json::from_value(loaded.config.clone())
            .map_err(|e| CliError::Validation(format!("split config: {e}")))?,
        _ => resolve_split(opts, replay)?,
    };
    let dataset = load_data(&data)?;
    let split = make_split(&dataset, &spec)?;
    create_out(&opts.out)?;
    let doc = json!({
        "spec": spec,
        "description": spec.describe(),
        "train": day_list(&dataset, &split.train),
        "test": day_list(&dataset, &split.test),
    });
    write_json(&opts.out.join("split.json"), &doc)?;
    run.output("split.json");
    let inputs = RunInputs {
        data: Some(data),
        split: Some(spec.clone()),
        ..Default::default()
    };
    run.finish(&opts.out, to_value(&spec)?, BTreeMap::new(), inputs)
}

pub fn train(opts: &Options) -> CliResult<()> {
    let mut run = Run::start("train");
    let Loaded { mut config, replay } = load_config::<ExperimentConfig>(opts.config.as_deref(), "train")?;
    let replay = replay.as_ref();
    apply_model_seed(&mut config, opts.seed);
    let kind = match (opts.model, replay.and_then(|r| r.model), config.models.as_slice()) {
        (Some(k), _, _) | (None, Some(k), _) => k,
        (None, None, [k]) => *k,
        _ => return Err(CliError::Validation("--model is required".into())),
    };
    config.models = vec![kind];
    config.training.validate()?;
    let data = resolve_data(opts, replay)?;
    let spec = resolve_split(opts, replay)?;
    let dataset = load_data(&data)?;
    let split = make_split(&dataset, &spec)?;
    create_out(&opts.out)?;

    let container = if kind == ModelKind::Lstm {
        let training = TrainingConfig {
            features: Some(config.layout(&dataset)),
            ..config.training.clone()
        };
        let ckpt = opts.out.join("checkpoints");
        let (model, history) = train_lstm(&dataset, &split.train, &training, Some(&ckpt))?;
        history.write_csv(&opts.out.join("history.csv"))?;
        run.output("history.csv");
        if ckpt.is_dir() {
            run.output("checkpoints");
        }
        ModelContainer::lstm(model)
    } else {
        hlstm_core::experiments::fit_model(kind, &dataset, &split, &config)?
    };
    container.save(&opts.out.join("model.json"))?;
    run.output("model.json");
    let inputs = RunInputs {
        data: Some(data),
        split: Some(spec),
        model: Some(kind),
        config_file: opts.config.clone(),
        ..Default::default()
    };
    let seeds = model_seeds(&config);
    run.finish(&opts.out, to_value(&config)?, seeds, inputs)
}

pub fn evaluate(opts: &Options) -> CliResult<()> {
    let mut run = Run::start("evaluate");
    let Loaded { mut config, replay } = load_config::<ExperimentConfig>(opts.config.as_deref(), "evaluate")?;
    let replay = replay.as_ref();
    apply_model_seed(&mut config, opts.seed);
    let model_file = opts.model_file.clone().or_else(|| replay.and_then(|r| r.model_file.clone()));
    if let Some(k) = opts.model.or_else(|| replay.and_then(|r| r.model)) {
        config.models = vec![k];
    }
    let data = resolve_data(opts, replay)?;
    let spec = resolve_split(opts, replay)?;
    let dataset = load_data(&data)?;
    create_out(&opts.out)?;

    let outcome = match &model_file {
        Some(path) => {
            let container = ModelContainer::load(path)?;
            config.models = vec![container.kind];
            evaluate_models(&dataset, &spec, vec![container], &config)?
        }
        None => {
            config.training.validate()?;
            let outcome = run_experiment(&dataset, &spec, &config)?;
            let models_dir = opts.out.join("models");
            create_out(&models_dir)?;
            for m in &outcome.models {
                let name = format!("models/{}.json", m.kind);
                m.save(&opts.out.join(&name))?;
                run.output(name);
            }
            outcome
        }
    };
    for f in &outcome.failures {
        log::error!("{} failed: {}", f.model, f.message);
    }
    let seeds = model_seeds(&config);
    let echo = json!({ "experiment": config, "seeds": seeds });
    write_reports(&outcome, &opts.out, &echo)?;
    run.output("metrics.csv");
    run.output("comparison.csv");
    run.output("summary.json");
    let inputs = RunInputs {
        data: Some(data),
        split: Some(spec),
        model: opts.model,
        model_file,
        config_file: opts.config.clone(),
    };
    let failed = !outcome.failures.is_empty() && outcome.models.is_empty();
    run.finish(&opts.out, to_value(&config)?, seeds, inputs)?;
    if failed {
        return Err(CliError::Runtime("every requested model failed".into()));
    }
    Ok(())
}

fn hindcast_summary(report: &HindcastReport, echo: Value) -> Value {
    let models: Vec<Value> = report
        .results
        .iter()
        .map(|r| {
            json!({
                "model": r.model,
                "median_rmse": r.median_rmse,
                "n_failed_pixels": r.n_failed_pixels,
                "windows": report.windows.iter().zip(&r.window_medians).map(|(w, m)| json!({
                    "start": w.start,
                    "end": w.end,
                    "median_rmse": m,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "train": report.train,
        "models": models,
        "failures": report.failures,
        "config": echo,
    })
}

fn hindcast_csv(report: &HindcastReport) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["model", "window_start", "window_end", "pixel_id", "rmse"]).map_err(csv_err)?;
    for r in &report.results {
        for (win, rmse) in report.windows.iter().zip(&r.window_rmse) {
            for (id, v) in report.pixel_ids.iter().zip(rmse) {
                let v = if v.is_finite() { format!("{v:.17e}") } else { String::new() };
                w.write_record([r.model.to_string(), win.start.to_string(), win.end.to_string(), id.clone(), v])
                    .map_err(csv_err)?;
            }
        }
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn hindcast(opts: &Options) -> CliResult<()> {
    let mut run = Run::start("hindcast");
    let Loaded { mut config, replay } = load_config::<HindcastConfig>(opts.config.as_deref(), "hindcast")?;
    let replay = replay.as_ref();
    if let Some(s) = opts.seed {
        config.synthetic.seed = s;
        apply_model_seed(&mut config.experiment, Some(s));
    }
    if let Some(k) = opts.model {
        config.experiment.models = vec![k];
    }
    config.experiment.training.validate()?;
    let data = opts.data.clone().or_else(|| replay.and_then(|r| r.data.clone()));
    let dataset = match &data {
        Some(p) => load_data(p)?,
        None => {
            config.synthetic.validate()?;
            generate_synthetic(&config.synthetic)?
        }
    };
    let (report, models) = run_hindcast_on(&dataset, &config)?;
    for f in &report.failures {
        log::error!("{} failed: {}", f.model, f.message);
    }
    create_out(&opts.out)?;
    let models_dir = opts.out.join("models");
    create_out(&models_dir)?;
    for m in &models {
        let name = format!("models/{}.json", m.kind);
        m.save(&opts.out.join(&name))?;
        run.output(name);
    }
    let mut seeds = model_seeds(&config.experiment);
    if data.is_none() {
        seeds.insert("synthetic".to_string(), config.synthetic.seed);
    }
    let echo = json!({ "hindcast": config, "seeds": seeds });
    write_json(&opts.out.join("summary.json"), &hindcast_summary(&report, echo))?;
    write_json(&opts.out.join("hindcast.json"), &report)?;
    write_atomic(&opts.out.join("hindcast_rmse.csv"), &hindcast_csv(&report)?)?;
    run.output("summary.json");
    run.output("hindcast.json");
    run.output("hindcast_rmse.csv");
    let inputs = RunInputs {
        data,
        config_file: opts.config.clone(),
        ..Default::default()
    };
    let failed = report.results.is_empty();
    run.finish(&opts.out, to_value(&config)?, seeds, inputs)?;
    if failed {
        return Err(CliError::Runtime("every requested model failed".into()));
    }
    Ok(())
}
