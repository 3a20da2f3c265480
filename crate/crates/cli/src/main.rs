use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plausible::ensemble::{build_ensemble, confidence_scores, PlausibleEnsemble, ScoreSource};
use plausible::harness::{
    clean_data, default_grid, disagreement_hit_rate_frontier, generate_synthetic, hit_rate_frontier,
    load_split, prepare_task, resolve_priors, run_grid, selective_frontier, train_method, write_frontier_csv,
    DataSource, ExperimentConfig, FrontierPoint, NoiseSetting, NoisyTask,
};
use plausible::metrics::{EvalContext, MetricsReport, Method};
use plausible::noise::NoiseModel;
use plausible::{
    inject_noise, posterior, Dataset, LabelKind, LinearModel, NoiseDraw, NoiseSpec, PlausibilityConfig, PosteriorTable,
    Provenance,
};

#[derive(Parser)]
#[command(name = "plausible", version, about = "Label-noise experiments with plausible models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every subcommand. Flags override the config file.
#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input CSV with a `y` column, optional `group` column and numeric features.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Noise model: a JSON file, or `uniform:P` / `class:P0,P1`.
    #[arg(long, global = true)]
    noise: Option<String>,
    /// Training method: ignore or hedge.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Ensemble size.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Atypicality bound for plausible draws.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as `clean.csv`.
    Synth,
    /// Flip labels of `--data` under `--noise`; writes `noisy.csv`, `draw.txt`, `noise_model.json`.
    Inject,
    /// Fit `--method` on the noisy `--data`; writes `model.json`.
    Train,
    /// Train a plausible ensemble on the noisy `--data`; writes `ensemble/`.
    Ensemble,
    /// Metrics of a trained model on the noisy `--data`; writes `metrics.json`.
    Metrics {
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// True noise draw (text or bitset); needed for regret and true error.
        #[arg(long)]
        draw: Option<PathBuf>,
    },
    /// Data-cleaning frontiers by ambiguity and predicted probability.
    Clean,
    /// Selective-classification frontiers on the noisy test split.
    Select,
    /// Hit rate among predicted positives, ranked by disagreement and by predicted probability.
    Discover,
    /// Run the full noise × method grid; writes `metrics.json` and `grid_table.txt`.
    Report,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = &cli.common;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    match &cli.command {
        Command::Synth => synth(common),
        Command::Inject => inject(common),
        Command::Train => train(common),
        Command::Ensemble => ensemble(common),
        Command::Metrics { model, draw } => metrics(common, model, draw.as_deref()),
        Command::Clean => clean(common),
        Command::Select => select(common),
        Command::Discover => discover(common),
        Command::Report => report(common),
    }
}

fn parse_noise(arg: &str) -> Result<NoiseSetting> {
    let path = Path::new(arg);
    if path.is_file() {
        let model = NoiseModel::read(path)?;
        let name = path.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok(NoiseSetting { name, model });
    }
    let spec: NoiseSpec = arg.parse()?;
    Ok(NoiseSetting::new(arg, spec))
}

/// The config file (or defaults) with command-line overrides applied.
fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::read(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &common.data {
        config.data = DataSource::Csv(path.clone());
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(noise) = &common.noise {
        config.noise = vec![parse_noise(noise)?];
    }
    if let Some(method) = common.method {
        config.methods = vec![method];
    }
    if let Some(m) = common.m {
        config.m = m;
    }
    if let Some(eps) = common.epsilon {
        config.epsilon = eps;
    }
    config.validate()?;
    Ok(config)
}

fn require_data(common: &Common) -> Result<&Path> {
    match &common.data {
        Some(p) => Ok(p),
        None => bail!("this command needs --data"),
    }
}

fn write_json(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(common: &Common) -> Result<()> {
    let config = load_config(&Common { data: None, ..common.clone() })?;
    let DataSource::Synthetic(spec) = &config.data else {
        bail!("the config's data source is a CSV file, not a synthetic spec");
    };
    let data = generate_synthetic(spec, config.seed)?;
    let path = common.out.join("clean.csv");
    data.dataset.write_csv(&path)?;
    println!("wrote {} ({} rows)", path.display(), data.dataset.len());
    let meta = serde_json::json!({ "spec": spec, "seed": config.seed, "bayes_error": data.bayes_error });
    write_json(&common.out.join("synthetic.json"), &serde_json::to_string_pretty(&meta)?)
}

fn inject(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let clean = Dataset::read_csv(require_data(common)?, LabelKind::Clean)?;
    let setting = &config.noise[0];
    let (noisy, draw) = inject_noise(&clean, &setting.model.spec, config.seed)?;
    let path = common.out.join("noisy.csv");
    noisy.write_csv(&path)?;
    println!("wrote {} ({} of {} labels flipped)", path.display(), draw.flips(), draw.len());
    draw.write_text(common.out.join("draw.txt"))?;
    // Store the priors used so later commands see the same posterior.
    let priors = resolve_priors(&setting.model, &noisy)?;
    let model = NoiseModel::new(setting.model.spec.clone(), Some(priors))?;
    write_json(&common.out.join("noise_model.json"), &model.to_json())
}

/// Noisy data from `--data`, the noise setting, and its posterior.
fn noisy_input(common: &Common, config: &ExperimentConfig) -> Result<(Dataset, NoiseSetting, PosteriorTable)> {
    let noisy = Dataset::read_csv(require_data(common)?, LabelKind::Noisy)?;
    let setting = config.noise[0].clone();
    let priors = resolve_priors(&setting.model, &noisy)?;
    let posterior = posterior(&setting.model.spec, &priors)?;
    Ok((noisy, setting, posterior))
}

fn train(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let (noisy, setting, _) = noisy_input(common, &config)?;
    let method = config.methods[0];
    let model = train_method(&noisy, &setting.model.spec, method, &config.train)?;
    write_json(&common.out.join("model.json"), &model.to_json())
}

fn ensemble(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let (noisy, _, posterior) = noisy_input(common, &config)?;
    let plausibility = PlausibilityConfig::new(config.epsilon, config.ensemble_seed(0))?;
    let ens = build_ensemble(&noisy, &posterior, &plausibility, config.m, &config.train)?;
    let dir = common.out.join("ensemble");
    ens.save(&dir)?;
    println!("wrote {} ({} members)", dir.display(), ens.len());
    Ok(())
}

fn metrics(common: &Common, model_path: &Path, draw_path: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let (noisy, _, posterior) = noisy_input(common, &config)?;
    let model = LinearModel::read(model_path)?;
    let Some(draw_path) = draw_path else {
        bail!("metrics needs the true noise draw (--draw) for regret and true error");
    };
    let draw = NoiseDraw::read(draw_path, Provenance::TrueDraw)?;
    let ctx = EvalContext::new(&model, &noisy, Some(&draw), config.methods[0], &posterior)?;
    let report = MetricsReport::compute(&ctx)?;
    write_json(&common.out.join("metrics.json"), &serde_json::to_string_pretty(&report)?)
}

/// The first noise setting of the config applied to a seeded train/test split,
/// plus the base model and an ensemble trained on the noisy training rows.
fn experiment(common: &Common) -> Result<(ExperimentConfig, NoisyTask, LinearModel, PlausibleEnsemble)> {
    let config = load_config(common)?;
    let data = load_split(&config)?;
    let task = prepare_task(&config, &data, 0)?;
    let base = train_method(&task.noisy_train, &task.spec, config.methods[0], &config.train)?;
    let plausibility = PlausibilityConfig::new(config.epsilon, config.ensemble_seed(0))?;
    let ens = build_ensemble(&task.noisy_train, &task.posterior, &plausibility, config.m, &config.train)?;
    Ok((config, task, base, ens))
}

fn write_frontiers(out: &Path, prefix: &str, frontiers: [(&str, Vec<FrontierPoint>); 2]) -> Result<()> {
    for (name, points) in frontiers {
        let path = out.join(format!("frontier_{prefix}_{name}.csv"));
        write_frontier_csv(&points, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn clean(common: &Common) -> Result<()> {
    let (config, task, base, ens) = experiment(common)?;
    let grid = default_grid();
    let by_amb = confidence_scores(&ScoreSource::Ambiguity(&ens), &task.noisy_train)?;
    let by_prob = confidence_scores(&ScoreSource::PredictedProbability(&base), &task.noisy_train)?;
    write_frontiers(
        &common.out,
        "clean",
        [
            ("ambiguity", clean_data(&task.noisy_train, &by_amb, &grid, &task.test, &config.train)?),
            ("probability", clean_data(&task.noisy_train, &by_prob, &grid, &task.test, &config.train)?),
        ],
    )
}

fn select(common: &Common) -> Result<()> {
    let (config, task, base, ens) = experiment(common)?;
    let grid = default_grid();
    let ctx = EvalContext::new(&base, &task.test.noisy, Some(&task.test.draw), config.methods[0], &task.posterior)?;
    let by_amb: Vec<f64> = ens
        .sample_test_ambiguities(&task.test.noisy, &task.posterior)?
        .into_iter()
        .map(|a| 1.0 - a)
        .collect();
    let by_prob = confidence_scores(&ScoreSource::PredictedProbability(&base), &task.test.noisy)?;
    write_frontiers(
        &common.out,
        "select",
        [
            ("ambiguity", selective_frontier(&ctx, &by_amb, &grid)?),
            ("probability", selective_frontier(&ctx, &by_prob, &grid)?),
        ],
    )
}

fn discover(common: &Common) -> Result<()> {
    let (config, task, base, ens) = experiment(common)?;
    let grid = default_grid();
    let ctx = EvalContext::new(&base, &task.test.noisy, Some(&task.test.draw), config.methods[0], &task.posterior)?;
    let by_prob = confidence_scores(&ScoreSource::PredictedProbability(&base), &task.test.noisy)?;
    let by_dis = disagreement_hit_rate_frontier(&ctx, &ens, &grid)?;
    if by_dis.is_empty() {
        log::warn!("the base model predicts no positives on the test split");
    }
    write_frontiers(
        &common.out,
        "discover",
        [("disagreement", by_dis), ("probability", hit_rate_frontier(&ctx, &by_prob, &grid)?)],
    )
}

fn report(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let report = run_grid(&config)?;
    report.write(&common.out)?;
    print!("{}", report.table());
    println!("wrote {} and {}", common.out.join("metrics.json").display(), common.out.join("grid_table.txt").display());
    Ok(())
}
