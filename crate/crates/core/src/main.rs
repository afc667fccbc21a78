use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oran_balance::config::RunConfig;
use oran_balance::io::{
    meta_path, read_dataset_meta, read_feature_csv, read_json, read_snapshot_csv, write_dataset_meta,
    write_feature_csv, write_json, write_snapshot_csv, DatasetMeta, FeatureTable,
};
use oran_balance::labeler::attach_labels;
use oran_balance::pipeline::{evaluate, read_model, train_model, write_model, ModelFile, ModelKind};
use oran_balance::report::ReportBundle;
use oran_balance::ric::{
    optimize, select_policy, BalanceModel, LocationType, OperationalContext, OptimizeOptions, OracleLabeler,
    PolicyTable, RicState, SearchMode, TrafficLevel,
};
use oran_balance::twin::generate_dataset;
use oran_balance::{Error, KpmRecord, PolicyName, ThresholdPolicy};

#[derive(Parser)]
#[command(name = "oran-balance", version, about = "Load-balance-aware RU sleeping on a simulated O-RAN deployment")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate snapshots and write the snapshot CSV plus its metadata sidecar.
    Generate(GenerateArgs),
    /// Add a policy's label column to a snapshot CSV.
    Label(LabelArgs),
    /// Compute the feature CSV from a snapshot CSV.
    Featurize(FeaturizeArgs),
    /// Train a model on one policy's labels and write the model file.
    Train(TrainArgs),
    /// Score models and all baselines on the held-out split.
    Evaluate(EvaluateArgs),
    /// Choose an RU configuration for a saved deployment state.
    Optimize(OptimizeArgs),
    /// Write plot-ready tables from an evaluation bundle.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of RUs.
    #[arg(long = "scenario")]
    n_rus: Option<usize>,
    #[arg(long)]
    ues: Option<usize>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save one snapshot as an optimizer state file.
    #[arg(long)]
    state_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    state_index: usize,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicyName>,
    /// Defaults to rewriting the input file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicyName>,
    #[arg(long, default_value = "forest")]
    model: ModelKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    /// Model file; repeat to compare several.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Labelled snapshot CSV behind the features, for per-category means.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    state: Option<PathBuf>,
    /// Model file; the one trained for the selected policy is used.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Judge candidates with the threshold rule on true metrics.
    #[arg(long, conflicts_with = "models")]
    oracle: bool,
    #[arg(long, default_value = "standard")]
    location: LocationType,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u8).range(0..24))]
    hour: u8,
    #[arg(long, default_value = "medium")]
    traffic: TrafficLevel,
    /// TOML policy override rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value = "exhaustive")]
    mode: SearchMode,
    #[arg(long)]
    well_balanced_only: bool,
    /// Decision report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the state with the chosen configuration applied.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn required<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage(format!("missing {what} (pass it as a flag or set it in --config)")))
}

fn path_or(flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    required(flag.or_else(|| from_config.clone()), what)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `oran-balance --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => generate(a, cfg),
        Command::Label(a) => label(a, cfg),
        Command::Featurize(a) => featurize(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Evaluate(a) => evaluate_cmd(a, cfg),
        Command::Optimize(a) => optimize_cmd(a, cfg),
        Command::Report(a) => report(a, cfg),
    }
}

fn generate(a: GenerateArgs, cfg: RunConfig) -> CliResult {
    let seed = required(a.seed.or(cfg.seed), "--seed")?;
    let n = required(a.snapshots.or(cfg.snapshots), "--snapshots")?;
    let out = path_or(a.out, &cfg.paths.data, "--out")?;
    let mut scenario = cfg.scenario;
    if let Some(n_rus) = a.n_rus {
        scenario.n_rus = n_rus;
    }
    if let Some(ues) = a.ues {
        scenario.n_ues = ues;
    }
    scenario.seed = seed;
    let twin = cfg.twin;

    let snaps = generate_dataset(&scenario, &twin, n, seed)?;
    let records: Vec<KpmRecord> = snaps.iter().map(|s| s.state.kpm(s.id, scenario.prb_per_ru)).collect();
    write_snapshot_csv(&out, &records)?;
    write_dataset_meta(&meta_path(&out), &DatasetMeta::new(&scenario, &twin, seed, n))?;
    log::info!("wrote {n} snapshots to {}", out.display());

    if let Some(state_out) = a.state_out {
        let snap = snaps
            .get(a.state_index)
            .ok_or_else(|| Failure::Usage(format!("--state-index {} is beyond {n} snapshots", a.state_index)))?;
        let state = RicState {
            scenario: scenario.clone(),
            twin: twin.clone(),
            deployment: snap.deployment.clone(),
            config: snap.state.config().clone(),
        };
        write_json(&state_out, &state)?;
    }
    Ok(())
}

fn label(a: LabelArgs, cfg: RunConfig) -> CliResult {
    let data = path_or(a.data, &cfg.paths.data, "--data")?;
    let policy = required(a.policy.or(cfg.policy), "--policy")?;
    let out = a.out.unwrap_or_else(|| data.clone());
    let mut records = read_snapshot_csv(&data)?;
    attach_labels(&mut records, &ThresholdPolicy::builtin(policy))?;
    write_snapshot_csv(&out, &records)?;
    let meta_in = meta_path(&data);
    if meta_in.exists() {
        let mut meta = read_dataset_meta(&meta_in)?;
        if !meta.labelled.contains(&policy) {
            meta.labelled.push(policy);
            meta.labelled.sort();
        }
        write_dataset_meta(&meta_path(&out), &meta)?;
    }
    Ok(())
}

fn featurize(a: FeaturizeArgs, cfg: RunConfig) -> CliResult {
    let data = path_or(a.data, &cfg.paths.data, "--data")?;
    let out = path_or(a.out, &cfg.paths.features, "--out")?;
    let records = read_snapshot_csv(&data)?;
    write_feature_csv(&out, &FeatureTable::from_records(&records)?)?;
    Ok(())
}

fn train(a: TrainArgs, cfg: RunConfig) -> CliResult {
    let features = path_or(a.features, &cfg.paths.features, "--features")?;
    let policy = required(a.policy.or(cfg.policy), "--policy")?;
    let seed = required(a.seed.or(cfg.seed), "--seed")?;
    let out = path_or(a.out, &cfg.paths.model, "--out")?;
    let mut params = cfg.train;
    if let Some(t) = a.trees {
        params.forest.n_trees = t;
    }
    if let Some(d) = a.depth {
        params.forest.max_depth = d;
    }
    if let Some(k) = a.cv_folds {
        params.split.cv_folds = k;
    }
    let table = read_feature_csv(&features)?;
    let file = train_model(&table, policy, a.model, &params, seed)?;
    write_model(&out, &file)?;
    print!("model={} policy={policy} validation_f1_macro={:.4} test_f1_macro={:.4}", a.model, file.validation.f1_macro, file.test.f1_macro);
    if let (Some(m), Some(s)) = (file.test.cv_mean, file.test.cv_std) {
        print!(" cv_f1={m:.4}+-{s:.4}");
    }
    println!();
    Ok(())
}

fn model_name(file: &ModelFile, path: &Path, taken: &[(String, ModelFile)]) -> String {
    let base = file.model.kind().to_string();
    if taken.iter().any(|(n, _)| *n == base) {
        path.file_stem().map_or(base.clone(), |s| s.to_string_lossy().into_owned())
    } else {
        base
    }
}

fn evaluate_cmd(a: EvaluateArgs, cfg: RunConfig) -> CliResult {
    let features = path_or(a.features, &cfg.paths.features, "--features")?;
    let out = path_or(a.out, &cfg.paths.bundle, "--out")?;
    let paths = if a.models.is_empty() {
        vec![required(cfg.paths.model.clone(), "--model")?]
    } else {
        a.models
    };
    let mut models = Vec::new();
    for p in &paths {
        let f = read_model(p)?;
        let name = model_name(&f, p, &models);
        models.push((name, f));
    }
    let table = read_feature_csv(&features)?;
    let records = match a.data.or(cfg.paths.data) {
        Some(p) => Some(read_snapshot_csv(&p)?),
        None => None,
    };
    let bundle = evaluate(&table, &models, records.as_deref())?;
    write_json(&out, &bundle)?;
    print!("{}", bundle.summary());
    Ok(())
}

fn optimize_cmd(a: OptimizeArgs, cfg: RunConfig) -> CliResult {
    let state_path = path_or(a.state, &cfg.paths.state, "--state")?;
    let state: RicState = read_json(&state_path)?;
    let ctx = OperationalContext::new(a.location, a.hour, a.traffic)?;
    let rules = match a.rules.or(cfg.paths.rules) {
        Some(p) => Some(PolicyTable::load(&p)?),
        None => None,
    };
    let policy = select_policy(&ctx, rules.as_ref());
    let options = OptimizeOptions {
        mode: a.mode,
        well_balanced_only: a.well_balanced_only,
    };

    let model_paths = if a.models.is_empty() {
        cfg.paths.model.into_iter().collect()
    } else {
        a.models
    };
    let loaded;
    let oracle = OracleLabeler(policy);
    let model: &dyn BalanceModel = if a.oracle {
        &oracle
    } else {
        if model_paths.is_empty() {
            return Err(Failure::Usage("pass --model or --oracle".into()));
        }
        let mut found = None;
        for p in &model_paths {
            let f = read_model(p)?;
            if f.policy == policy.name {
                found = Some(f);
                break;
            }
        }
        loaded = found.ok_or_else(|| {
            Error::Config(format!("no model file was trained for the selected {} policy", policy.name))
        })?;
        &loaded.model
    };

    let decision = optimize(&state, policy.name, model, &options)?;
    let mut text = format!(
        "context location={} hour={} traffic={}\n",
        ctx.location_type, ctx.hour_of_day, ctx.traffic_level
    );
    text.push_str(&decision.report());
    match a.out {
        Some(p) => std::fs::write(&p, &text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    if let Some(p) = a.state_out {
        write_json(&p, &state.with_config(decision.config().clone()))?;
    }
    Ok(())
}

fn report(a: ReportArgs, cfg: RunConfig) -> CliResult {
    let bundle_path = path_or(a.bundle, &cfg.paths.bundle, "--bundle")?;
    let out_dir = path_or(a.out_dir, &cfg.paths.out_dir, "--out-dir")?;
    let bundle: ReportBundle = read_json(&bundle_path)?;
    for name in bundle.write_tables(&out_dir)? {
        println!("{}", out_dir.join(name).display());
    }
    Ok(())
}
