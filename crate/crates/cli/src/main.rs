//! Batch front end over the `lesa-core` pipeline. Every subcommand reads and
//! writes files or prints CSV; there is no interactive mode. Exit codes: 0 on
//! success, 1 when the input was rejected, 2 when the work itself failed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lesa_core::io::{load_dataset, read_model, read_trajectory, write_model, write_trajectory};
use lesa_core::metrics::{endpoint_rel_err, RASTER_EXTENT};
use lesa_core::numfmt::g9;
use lesa_core::train::{prepare_dataset, training_log_csv, train_closed_loop, train_gt_guided};
use lesa_core::{
    compare, flop_account, psnr, rasterize, run_accelerated, ssim, BackboneConfig, CostModel,
    Error, Method, Modulator, ModulatorSpec, Result, StageConfig, StagePredictor, StepPlan,
    TrainConfig, Trajectory,
};

#[derive(Parser)]
#[command(name = "lesa", version, about = "Feature-cache acceleration toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record full-compute trajectories for a seed range
    Record(RecordArgs),
    /// Train a stage predictor on recorded trajectories
    Train(TrainArgs),
    /// Run one accelerated trajectory and save it
    Run(RunArgs),
    /// Compare a trajectory file against a reference recording
    Eval(EvalArgs),
    /// Print the step plan's cost accounting as CSV
    Flops(FlopsArgs),
    /// Benchmark methods across intervals and seeds into a CSV report
    Report(ReportArgs),
}

#[derive(Args)]
struct RecordArgs {
    /// Backbone kind: gmm or synth
    #[arg(long)]
    backbone: Option<String>,
    /// Seed range A..B (half-open) or a single seed
    #[arg(long)]
    seeds: String,
    /// Schedule length
    #[arg(long)]
    steps: Option<usize>,
    /// Feature dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Directory for the trajectory files
    #[arg(long)]
    out: PathBuf,
    /// Backbone config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of recorded .lesa trajectories
    #[arg(long)]
    data: PathBuf,
    /// Stage boundaries b1,b2
    #[arg(long, default_value = "16,41")]
    stages: String,
    /// Per-stage history windows k1,k2,k3
    #[arg(long, default_value = "4,8,8")]
    windows: String,
    /// Modulator head: kan or mlp
    #[arg(long, default_value = "kan")]
    modulator: String,
    /// Spline components or MLP hidden width
    #[arg(long, default_value_t = 16)]
    m_components: usize,
    /// Spline grid intervals (kan only)
    #[arg(long, default_value_t = 8)]
    grid: usize,
    /// Full-step interval of the training plan
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    epochs_gt: usize,
    #[arg(long, default_value_t = 2)]
    epochs_cl: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Decoupled weight decay
    #[arg(long, default_value_t = 1e-4)]
    wd: f64,
    /// Global gradient-norm clip
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    /// Seed for parameter initialization
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Trained model file (required by the lesa method)
    #[arg(long)]
    model: Option<PathBuf>,
    /// full, reuse, taylor:m, or lesa
    #[arg(long)]
    method: String,
    /// Full-step interval
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backbone config file; defaults apply when omitted
    #[arg(long)]
    backbone_config: Option<PathBuf>,
    /// Output trajectory file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference trajectory file
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Trajectory file under test
    #[arg(long)]
    test: PathBuf,
    /// Also write the metric CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Full-step interval
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Stage boundaries b1,b2
    #[arg(long, default_value = "16,41")]
    stages: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Comma list drawn from full, reuse, taylor:m
    #[arg(long)]
    methods: String,
    /// Comma list of full-step intervals
    #[arg(long)]
    ns: String,
    /// Seed range A..B (half-open) or a single seed
    #[arg(long)]
    seeds: String,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
    /// Backbone config file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parallel seed evaluations
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli.cmd) {
        let code = err.code();
        let text = err.to_string();
        let prefix = format!("{code}: ");
        let message = text.strip_prefix(&prefix).unwrap_or(&text);
        eprintln!("error: {code}: {message}");
        let status = match err {
            Error::Validation(_) | Error::Config(_) => 1,
            _ => 2,
        };
        std::process::exit(status);
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Record(a) => record(a),
        Cmd::Train(a) => train(a),
        Cmd::Run(a) => run(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Flops(a) => flops(a),
        Cmd::Report(a) => report(a),
    }
}

fn record(a: RecordArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(kind) = &a.backbone {
        cfg.set("backbone", kind)?;
    }
    if let Some(steps) = a.steps {
        cfg.steps = steps;
    }
    if let Some(dim) = a.dim {
        cfg.dim = dim;
    }
    let backbone = cfg.build()?;
    let seeds = parse_seeds(&a.seeds)?;
    prepare_dataset(&backbone, &seeds, &a.out)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let steps = data[0].steps();
    let dim = data[0].feature_dim();
    let stages = parse_stages(&a.stages)?;
    let windows = parse_windows(&a.windows)?;
    let spec = match a.modulator.as_str() {
        "kan" => {
            let mut spec = ModulatorSpec::kan(a.m_components);
            spec.grid_intervals = a.grid;
            spec
        }
        "mlp" => ModulatorSpec::mlp(a.m_components),
        other => {
            return Err(Error::Validation(format!(
                "modulator must be kan or mlp, got `{other}`"
            )))
        }
    };
    let plan = StepPlan::build(steps, a.n, stages)?;
    let mut model = StagePredictor::init(steps, dim, stages, windows, &spec, a.seed)?;
    let cfg = TrainConfig {
        lr: a.lr,
        weight_decay: a.wd,
        clip_norm: a.clip,
        epochs_gt: a.epochs_gt,
        epochs_cl: a.epochs_cl,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    train_gt_guided(&mut model, &data, &plan, &cfg, &mut log)?;
    train_closed_loop(&mut model, &data, &plan, &cfg, &mut log)?;
    write_model(&a.out, &model)?;
    print!("{}", training_log_csv(&log));
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = load_config(a.backbone_config.as_deref())?;
    let backbone = cfg.build()?;
    let stages = StageConfig::new(cfg.synth_b1, cfg.synth_b2);
    let plan = StepPlan::build(cfg.steps, a.n, stages)?;
    let method = parse_method(&a.method, a.model.as_deref())?;
    let traj = run_accelerated(&backbone, &plan, &method, a.seed)?;
    write_trajectory(&a.out, &traj)
}

fn eval(a: EvalArgs) -> Result<()> {
    let reference = read_trajectory(&a.reference)?;
    let test = read_trajectory(&a.test)?;
    if reference.steps() != test.steps() {
        return Err(Error::Validation(format!(
            "trajectories disagree on steps: {} vs {}",
            reference.steps(),
            test.steps()
        )));
    }
    let mae = feature_mae(&reference, &test)?;
    let endpoint = endpoint_rel_err(test.endpoint(), reference.endpoint())?;
    let ref_grid = rasterize(&[reference.endpoint().to_vec()], RASTER_EXTENT)?;
    let test_grid = rasterize(&[test.endpoint().to_vec()], RASTER_EXTENT)?;
    let psnr_db = psnr(&ref_grid, &test_grid)?;
    let ssim = ssim(&ref_grid, &test_grid)?;
    let csv = format!(
        "metric,value\nendpoint_rel_err,{}\nfeature_mae,{}\npsnr_db,{}\nssim,{}\n",
        g9(endpoint),
        g9(mae),
        g9(psnr_db),
        g9(ssim)
    );
    print!("{csv}");
    if let Some(path) = &a.csv {
        write_text(path, &csv)?;
    }
    Ok(())
}

fn flops(a: FlopsArgs) -> Result<()> {
    let stages = parse_stages(&a.stages)?;
    let plan = StepPlan::build(a.steps, a.n, stages)?;
    let acct = flop_account(&plan, &CostModel::default())?;
    println!("steps,N,b1,b2,full,predict,speedup");
    println!(
        "{},{},{},{},{},{},{}",
        a.steps,
        a.n,
        stages.b1,
        stages.b2,
        acct.full_steps,
        acct.predict_steps,
        g9(acct.speedup)
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let backbone = cfg.build()?;
    let stages = StageConfig::new(cfg.synth_b1, cfg.synth_b2);
    let methods = a
        .methods
        .split(',')
        .map(|name| parse_method(name, None))
        .collect::<Result<Vec<_>>>()?;
    let ns = a
        .ns
        .split(',')
        .map(|v| parse_field(v, "interval list"))
        .collect::<Result<Vec<usize>>>()?;
    let seeds = parse_seeds(&a.seeds)?;
    let report = compare(
        &backbone,
        &methods,
        &ns,
        &seeds,
        stages,
        &CostModel::default(),
        a.jobs,
    )?;
    write_text(&a.out, &report.emit())
}

fn load_config(path: Option<&Path>) -> Result<BackboneConfig> {
    match path {
        None => Ok(BackboneConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            BackboneConfig::parse(&text)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_field<T: std::str::FromStr>(value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad value `{value}` in {what}")))
}

/// Half-open `A..B` range or a single seed.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = parse_field(a, "seed range")?;
        let b: u64 = parse_field(b, "seed range")?;
        if b <= a {
            return Err(Error::Validation(format!("seed range `{text}` is empty")));
        }
        Ok((a..b).collect())
    } else {
        Ok(vec![parse_field(text, "seed")?])
    }
}

fn parse_stages(text: &str) -> Result<StageConfig> {
    match text.split(',').collect::<Vec<_>>().as_slice() {
        [b1, b2] => Ok(StageConfig::new(
            parse_field(b1, "stages")?,
            parse_field(b2, "stages")?,
        )),
        _ => Err(Error::Validation(format!(
            "stages must be `b1,b2`, got `{text}`"
        ))),
    }
}

fn parse_windows(text: &str) -> Result<(usize, usize, usize)> {
    match text.split(',').collect::<Vec<_>>().as_slice() {
        [k1, k2, k3] => Ok((
            parse_field(k1, "windows")?,
            parse_field(k2, "windows")?,
            parse_field(k3, "windows")?,
        )),
        _ => Err(Error::Validation(format!(
            "windows must be `k1,k2,k3`, got `{text}`"
        ))),
    }
}

fn parse_method(name: &str, model: Option<&Path>) -> Result<Method> {
    let name = name.trim();
    match name {
        "full" => Ok(Method::Full),
        "reuse" => Ok(Method::Reuse),
        "lesa" | "lesa-mlp" => {
            let path = model.ok_or_else(|| {
                Error::Validation(format!("method {name} needs a trained model file"))
            })?;
            let model = read_model(path)?;
            match model.experts()[0].modulator {
                Modulator::Mlp(_) => Ok(Method::LesaMlp(model)),
                Modulator::Kan(_) => Ok(Method::Lesa(model)),
            }
        }
        _ => match name.strip_prefix("taylor:") {
            Some(order) => Method::taylor(parse_field(order, "taylor order")?),
            None => Err(Error::Validation(format!("unknown method `{name}`"))),
        },
    }
}

fn feature_mae(reference: &Trajectory, test: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    for (r, t) in reference.features().iter().zip(test.features()) {
        total += r.mean_abs_diff(t)?;
    }
    Ok(total / reference.steps() as f64)
}
