//! `boostnet`: controller design, simulation, dataset generation, training,
//! evaluation, hyperparameter search and reporting from one config file.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boostnet_core::config::RunConfig;
use boostnet_core::control::{design_pi, verify_loop};
use boostnet_core::converter::{dc_steady_state, plant_frequency_response, ConverterParams};
use boostnet_core::dataset::{build_dataset, count_grid, Dataset, FEATURE_NAMES};
use boostnet_core::eval::{box_stats, metric_error_report, write_box_jsonl, CurvePair, MetricReport};
use boostnet_core::nn::checkpoint::{load_weights, save_weights, Checkpoint};
use boostnet_core::nn::search::{random_search, SearchSpace};
use boostnet_core::nn::train::{predict_curves, train_best_of_seeds, train_prepared, write_history, PreparedData};
use boostnet_core::nn::ModelKind;
use boostnet_core::simulate::{simulate_closed_loop, validate_trajectory, Scenario, Validation};
use boostnet_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "boostnet", version, about = "Boost converter surrogate modelling pipeline")]
struct Cli {
    /// Run configuration (TOML); full reference setup when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the PI current controller for one operating point.
    Design {
        #[command(flatten)]
        point: PointArgs,
        /// Output file for the design record (JSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one closed-loop reference step and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        /// Reference step amplitude (A).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        i_step: f64,
        /// Reference step time (s).
        #[arg(long, default_value_t = 0.015)]
        t_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the grid, simulate every point and write the dataset container.
    Generate {
        /// Only count the grid points, without simulating.
        #[arg(long)]
        dry_run: bool,
        /// Also write the rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one or all model kinds on the dataset.
    Train {
        #[arg(long, default_value = "all")]
        model: ModelChoice,
    },
    /// Score trained models on the test curves.
    Evaluate {
        #[arg(long, default_value = "all")]
        model: ModelChoice,
        /// Score the simulated curves against themselves instead of a model.
        #[arg(long)]
        identity: bool,
    },
    /// Random hyperparameter search; the objective is the final validation loss.
    Search {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Collect the metric reports into one summary table.
    Report,
}

#[derive(Clone, Copy)]
enum ModelChoice {
    All,
    One(ModelKind),
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(ModelChoice::All)
        } else {
            s.parse().map(ModelChoice::One)
        }
    }
}

impl ModelChoice {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::All => ModelKind::ALL.to_vec(),
            ModelChoice::One(k) => vec![k],
        }
    }
}

/// Operating point in the units of the parameter table; switching, filter
/// and loop-shaping settings come from the grid section of the config.
#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    l_mh: f64,
    #[arg(long)]
    c_uf: f64,
    #[arg(long)]
    r_ohm: f64,
    /// Output voltage (V).
    #[arg(long)]
    v: f64,
    /// Input voltage (V).
    #[arg(long)]
    v_g: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "level={} target={} msg=\"{}\"",
                record.level(),
                record.target(),
                record.args()
            )
        })
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::NonPositive { .. } | Error::InvalidBoostRatio { .. } | Error::Domain(_) => EXIT_CONFIG,
        Error::NonFiniteLoss { .. } | Error::SimulationDiverged { .. } => EXIT_DIVERGED,
        Error::Load(_) | Error::Io { .. } | Error::Empty(_) | Error::Shape(_) | Error::Rejected(_) => EXIT_DATA,
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .effective();
    match cli.command {
        Command::Design { point, out } => design(&config, &point, out.as_deref()),
        Command::Simulate {
            point,
            i_step,
            t_step,
            out,
        } => simulate(&config, &point, i_step, t_step, &out),
        Command::Generate { dry_run, csv } => generate(&config, dry_run, csv.as_deref()),
        Command::Train { model } => train(&config, model),
        Command::Evaluate { model, identity } => evaluate(&config, model, identity),
        Command::Search { model, trials } => search(&config, model, trials),
        Command::Report => report(&config),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_to(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(p, e))
        }
        None => f(&mut std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn point_params(config: &RunConfig, p: &PointArgs) -> Result<ConverterParams> {
    let g = &config.grid;
    let params = ConverterParams {
        l: p.l_mh * 1e-3,
        c: p.c_uf * 1e-6,
        r: p.r_ohm,
        r_s: g.r_s_ohm,
        v_g: p.v_g,
        f_s: g.f_s_khz * 1e3,
        f_c: g.f_c_khz * 1e3,
    };
    params.validate()?;
    Ok(params)
}

fn design_scenario(config: &RunConfig, p: &PointArgs) -> Result<(Scenario, serde_json::Value)> {
    let g = &config.grid;
    let params = point_params(config, p)?;
    let steady = dc_steady_state(&params, p.v)?;
    let omega = 2.0 * PI * g.f_phi_m_hz;
    let record = design_pi(&plant_frequency_response(&params, &steady, omega), g.f_phi_m_hz, g.phi_m_deg);
    let gains = record
        .gains
        .ok_or_else(|| Error::Domain(format!("no feasible PI design: {record:?}")))?;
    let check = verify_loop(
        &gains,
        |w| plant_frequency_response(&params, &steady, w).gain,
        g.f_phi_m_hz,
        g.phi_m_deg,
    );
    info!(
        "designed K_p = {:.6e}, K_i = {:.6e}; crossover error {:.2e}, margin error {:.2e} deg",
        gains.k_p, gains.k_i, check.crossover_error, check.margin_error
    );
    let json = serde_json::json!({ "steady_state": steady, "design": record, "check": check });
    let scenario = Scenario {
        id: 0,
        params,
        v_target: p.v,
        gains,
        i_step: 0.0,
        t_step: 0.0,
        t_end: g.t_end,
        sample_dt: g.sample_dt,
    };
    Ok((scenario, json))
}

fn design(config: &RunConfig, p: &PointArgs, out: Option<&Path>) -> Result<()> {
    let (_, json) = design_scenario(config, p)?;
    write_to(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &json)?;
        writeln!(w)
    })
}

fn simulate(config: &RunConfig, p: &PointArgs, i_step: f64, t_step: f64, out: &Path) -> Result<()> {
    let (mut scenario, _) = design_scenario(config, p)?;
    scenario.i_step = i_step;
    scenario.t_step = t_step;
    let traj = simulate_closed_loop(&scenario)?;
    match validate_trajectory(&traj, &scenario.params) {
        Validation::Accept => info!("trajectory accepted"),
        Validation::Reject(reason) => log::warn!("trajectory would be rejected from datasets: {reason:?}"),
    }
    traj.save_csv(out)?;
    info!("wrote {} samples to {}", traj.time.len(), out.display());
    Ok(())
}

fn generate(config: &RunConfig, dry_run: bool, csv: Option<&Path>) -> Result<()> {
    if dry_run {
        let n = count_grid(&config.grid)?;
        info!("grid enumerates {n} scenarios (full product {})", config.grid.full_size());
        println!("{n}");
        return Ok(());
    }
    let ds = build_dataset(&config.grid, config.split.test_fraction, config.split.seed)?;
    let c = ds.provenance.counts;
    info!(
        "enumerated {} accepted {} rejected: saturation {} dcm {} infeasible_pi {} diverged {}",
        c.enumerated, c.accepted, c.saturation, c.dcm, c.infeasible_pi, c.diverged
    );
    let path = &config.paths.dataset;
    create(path)?;
    ds.save(path)?;
    info!("wrote {} rows to {}", ds.n_rows(), path.display());
    let provenance = config.paths.reports_dir.join("provenance.json");
    write_to(Some(&provenance), |w| {
        serde_json::to_writer_pretty(&mut *w, &ds.provenance)?;
        writeln!(w)
    })?;
    if let Some(csv) = csv {
        write_to(Some(csv), |w| ds.export_csv(w))?;
    }
    Ok(())
}

fn weights_path(config: &RunConfig, kind: ModelKind) -> PathBuf {
    config.paths.weights_dir.join(format!("{kind}.bnw"))
}

fn load_prepared(config: &RunConfig) -> Result<(Dataset, PreparedData)> {
    let ds = Dataset::load(&config.paths.dataset)?;
    let data = PreparedData::new(&ds)?;
    Ok((ds, data))
}

fn train(config: &RunConfig, choice: ModelChoice) -> Result<()> {
    let (_, data) = load_prepared(config)?;
    for kind in choice.kinds() {
        let hp = config.models.get(kind);
        let (model, scores) = if data.test.is_empty() {
            (train_prepared(&data, kind, hp)?, vec![])
        } else {
            train_best_of_seeds(&data, kind, hp, &config.training.seeds)?
        };
        info!("{kind}: kept seed {} (per-seed mean test RMSE {scores:?})", model.hyperparams.seed);
        let checkpoint = Checkpoint {
            kind,
            hyperparams: model.hyperparams.clone(),
            scaler_hash: data.scaler_hash.clone(),
            weights: model.weights,
        };
        let path = weights_path(config, kind);
        create(&path)?;
        save_weights(&path, &checkpoint)?;
        let history = config.paths.weights_dir.join(format!("{kind}.history.txt"));
        write_to(Some(&history), |w| write_history(&model.history, w))?;
        info!("wrote {} and {}", path.display(), history.display());
    }
    Ok(())
}

fn evaluate(config: &RunConfig, choice: ModelChoice, identity: bool) -> Result<()> {
    let (ds, data) = load_prepared(config)?;
    if data.test.is_empty() {
        return Err(Error::Empty("dataset has no test curves".into()));
    }
    let t_col = FEATURE_NAMES.iter().position(|&n| n == "t").expect("time feature");
    let times: Vec<Vec<f64>> = data
        .test
        .iter()
        .map(|c| ds.features[c.start..c.start + c.len].iter().map(|r| r[t_col]).collect())
        .collect();
    let t_steps: Vec<f64> = ds
        .curves_in(boostnet_core::dataset::Split::Test)
        .map(|c| c.scenario.t_step)
        .collect();
    let targets: Vec<&[[f64; 2]]> = data.test.iter().map(|c| &data.y[c.start..c.start + c.len]).collect();

    let runs: Vec<(String, Vec<Vec<[f64; 2]>>)> = if identity {
        vec![("identity".into(), targets.iter().map(|t| t.to_vec()).collect())]
    } else {
        choice
            .kinds()
            .into_iter()
            .map(|kind| {
                let ck = load_weights(&weights_path(config, kind), kind, Some(&data.scaler_hash))?;
                let preds = predict_curves(&ck.weights, &data, &data.test, ck.hyperparams.window_stride)?;
                Ok((kind.to_string(), preds))
            })
            .collect::<Result<_>>()?
    };

    for (name, preds) in runs {
        let pairs: Vec<CurvePair> = (0..data.test.len())
            .map(|n| CurvePair {
                time: &times[n],
                t_step: t_steps[n],
                pred: &preds[n],
                target: targets[n],
            })
            .collect();
        let report = metric_error_report(&name, &pairs)?;
        let path = config.paths.reports_dir.join(format!("{name}.metrics.jsonl"));
        write_to(Some(&path), |w| report.write_jsonl(w))?;
        let stats = box_stats(&report.curve_rmse)?;
        let box_path = config.paths.reports_dir.join(format!("{name}.box.jsonl"));
        write_to(Some(&box_path), |w| write_box_jsonl(&name, &stats, w))?;
        info!(
            "{name}: median curve RMSE {:.6} A over {} test curves; wrote {}",
            stats.median,
            pairs.len(),
            path.display()
        );
    }
    Ok(())
}

fn search(config: &RunConfig, kind: ModelKind, trials: Option<usize>) -> Result<()> {
    let (_, data) = load_prepared(config)?;
    if data.test.is_empty() {
        return Err(Error::Empty("search needs test curves for the validation loss".into()));
    }
    let base = config.models.get(kind);
    let trials = trials.unwrap_or(config.search.trials);
    let (best, log) = random_search(&SearchSpace::default(), kind, base, trials, config.search.seed, |hp| {
        let model = train_prepared(&data, kind, hp)?;
        Ok(model
            .history
            .last()
            .and_then(|r| r.validation)
            .map_or(f64::INFINITY, |v| v.total))
    })?;
    let path = config.paths.reports_dir.join(format!("search-{kind}.jsonl"));
    write_to(Some(&path), |w| {
        for t in &log {
            serde_json::to_writer(&mut *w, t)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    let best_path = config.paths.reports_dir.join(format!("search-{kind}-best.toml"));
    let text = toml::to_string(&best.hyperparams).map_err(|e| Error::Config(e.to_string()))?;
    write_to(Some(&best_path), |w| w.write_all(text.as_bytes()))?;
    info!("best trial {} with objective {:.6e}; wrote {}", best.index, best.objective, best_path.display());
    Ok(())
}

fn report(config: &RunConfig) -> Result<()> {
    let dir = &config.paths.reports_dir;
    let mut reports = Vec::new();
    for name in ModelKind::ALL.iter().map(|k| k.to_string()).chain(["identity".to_string()]) {
        let path = dir.join(format!("{name}.metrics.jsonl"));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let rows = text
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        reports.push(MetricReport {
            model: name,
            rows,
            curve_rmse: vec![],
        });
    }
    if reports.is_empty() {
        return Err(Error::Empty(format!("no metric reports in {}", dir.display())));
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
    let path = dir.join("summary.txt");
    write_to(Some(&path), |w| {
        writeln!(w, "{:<16} {:<16} {:>11} {:>11} {:>11} {:>6}", "metric", "model", "mean", "std", "median", "curves")?;
        for k in 0..reports[0].rows.len() {
            for r in &reports {
                let row = &r.rows[k];
                let metric = serde_json::to_value(row.metric).unwrap_or_default();
                writeln!(
                    w,
                    "{:<16} {:<16} {:>11} {:>11} {:>11} {:>6}",
                    metric.as_str().unwrap_or("?"),
                    r.model,
                    fmt(row.mean),
                    fmt(row.std),
                    fmt(row.median),
                    row.curves
                )?;
            }
        }
        Ok(())
    })?;
    info!("wrote {}", path.display());
    Ok(())
}
