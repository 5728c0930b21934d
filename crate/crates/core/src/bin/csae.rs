// SPDX-License-Identifier: Apache-2.0

//! `csae` command-line interface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use csae::arrays::{coarray, nested_ula_bound, PhysicalArray};
use csae::esprit::Decomposition;
use csae::estimator::{shot_schedule, total_queries, ArrayConfig, Estimator, Schedule};
use csae::grover_sim::{sample_set, TrueState};
use csae::harness::{
    monte_carlo, percentile_error, read_points_csv, scaling_sweep, speedup_curve, wls_fit,
    write_points_csv, write_speedup_csv, write_trials_csv, AmplitudeSpec, MonteCarloConfig,
    SweepConfig,
};
use csae::presets::PresetName;
use csae::signal::SynthesisMethod;
use csae::signsearch::{SearchConfig, WindowBase};
use csae::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "csae",
    version,
    about = "Amplitude estimation from sparse Grover depths"
)]
struct Cli {
    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one run and estimate the amplitude.
    Estimate(EstimateArgs),
    /// Monte Carlo error statistics over many seeded runs.
    Benchmark(BenchmarkArgs),
    /// Fit N = C/ε + b to (ε, N) points, either from a file or a fresh sweep over q.
    Fit(FitArgs),
    /// Physical positions, co-array and ULA length.
    Arrays(ArraysArgs),
    /// Per-depth shot counts and query totals.
    Schedule(ScheduleArgs),
    /// Greedy parallel depth for a range of QPU counts.
    Speedup(SpeedupArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug, Default)]
struct ArrayArgs {
    /// Bundled schedule: table3, table4 or table5.
    #[arg(long)]
    preset: Option<PresetName>,
    /// Co-array order.
    #[arg(long)]
    q: Option<u32>,
    /// Nesting levels N_1..N_2q (comma separated).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Explicit measurement depths (comma separated).
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<u64>>,
    /// Shot scale.
    #[arg(long)]
    k: Option<f64>,
    /// Use at most this many ULA lags.
    #[arg(long)]
    ula_limit: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SearchArgs {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, value_parser = parse_decomposition)]
    decomposition: Option<Decomposition>,
    #[arg(long, value_parser = parse_synthesis)]
    synthesis: Option<SynthesisMethod>,
    #[arg(long, value_parser = parse_window_base)]
    window_base: Option<WindowBase>,
    #[arg(long)]
    renormalize: bool,
    /// Report the raw ESPRIT angle without the final likelihood polish.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// True angle θ in [0, π/2].
    #[arg(long, conflicts_with = "amplitude")]
    theta: Option<f64>,
    /// True amplitude a = sin θ.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, env = "CSAE_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the result JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    trials: Option<usize>,
    /// Fixed amplitude for every trial.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Uniform amplitude range as LOW,HIGH.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    amplitude_range: Option<Vec<f64>>,
    /// Confidence level δ.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, env = "CSAE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Trial CSV output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Existing `epsilon,queries` CSV; when absent a sweep is run.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Orders to sweep (comma separated).
    #[arg(long, value_delimiter = ',')]
    qs: Option<Vec<u32>>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    amplitude_range: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, env = "CSAE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Use every available ULA lag instead of the theorem length.
    #[arg(long)]
    full_ula: bool,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Point CSV output (sweep only).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ArraysArgs {
    #[arg(long)]
    q: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Explicit positions instead of nesting levels.
    #[arg(long, value_delimiter = ',')]
    positions: Option<Vec<u64>>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[command(flatten)]
    array: ArrayArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpeedupArgs {
    #[command(flatten)]
    array: ArrayArgs,
    /// QPU counts (comma separated); defaults to 1..=64.
    #[arg(long, value_delimiter = ',')]
    qpus: Option<Vec<usize>>,
    /// `n_qpus,parallel_depth` CSV output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<PresetName>,
    q: Option<u32>,
    levels: Option<Vec<u32>>,
    depths: Option<Vec<u64>>,
    k: Option<f64>,
    ula_limit: Option<usize>,
    theta: Option<f64>,
    amplitude: Option<f64>,
    amplitude_range: Option<[f64; 2]>,
    trials: Option<usize>,
    delta: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    qs: Option<Vec<u32>>,
    qpus: Option<Vec<usize>>,
    positions: Option<Vec<u64>>,
    full_ula: Option<bool>,
    search: Option<SearchConfig>,
    format: Option<Format>,
    output: Option<PathBuf>,
    input: Option<PathBuf>,
}

fn parse_decomposition(s: &str) -> std::result::Result<Decomposition, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("expected dense or lanczos, got '{s}'"))
}

fn parse_synthesis(s: &str) -> std::result::Result<SynthesisMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("expected auto, direct or fft, got '{s}'"))
}

fn parse_window_base(s: &str) -> std::result::Result<WindowBase, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("expected running_best or initial, got '{s}'"))
}

fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn merge_search(file: Option<SearchConfig>, flags: &SearchArgs) -> Result<SearchConfig> {
    let mut cfg = file.unwrap_or_default();
    if let Some(w) = flags.window {
        cfg.window = w;
    }
    if flags.grid.is_some() {
        cfg.grid_size = flags.grid;
    }
    if let Some(d) = flags.decomposition {
        cfg.decomposition = d;
    }
    if let Some(s) = flags.synthesis {
        cfg.synthesis = s;
    }
    if let Some(b) = flags.window_base {
        cfg.window_base = b;
    }
    cfg.renormalize |= flags.renormalize;
    if flags.no_refine {
        cfg.refine = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Setup {
    array: ArrayConfig,
    schedule: Schedule,
    preset: Option<PresetName>,
}

/// Resolves depths and shots: explicit depths, then a preset, then nested levels.
fn resolve_array(flags: &ArrayArgs, file: &FileConfig) -> Result<Setup> {
    let preset = flags.preset.or(file.preset);
    let depths = flags.depths.clone().or_else(|| file.depths.clone());
    let q = flags.q.or(file.q);
    let levels = flags.levels.clone().or_else(|| file.levels.clone());
    let k = flags.k.or(file.k);
    let ula_limit = flags.ula_limit.or(file.ula_limit);
    let (mut array, schedule) = if let Some(depths) = depths {
        let q = q.ok_or_else(|| Error::Config("--depths needs --q".into()))?;
        (
            ArrayConfig::explicit(&depths, q)?,
            shot_schedule(&depths, k.unwrap_or(4.0))?,
        )
    } else if let Some(name) = preset {
        let p = name.load();
        let mut array = p.array()?;
        if let Some(q) = q {
            array.q = q;
        }
        let schedule = match k {
            Some(k) => shot_schedule(&p.depths, k)?,
            None => p.schedule()?,
        };
        (array, schedule)
    } else if let Some(q) = q {
        let levels = levels.unwrap_or_else(|| vec![2; 2 * q as usize]);
        let array = ArrayConfig::nested(q, &levels)?;
        let schedule = shot_schedule(array.physical.positions(), k.unwrap_or(4.0))?;
        (array, schedule)
    } else {
        return Err(Error::Config(
            "give --preset, --q [--levels] or --depths with --q".into(),
        ));
    };
    if let Some(lim) = ula_limit {
        if lim < 3 {
            return Err(Error::Config("--ula-limit must be >= 3".into()));
        }
        array.ula_limit = Some(lim);
    }
    Ok(Setup {
        array,
        schedule,
        preset,
    })
}

fn amplitude_spec(fixed: Option<f64>, range: Option<[f64; 2]>) -> AmplitudeSpec {
    match (fixed, range) {
        (Some(a), _) => AmplitudeSpec::Fixed(a),
        (None, Some([low, high])) => AmplitudeSpec::Uniform { low, high },
        (None, None) => AmplitudeSpec::Uniform {
            low: 0.1,
            high: 0.9,
        },
    }
}

fn range_flag(v: &Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.as_ref().map(|r| [r[0], r[1]])
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn run_estimate(args: &EstimateArgs, file: &FileConfig) -> Result<String> {
    let setup = resolve_array(&args.array, file)?;
    let search = merge_search(file.search, &args.search)?;
    let state = match (args.theta.or(file.theta), args.amplitude.or(file.amplitude)) {
        (Some(t), None) => TrueState::new(t)?,
        (None, Some(a)) => TrueState::from_amplitude(a)?,
        (Some(_), Some(_)) => return Err(Error::Config("give either theta or amplitude".into())),
        (None, None) => return Err(Error::Config("--theta or --amplitude is required".into())),
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let estimator = Estimator::new(&setup.array, search)?;
    let measurements = sample_set(state.theta(), &setup.schedule, seed)?;
    let result = estimator.estimate(&measurements)?;
    let error = (result.a_hat - state.amplitude()).abs();

    #[derive(Serialize)]
    struct Report<'a> {
        preset: Option<PresetName>,
        seed: u64,
        theta: f64,
        amplitude: f64,
        error: f64,
        #[serde(flatten)]
        result: &'a csae::estimator::EstimateResult,
    }
    let report = Report {
        preset: setup.preset,
        seed,
        theta: state.theta(),
        amplitude: state.amplitude(),
        error,
        result: &result,
    };
    let json = to_json(&report);
    if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
        write_text(path, &json)?;
    }
    Ok(match args.format.or(file.format).unwrap_or(Format::Text) {
        Format::Json => json,
        Format::Text => format!(
            "a_hat={:.8} error={:.3e} total_queries={} max_depth={}\n",
            result.a_hat, error, result.total_queries, result.max_depth
        ),
    })
}

fn run_benchmark(args: &BenchmarkArgs, file: &FileConfig) -> Result<String> {
    let setup = resolve_array(&args.array, file)?;
    let search = merge_search(file.search, &args.search)?;
    let delta = args.delta.or(file.delta).unwrap_or(0.95);
    let cfg = MonteCarloConfig {
        amplitude: amplitude_spec(
            args.amplitude.or(file.amplitude),
            range_flag(&args.amplitude_range).or(file.amplitude_range),
        ),
        trials: args.trials.or(file.trials).unwrap_or(100),
        array: setup.array,
        schedule: setup.schedule.clone(),
        search,
        base_seed: args.seed.or(file.seed).unwrap_or(0),
        jobs: args.jobs.or(file.jobs),
    };
    let trials = monte_carlo(&cfg)?;
    let eps = percentile_error(&trials, delta)?;
    if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
        write_trials_csv(path, &trials)?;
    }
    let queries = total_queries(&setup.schedule);
    Ok(match args.format.or(file.format).unwrap_or(Format::Text) {
        Format::Json => to_json(&serde_json::json!({
            "trials": trials.len(),
            "delta": delta,
            "epsilon": eps,
            "total_queries": queries,
            "max_depth": setup.schedule.n_max(),
            "seed": cfg.base_seed,
        })),
        Format::Text => format!(
            "trials={} delta={delta} epsilon={eps:.3e} total_queries={queries} max_depth={}\n",
            trials.len(),
            setup.schedule.n_max()
        ),
    })
}

fn run_fit(args: &FitArgs, file: &FileConfig) -> Result<String> {
    let input = args.input.as_ref().or(file.input.as_ref());
    let points: Vec<(f64, f64)> = if let Some(path) = input {
        read_points_csv(path)?
    } else {
        let cfg = SweepConfig {
            qs: args
                .qs
                .clone()
                .or_else(|| file.qs.clone())
                .unwrap_or_else(|| vec![3, 4, 5, 6]),
            k: args.k.or(file.k).unwrap_or(4.0),
            delta: args.delta.or(file.delta).unwrap_or(0.95),
            trials: args.trials.or(file.trials).unwrap_or(200),
            amplitude: amplitude_spec(
                args.amplitude.or(file.amplitude),
                range_flag(&args.amplitude_range).or(file.amplitude_range),
            ),
            search: merge_search(file.search, &args.search)?,
            base_seed: args.seed.or(file.seed).unwrap_or(0),
            jobs: args.jobs.or(file.jobs),
            theorem_ula: !(args.full_ula || file.full_ula.unwrap_or(false)),
        };
        let sweep = scaling_sweep(&cfg)?;
        let pts: Vec<_> = sweep
            .iter()
            .map(|p| (p.epsilon, p.queries as f64))
            .collect();
        if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
            write_points_csv(path, &pts)?;
        }
        pts
    };
    let fit = wls_fit(&points)?;
    Ok(match args.format.or(file.format).unwrap_or(Format::Text) {
        Format::Json => to_json(&serde_json::json!({ "fit": fit, "points": points })),
        Format::Text => format!(
            "C={:.4} (±{:.4}) b={:.2} (±{:.2}) points={}\n",
            fit.c, fit.c_stderr, fit.b, fit.b_stderr, fit.points
        ),
    })
}

fn run_arrays(args: &ArraysArgs, file: &FileConfig) -> Result<String> {
    let q = args
        .q
        .or(file.q)
        .ok_or_else(|| Error::Config("--q is required".into()))?;
    let positions = args.positions.clone().or_else(|| file.positions.clone());
    let levels = args.levels.clone().or_else(|| file.levels.clone());
    let physical = match positions {
        Some(p) => PhysicalArray::from_positions(&p, q)?,
        None => {
            let levels = levels.unwrap_or_else(|| vec![2; 2 * q as usize]);
            csae::arrays::nested_positions(q, &levels)?
        }
    };
    let virtual_array = coarray(&physical, q)?;
    let report = serde_json::json!({
        "q": q,
        "levels": physical.levels(),
        "positions": physical.positions(),
        "coarray": virtual_array.positions(),
        "ula_length": virtual_array.ula_length(),
        "ula_size": virtual_array.symmetric_ula_size(),
        "theorem_ula_size": physical.levels().map(nested_ula_bound),
    });
    let json = to_json(&report);
    if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
        write_text(path, &json)?;
    }
    Ok(json)
}

fn run_schedule(args: &ScheduleArgs, file: &FileConfig) -> Result<String> {
    let setup = resolve_array(&args.array, file)?;
    let s = &setup.schedule;
    let json = to_json(&serde_json::json!({
        "preset": setup.preset,
        "k": s.k(),
        "depths": s.depths(),
        "shots": s.shots(),
        "total_queries": total_queries(s),
        "max_depth": s.n_max(),
        "total_shots": s.total_shots(),
        "u_applications": s.u_applications(),
    }));
    if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
        write_text(path, &json)?;
    }
    Ok(json)
}

fn run_speedup(args: &SpeedupArgs, file: &FileConfig) -> Result<String> {
    let setup = resolve_array(&args.array, file)?;
    let qpus = args
        .qpus
        .clone()
        .or_else(|| file.qpus.clone())
        .unwrap_or_else(|| (1..=64).collect());
    let curve = speedup_curve(&setup.schedule, &qpus)?;
    if let Some(path) = args.output.as_ref().or(file.output.as_ref()) {
        write_speedup_csv(path, &curve)?;
    }
    let mut out = String::from("n_qpus,parallel_depth\n");
    for (m, d) in &curve {
        writeln!(out, "{m},{d}").expect("string write");
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<String> {
    let file = load_file(cli.config.as_deref())?;
    match &cli.command {
        Command::Estimate(a) => run_estimate(a, &file),
        Command::Benchmark(a) => run_benchmark(a, &file),
        Command::Fit(a) => run_fit(a, &file),
        Command::Arrays(a) => run_arrays(a, &file),
        Command::Schedule(a) => run_schedule(a, &file),
        Command::Speedup(a) => run_speedup(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("csae: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::Io(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
