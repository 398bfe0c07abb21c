use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpqca::dkca::dk_density_trace;
use dpqca::experiment::{self, fit_delta, point_metadata, summarize, FitMethod, SweepConfig};
use dpqca::linalg::{max_abs_diff, CMat, ONE, ZERO};
use dpqca::model::{dp_bond_rule, dp_site_rule, quantum_rates, steady_state_3cell, DkcaRule, NeighborhoodLabel, RatePreset};
use dpqca::mps::{evolve, CheckpointHeader, EvolveOptions, FiniteMPS, InfiniteMPS, RoundEvolution, RoundPropagator, TruncationConfig};
use dpqca::observables::{occupation_density, reduce_density, Sites, TrajectorySeries};
use dpqca::oracle::{assemble_chain_liouvillian, integrate, Boundary, DenseState, TrotterChain};
use dpqca::superop::{build_round_gates, ScheduleMode};

#[derive(Parser)]
#[command(name = "dpqca", version, about = "Directed percolation in dissipative quantum cellular automata")]
struct Cli {
    /// TOML sweep configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; ensemble members use consecutive seeds from here.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rates and conditional steady states for (p, omega).
    Rates {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        #[arg(long, value_enum, default_value_t = PresetArg::Table)]
        preset: PresetArg,
    },
    /// Classical Domany-Kinzel ensemble from the fully occupied lattice.
    Dkca {
        #[arg(long, value_enum, default_value_t = RuleArg::Site)]
        rule: RuleArg,
        /// Site probability `p` or bond probability `q`.
        #[arg(long, short = 'p', alias = "q")]
        p: Option<f64>,
        /// `x,y,z` for `--rule raw`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        xyz: Option<Vec<f64>>,
        #[arg(long, default_value_t = 4096)]
        length: usize,
        #[arg(long, default_value_t = 4000)]
        rounds: usize,
        /// Number of seeds.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// Also fit the decay exponent over this tail fraction.
        #[arg(long)]
        fit_tail: Option<f64>,
    },
    /// One iTEBD trajectory.
    Evolve {
        #[arg(long)]
        p: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
        /// Write a checkpoint every this many rounds.
        #[arg(long, requires = "checkpoint")]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// iTEBD over a grid of p, locating p_c and fitting delta.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        tail_fraction: Option<f64>,
    },
    /// Dense reference evolution of a short open chain next to finite TEBD.
    Oracle {
        #[arg(long)]
        p: f64,
        /// Qubits in the chain (even, at most 6).
        #[arg(long, default_value_t = 6)]
        qubits: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit n(t) from a CSV with columns `t` (or `round`) and `n` (or `mean_density`).
    Fit {
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tail_fraction: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::PowerLaw)]
        method: MethodArg,
        #[arg(long)]
        time_column: Option<String>,
        #[arg(long)]
        value_column: Option<String>,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Round duration in discrete mode.
    #[arg(long)]
    tau: Option<f64>,
    /// Trotter constant C of continuous mode.
    #[arg(long)]
    trotter_constant: Option<f64>,
    #[arg(long)]
    max_bond: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Site,
    Bond,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Table,
    Unit,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    PowerLaw,
    Exponential,
}

impl From<PresetArg> for RatePreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Table => RatePreset::SiteDpTable,
            PresetArg::Unit => RatePreset::UnitDecay,
        }
    }
}

impl RunArgs {
    fn apply(&self, config: &mut SweepConfig) {
        if let Some(v) = self.omega {
            config.omega = v;
        }
        if let Some(m) = self.mode {
            config.mode = match m {
                ModeArg::Continuous => ScheduleMode::Continuous,
                ModeArg::Discrete => ScheduleMode::Discrete,
            };
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.trotter_constant {
            config.trotter_constant = v;
        }
        if let Some(v) = self.max_bond {
            config.max_bond = v;
        }
        if let Some(v) = self.tolerance {
            config.truncation_tolerance = v;
        }
        if let Some(v) = self.rounds {
            config.rounds = v;
        }
        if let Some(v) = self.stride {
            config.stride = v;
        }
        if let Some(v) = self.preset {
            config.preset = v.into();
        }
    }
}

fn base_config(cli: &Cli) -> Result<SweepConfig> {
    let mut config = match &cli.config {
        Some(path) => SweepConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => SweepConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &SweepConfig) -> Result<PathBuf> {
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn full_state() -> CMat {
    faer::Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO })
}

fn rates(p: f64, omega: f64, preset: PresetArg) -> Result<()> {
    let params = quantum_rates(&dp_site_rule(p)?, omega, preset.into())?;
    print!("{}", params.to_config().to_toml()?);
    println!();
    println!("label  active       coherence");
    for label in NeighborhoodLabel::ALL {
        let s = steady_state_3cell(params.get(label))?;
        println!("{label}     {:.10}  {:+.10}{:+.10}i", s.active, s.coherence.re, s.coherence.im);
    }
    Ok(())
}

fn dkca_rule(rule: RuleArg, p: Option<f64>, xyz: Option<Vec<f64>>) -> Result<DkcaRule> {
    Ok(match rule {
        RuleArg::Site => dp_site_rule(p.context("--p is required")?)?,
        RuleArg::Bond => dp_bond_rule(p.context("--q is required")?)?,
        RuleArg::Raw => {
            let v = xyz.context("--xyz x,y,z is required for raw rules")?;
            DkcaRule::new(v[0], v[1], v[2])?
        }
    })
}

fn fit_method(m: MethodArg) -> FitMethod {
    match m {
        MethodArg::PowerLaw => FitMethod::PowerLaw,
        MethodArg::Exponential => FitMethod::Exponential,
    }
}

#[allow(clippy::too_many_arguments)]
fn dkca(cli: &Cli, rule: RuleArg, p: Option<f64>, xyz: Option<Vec<f64>>, length: usize, rounds: usize, seeds: u64, fit_tail: Option<f64>) -> Result<()> {
    let rule = dkca_rule(rule, p, xyz)?;
    let seeds: Vec<u64> = (cli.seed..cli.seed + seeds).collect();
    let trace = dk_density_trace(&rule, length, rounds, &seeds)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("dkca_x{}_y{}_z{}.csv", rule.x, rule.y, rule.z));
            trace.save_csv(&path)?;
            eprintln!("wrote {}", path.display());
        }
        None => trace.write_csv(std::io::stdout().lock())?,
    }
    if let Some(frac) = fit_tail {
        let (t, n) = trace.series();
        let fit = fit_delta(&t, &n, frac, FitMethod::PowerLaw)?;
        eprintln!("{}", serde_json::to_string_pretty(&fit)?);
    }
    Ok(())
}

fn evolve_one(cli: &Cli, p: Option<f64>, run: &RunArgs, every: Option<usize>, checkpoint: Option<PathBuf>, resume: Option<PathBuf>) -> Result<()> {
    let mut config = base_config(cli)?;
    run.apply(&mut config);
    let p = match p {
        Some(p) => p,
        None if config.p_grid.len() == 1 => config.p_grid[0],
        None => bail!("--p is required unless the config grid holds a single point"),
    };
    let params = quantum_rates(&dp_site_rule(p)?, config.omega, config.preset)?;
    let schedule = config.schedule(p)?;
    let (v, w) = build_round_gates(&params, &schedule)?;
    let truncation = TruncationConfig { max_bond: config.max_bond, tolerance: config.truncation_tolerance };
    truncation.validate()?;
    let dir = out_dir(&config)?;
    let output = |ext: &str| dir.join(format!("trajectory_p{p:.4}.{ext}"));

    let (mut state, first_round, mut previous) = match &resume {
        Some(path) => {
            let (state, header) = InfiniteMPS::load_checkpoint(path)?;
            if header.params_hash != params.hash64() {
                bail!("checkpoint {} was written for different rates", path.display());
            }
            if header.schedule != schedule {
                bail!("checkpoint {} was written with a different schedule", path.display());
            }
            let previous = TrajectorySeries::load_json(output("json")).ok();
            (state, header.round, previous)
        }
        None => (InfiniteMPS::init_product_state(&full_state(), truncation)?, 0, None),
    };
    state.truncation = truncation;
    let prop = RoundPropagator::new(&v, &w, &state.active)?;
    let metadata = point_metadata(&config, p, &schedule, &prop);
    let remaining = config.rounds.saturating_sub(first_round);
    if remaining == 0 {
        bail!("checkpoint is already at round {first_round} of {}", config.rounds);
    }
    let opts = EvolveOptions { rounds: remaining, stride: config.stride, first_round };
    let started = Instant::now();
    let series = evolve(&mut state, &prop, &opts, metadata, |round, s| {
        if let (Some(k), Some(path)) = (every, &checkpoint) {
            if round % k == 0 || round == config.rounds {
                s.save_checkpoint(path, &CheckpointHeader { round, params_hash: prop.params_hash, schedule })?;
            }
        }
        Ok(())
    })?;
    let series = match previous.take() {
        Some(mut old) => {
            old.records.retain(|r| r.round <= first_round);
            old.records.extend(series.records);
            old.metadata = series.metadata;
            old
        }
        None => series,
    };
    series.save_csv(output("csv"))?;
    series.save_json(output("json"))?;
    if let Some(last) = series.last() {
        eprintln!(
            "p = {p}: round {} n = {:.6} S = {:.4} C1 = {:.3e} bond {} ({:.1}s) -> {}",
            last.round,
            last.observables.n,
            last.observables.entropy,
            last.observables.c1,
            last.truncation.max_bond,
            started.elapsed().as_secs_f64(),
            output("csv").display()
        );
    }
    Ok(())
}

fn sweep(cli: &Cli, p_grid: Option<Vec<f64>>, run: &RunArgs, tail_fraction: Option<f64>) -> Result<()> {
    let mut config = base_config(cli)?;
    run.apply(&mut config);
    if let Some(grid) = p_grid {
        config.p_grid = grid;
    }
    if let Some(f) = tail_fraction {
        config.tail_fraction = f;
    }
    config.validate()?;
    let dir = out_dir(&config)?;
    let started = Instant::now();
    let points = experiment::sweep(&config)?;
    let summary = summarize(&points, config.tail_fraction, started.elapsed().as_secs_f64());
    experiment::write_outputs(&dir, &points, &summary)?;
    std::fs::write(dir.join("config.toml"), toml::to_string(&config)?)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn oracle(cli: &Cli, p: f64, qubits: usize, run: &RunArgs) -> Result<()> {
    if qubits < 4 || qubits > 6 || qubits % 2 != 0 {
        bail!("--qubits must be 4 or 6");
    }
    let mut config = base_config(cli)?;
    config.rounds = 10;
    run.apply(&mut config);
    let params = quantum_rates(&dp_site_rule(p)?, config.omega, config.preset)?;
    let schedule = config.schedule(p)?;
    let (v, w) = build_round_gates(&params, &schedule)?;
    let mut mps = FiniteMPS::product(qubits / 2, &full_state(), TruncationConfig::exact())?;
    let prop = RoundPropagator::new(&v, &w, &mps.active)?;
    let chain = TrotterChain::new(&params, qubits, &schedule)?;
    let generator = assemble_chain_liouvillian(&params, qubits, Boundary::Open)?;
    let start = DenseState::product(qubits, &full_state())?;
    let mut dense = start.clone();

    let mut sink: Box<dyn Write> = match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(std::fs::File::create(dir.join(format!("oracle_p{p:.4}.csv")))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "round,t,n_layered,n_generator,n_tebd,max_reduced_deviation")?;
    for round in 1..=config.rounds {
        mps.advance(&prop)?;
        dense = chain.round(&dense);
        let t = round as f64 * schedule.tau;
        let flow = integrate(&start, &generator, t)?;
        let mean = |s: &DenseState| s.occupations().iter().sum::<f64>() / qubits as f64;
        let mut dev: f64 = 0.0;
        for q in 0..qubits {
            dev = dev.max(max_abs_diff(reduce_density(&mps, Sites::One(q))?.as_ref(), dense.reduce(&[q]).as_ref()));
            if q + 1 < qubits {
                dev = dev.max(max_abs_diff(reduce_density(&mps, Sites::Pair(q))?.as_ref(), dense.reduce(&[q, q + 1]).as_ref()));
            }
        }
        writeln!(sink, "{round},{t},{},{},{},{dev:e}", mean(&dense), mean(&flow), occupation_density(&mps)?)?;
    }
    Ok(())
}

fn read_columns(path: &Path, time: Option<&str>, value: Option<&str>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let find = |wanted: Option<&str>, defaults: &[&str]| -> Result<usize> {
        let names: Vec<&str> = wanted.map(|w| vec![w]).unwrap_or_else(|| defaults.to_vec());
        names
            .iter()
            .find_map(|n| headers.iter().position(|h| h == *n))
            .with_context(|| format!("none of the columns {names:?} in {}", path.display()))
    };
    let ti = find(time, &["t", "round"])?;
    let vi = find(value, &["n", "mean_density"])?;
    let (mut t, mut n) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row?;
        t.push(row[ti].parse::<f64>()?);
        n.push(row[vi].parse::<f64>()?);
    }
    Ok((t, n))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Rates { p, omega, preset } => rates(*p, *omega, *preset),
        Command::Dkca { rule, p, xyz, length, rounds, seeds, fit_tail } => {
            dkca(&cli, *rule, *p, xyz.clone(), *length, *rounds, *seeds, *fit_tail)
        }
        Command::Evolve { p, run, checkpoint_every, checkpoint, resume } => {
            evolve_one(&cli, *p, run, *checkpoint_every, checkpoint.clone(), resume.clone())
        }
        Command::Sweep { p_grid, run, tail_fraction } => sweep(&cli, p_grid.clone(), run, *tail_fraction),
        Command::Oracle { p, qubits, run } => oracle(&cli, *p, *qubits, run),
        Command::Fit { input, tail_fraction, method, time_column, value_column } => {
            let (t, n) = read_columns(input, time_column.as_deref(), value_column.as_deref())?;
            let fit = fit_delta(&t, &n, *tail_fraction, fit_method(*method))?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(())
        }
    }
}
