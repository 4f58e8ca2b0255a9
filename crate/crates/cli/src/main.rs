use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use heislat::experiment::{count_row, fit_rows, read_csv, run_sweep, write_csv, DeltaRule, ResultRow, SweepConfig};
use heislat::measure::{energy_all_pairs, energy_integral_mc, SmoothedMeasure, ThickLattice, ALL_PAIRS_GUARD};
use heislat::monge_ampere::verify_rank_proposition;
use heislat::scalar::{int, parse_rational};
use heislat::shell::{
    fixed_center_error_term, naive_shell_count, theorem_bound, LatticeSpec, Sampling, ShellCounter, ShellQuery,
};
use heislat::{Error, GaugeParams, HPoint, Rational};

#[derive(Parser)]
#[command(name = "heislat", version, about = "Lattice points near Heisenberg gauge spheres")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HEISLAT_THREADS")]
    threads: Option<usize>,

    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count lattice points in one shell around a fixed center.
    Count(CountArgs),
    /// Shell count averaged over the centers of the lattice.
    AvgCount(AvgCountArgs),
    /// Right-hand side of the averaged bound.
    Bound(BoundArgs),
    /// Exact rank check of the Monge-Ampere matrix on a level set.
    RankCheck(RankArgs),
    /// Riesz energy of the smoothed lattice measure.
    Energy(EnergyArgs),
    /// Ball volume minus the number of lattice points in the ball.
    ErrorTerm(ErrorTermArgs),
    /// Averaged counts over a list of radii, written as CSV.
    Sweep(SweepArgs),
    /// Log-log slope of a sweep CSV.
    Fit(FitArgs),
}

#[derive(Args)]
struct GaugeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: u32,
    #[arg(long = "C-alpha", value_parser = rational, default_value = "16")]
    c_alpha: Rational,
}

impl GaugeArgs {
    fn gauge(&self) -> heislat::Result<GaugeParams> {
        GaugeParams::new(self.n, self.alpha, self.c_alpha.clone())
    }
}

#[derive(Args)]
struct LatticeArgs {
    /// Vertical extent factor of the lattice.
    #[arg(long, value_parser = rational, default_value = "1")]
    c: Rational,
    /// Use the nonnegative lattice `[0, Q] x [0, cQ^2]`.
    #[arg(long)]
    unsigned: bool,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[arg(long = "Q", value_parser = rational)]
    q: Rational,
    #[arg(long, value_parser = rational)]
    delta: Rational,
    /// Comma-separated integer coordinates, horizontal first.
    #[arg(long, allow_hyphen_values = true)]
    center: Option<String>,
    /// Brute-force enumeration instead of the slice counter.
    #[arg(long)]
    naive: bool,
}

#[derive(Args)]
struct AvgCountArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[arg(long = "Q", value_parser = rational, required_unless_present = "q")]
    big_q: Option<Rational>,
    #[arg(long, value_parser = rational, conflicts_with = "q")]
    delta: Option<Rational>,
    /// Counting-lemma base: `Q = q^a`, `delta = q^(a - tau)`.
    #[arg(long, value_parser = rational, requires = "tau", conflicts_with = "big_q")]
    q: Option<Rational>,
    #[arg(long, value_parser = rational)]
    tau: Option<Rational>,
    /// Number of sampled centers (all centers when omitted).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "avg-count")]
    experiment_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    #[arg(long = "Q", value_parser = rational)]
    q: Rational,
    #[arg(long, value_parser = rational)]
    delta: Rational,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    /// Level of the set `phi_alpha(x, y) = t`.
    #[arg(long, value_parser = rational, default_value = "1")]
    t: Rational,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also evaluate the deterministic all-pairs sum.
    #[arg(long)]
    all_pairs: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ErrorTermArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    #[arg(long = "Q", value_parser = rational)]
    q: Rational,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    gauge: GaugeArgs,
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Comma-separated radii.
    #[arg(long = "Q", value_parser = rational, value_delimiter = ',', required = true)]
    q: Vec<Rational>,
    /// `1/Q` or a fixed thickness.
    #[arg(long, default_value = "1/Q")]
    delta_rule: DeltaRule,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sweep")]
    experiment_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep CSV files.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).ok_or_else(|| format!("not a number: {s:?}"))
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Quadrature(_) | Error::SamplingFailed(_) => Failure::Internal(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let argv = match with_config(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Appends `--key value` for every config entry whose flag is not already
/// on the command line.
fn with_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().ok_or("--config needs a file")?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let given: Vec<String> =
        argv.iter().filter_map(|a| a.strip_prefix("--")).map(|a| a.split('=').next().unwrap().to_string()).collect();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| format!("{path}:{}: expected key = value", lineno + 1))?;
        let flag = key.trim().replace('_', "-");
        if flag == "config" || given.contains(&flag) {
            continue;
        }
        match value.trim() {
            "true" => argv.push(format!("--{flag}")),
            "false" => {}
            v => {
                argv.push(format!("--{flag}"));
                argv.push(v.to_string());
            }
        }
    }
    Ok(argv)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Count(a) => count(a),
        Command::AvgCount(a) => avg_count(a),
        Command::Bound(a) => bound(a),
        Command::RankCheck(a) => rank_check(a),
        Command::Energy(a) => energy(a),
        Command::ErrorTerm(a) => error_term(a),
        Command::Sweep(a) => sweep(a),
        Command::Fit(a) => fit(a),
    }
}

fn query(gauge: &GaugeArgs, lattice: &LatticeArgs, q: &Rational, delta: &Rational) -> heislat::Result<ShellQuery> {
    let g = gauge.gauge()?;
    let spec = LatticeSpec::new(g.n(), lattice.c.clone(), q.clone(), !lattice.unsigned)?;
    ShellQuery::with_lattice(g, spec, q.clone(), delta.clone())
}

fn count(a: CountArgs) -> CliResult {
    let query = query(&a.gauge, &a.lattice, &a.q, &a.delta)?;
    let n = a.gauge.n;
    let center = match &a.center {
        Some(s) => {
            let coords = s
                .split(',')
                .map(|c| c.trim().parse::<i64>().map_err(|_| Failure::Usage(format!("bad center coordinate {c:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if coords.len() != 2 * n + 1 {
                return Err(Failure::Usage(format!("center needs {} coordinates, got {}", 2 * n + 1, coords.len())));
            }
            HPoint::new(coords[..2 * n].to_vec(), coords[2 * n])?
        }
        None => HPoint::new(vec![0; 2 * n], 0)?,
    };
    let k = if a.naive { naive_shell_count(&center, &query)? } else { ShellCounter::new(&query)?.fast(&center)? };
    println!("{k}");
    Ok(())
}

fn avg_count(a: AvgCountArgs) -> CliResult {
    let g = a.gauge.gauge()?;
    let query = match (&a.q, &a.big_q) {
        (Some(q), _) => {
            let tau = a.tau.clone().expect("clap enforces --tau");
            ShellQuery::counting_lemma(g, q.clone(), tau, a.lattice.c.clone(), !a.lattice.unsigned)?
        }
        (None, Some(big_q)) => {
            let delta = a.delta.clone().ok_or_else(|| Failure::Usage("--delta is required with --Q".into()))?;
            query(&a.gauge, &a.lattice, big_q, &delta)?
        }
        (None, None) => unreachable!("clap enforces --Q or --q"),
    };
    if let Some(l) = &query.lemma {
        if !l.exact {
            eprintln!("note: q^a is irrational; using a dyadic approximation of Q and delta");
        }
    }
    let sampling = match a.samples {
        Some(samples) => Sampling::Random { samples, seed: a.seed },
        None => Sampling::Exhaustive,
    };
    let row = count_row(&a.experiment_id, &query, sampling, a.seed)?;
    if a.samples.is_some() {
        eprintln!("seed: {}", a.seed);
    }
    emit_rows(&[row], a.out.as_deref())
}

fn emit_rows(rows: &[ResultRow], out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => write_csv(BufWriter::new(File::create(path)?), rows)?,
        None => write_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn bound(a: BoundArgs) -> CliResult {
    let g = a.gauge.gauge()?;
    let query = ShellQuery::new(g, a.q, a.delta)?;
    println!("{}", theorem_bound(&query)?);
    Ok(())
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
        None => {
            let mut w = io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn rank_check(a: RankArgs) -> CliResult {
    let g = a.gauge.gauge()?;
    eprintln!("seed: {}", a.seed);
    let report = verify_rank_proposition(&g, &a.t, a.samples, a.seed)?;
    write_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct EnergyReport {
    n: usize,
    q: f64,
    tau: f64,
    t: f64,
    cells: usize,
    value: f64,
    stderr: f64,
    samples: usize,
    seed: u64,
    all_pairs: Option<f64>,
}

fn energy(a: EnergyArgs) -> CliResult {
    let m = SmoothedMeasure::new(ThickLattice::new(a.q, a.tau, a.n)?);
    eprintln!("seed: {}", a.seed);
    let est = energy_integral_mc(&m, a.t, a.samples, a.seed)?;
    let all_pairs = if a.all_pairs {
        if m.support_cells() > ALL_PAIRS_GUARD {
            return Err(Failure::Usage(format!(
                "all-pairs check needs at most {ALL_PAIRS_GUARD} cells, measure has {}",
                m.support_cells()
            )));
        }
        Some(energy_all_pairs(&m, a.t)?)
    } else {
        None
    };
    let report = EnergyReport {
        n: a.n,
        q: a.q,
        tau: a.tau,
        t: a.t,
        cells: m.support_cells(),
        value: est.value,
        stderr: est.stderr,
        samples: est.samples,
        seed: est.seed,
        all_pairs,
    };
    write_json(&report, a.out.as_deref())
}

fn error_term(a: ErrorTermArgs) -> CliResult {
    let g = a.gauge.gauge()?;
    let e = fixed_center_error_term(&g, &a.q)?;
    write_json(&e, None)
}

fn sweep(a: SweepArgs) -> CliResult {
    let cfg = SweepConfig {
        experiment_id: a.experiment_id,
        gauge: a.gauge.gauge()?,
        radii: a.q,
        delta_rule: a.delta_rule,
        c: a.lattice.c,
        signed: !a.lattice.unsigned,
        samples: a.samples,
        seed: a.seed,
    };
    if a.samples.is_some() {
        eprintln!("seed: {}", a.seed);
    }
    if cfg.c < int(0) {
        return Err(Failure::Usage("c must be nonnegative".into()));
    }
    let rows = run_sweep(&cfg)?;
    emit_rows(&rows, a.out.as_deref())
}

fn fit(a: FitArgs) -> CliResult {
    let mut rows = Vec::new();
    for path in &a.csv {
        let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        rows.extend(read_csv(file)?);
    }
    let f = fit_rows(&rows)?;
    println!("slope {}", f.slope);
    println!("intercept {}", f.intercept);
    println!("residual {}", f.residual);
    Ok(())
}
