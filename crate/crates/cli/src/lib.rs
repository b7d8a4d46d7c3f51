//! Command-line front end. Data goes to stdout or the `--out` file;
//! summaries and diagnostics go to stderr.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use onesided::belief::{simplex_grid, Belief};
use onesided::dual::{recover_value, DualSearchConfig, DualValueOracle, P2Engine, P2Policy, RecoverConfig};
use onesided::io::{load_spec, values_csv, SolutionFile};
use onesided::oracle::{best_response_p1, best_response_p2, brute_value, DEFAULT_BR_BUDGET, DEFAULT_ENUMERATION_LIMIT};
use onesided::player1::{P1Engine, P1Policy};
use onesided::sim::{simulate_many, summarize, Truncation};
use onesided::{
    certify_assumption1, default_delta_candidates, discounted_aggregates, validate_spec, value_iterate,
    Assumption1Certificate, ConcaveEnvelope, DiscountedAggregates, Error, GameSpec, SolveOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Guaranteed values are compared against the solved value with this much
/// slack on top of the truncation and solver tolerances.
const GUARANTEE_SLACK: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "onesided", version, about = "Zero-sum semi-Markov games with one-sided information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a game document and certify the sojourn-time condition.
    Validate {
        #[command(flatten)]
        io: SpecIo,
    },
    /// Run value iteration; write the solution file and the grid values.
    Solve {
        #[command(flatten)]
        io: SpecIo,
        /// Where to write the solution file.
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        mesh: u64,
        /// Stopping tolerance on the value.
        #[arg(long, default_value_t = 1e-4, value_parser = positive)]
        tol: f64,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        max_iterations: u64,
    },
    /// Brute-force finite-horizon value by policy enumeration.
    Oracle {
        #[command(flatten)]
        io: SpecIo,
        #[command(flatten)]
        at: StartPoint,
        /// Horizon (number of transitions after the first stage).
        #[arg(long, short = 'n', default_value_t = 0)]
        n: usize,
        /// Largest admissible payoff matrix, in entries.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT, value_parser = positive)]
        budget: f64,
    },
    /// Tabulate the dual value over a grid of dual vectors.
    Conjugate {
        #[command(flatten)]
        io: SpecIo,
        #[arg(long)]
        solution: PathBuf,
        /// Points per coordinate of the dual box.
        #[arg(long, default_value_t = 11, value_parser = clap::value_parser!(u64).range(2..))]
        points: u64,
        /// Mesh of the belief grid used for the round-trip check.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        mesh: u64,
    },
    /// Best-response brackets against one of the optimal engines.
    Exploit {
        #[command(flatten)]
        io: SpecIo,
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        at: StartPoint,
        /// Player whose engine is exploited.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        player: u8,
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        /// Largest admissible best-response tree, in leaves.
        #[arg(long, default_value_t = DEFAULT_BR_BUDGET, value_parser = positive)]
        budget: f64,
    },
    /// Monte Carlo play of both optimal engines.
    Simulate {
        #[command(flatten)]
        io: SpecIo,
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        at: StartPoint,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(2..))]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Force the game type instead of drawing it from the belief.
        #[arg(long = "type")]
        kappa: Option<String>,
    },
}

#[derive(Debug, Args)]
struct SpecIo {
    /// Game document (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct StartPoint {
    /// Initial belief as comma-separated probabilities; the document's prior when absent.
    #[arg(long, value_delimiter = ',')]
    belief: Option<Vec<f64>>,
    /// Initial state, by label or index.
    #[arg(long, default_value = "0")]
    state: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive finite number, got {s}"))
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidSpec(_) | Error::Document(_) | Error::CertificationFailed | Error::Json(_) => EXIT_INVALID,
            Error::NumericalFailure(_) | Error::Protocol(_) | Error::DepthExceeded { .. } => EXIT_NUMERICAL,
            Error::IterationBudgetExceeded(_)
            | Error::SearchBudgetExceeded(_)
            | Error::EnumerationTooLarge { .. }
            | Error::BudgetExceeded { .. } => EXIT_BUDGET,
            Error::Io(_) => EXIT_USAGE,
        };
        let mut message = e.to_string();
        if let Error::InvalidSpec(violations) = &e {
            for v in violations {
                message.push_str(&format!("\n  {v}"));
            }
        }
        Failure { code, message }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn check_paths(io: &SpecIo, outputs: &[&Path]) -> Outcome<()> {
    if !io.spec.is_file() {
        return Err(Failure::usage(format!("spec file {} does not exist", io.spec.display())));
    }
    for p in io.out.iter().map(PathBuf::as_path).chain(outputs.iter().copied()) {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
        if parent.is_some_and(|d| !d.is_dir()) {
            return Err(Failure::usage(format!("output directory for {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn check_input(path: &Path) -> Outcome<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{} does not exist", path.display())))
    }
}

fn dispatch(command: Command) -> Outcome<()> {
    match command {
        Command::Validate { io } => {
            check_paths(&io, &[])?;
            validate(&io)
        }
        Command::Solve {
            io,
            solution,
            mesh,
            tol,
            max_iterations,
        } => {
            check_paths(&io, &[&solution])?;
            let opts = SolveOptions {
                mesh: mesh as usize,
                stop_tol: tol,
                max_iterations: max_iterations as usize,
                ..SolveOptions::default()
            };
            solve(&io, &solution, &opts)
        }
        Command::Oracle { io, at, n, budget } => {
            check_paths(&io, &[])?;
            oracle(&io, &at, n, budget)
        }
        Command::Conjugate {
            io,
            solution,
            points,
            mesh,
        } => {
            check_paths(&io, &[])?;
            check_input(&solution)?;
            conjugate(&io, &solution, points as usize, mesh as usize)
        }
        Command::Exploit {
            io,
            solution,
            at,
            player,
            horizon,
            budget,
        } => {
            check_paths(&io, &[])?;
            check_input(&solution)?;
            exploit(&io, &solution, &at, player, horizon, budget)
        }
        Command::Simulate {
            io,
            solution,
            at,
            episodes,
            seed,
            kappa,
        } => {
            check_paths(&io, &[])?;
            check_input(&solution)?;
            simulate(&io, &solution, &at, episodes as usize, seed, kappa.as_deref())
        }
    }
}

struct Loaded {
    spec: Arc<GameSpec>,
    agg: Arc<DiscountedAggregates>,
    cert: Assumption1Certificate,
}

fn load(path: &Path) -> Outcome<Loaded> {
    let spec = load_spec(path)?;
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations).into());
    }
    let cert = certify_assumption1(&spec, &default_delta_candidates(&spec))?;
    let agg = discounted_aggregates(&spec);
    Ok(Loaded {
        spec: Arc::new(spec),
        agg: Arc::new(agg),
        cert,
    })
}

fn load_solution(path: &Path, spec: &GameSpec) -> Outcome<(SolutionFile, Arc<ConcaveEnvelope>)> {
    let sol = SolutionFile::load(path)?;
    sol.check_digest(spec)?;
    let env = sol.envelope(spec.dims().types)?;
    Ok((sol, Arc::new(env)))
}

fn resolve_label(what: &str, labels: &[String], given: &str) -> Outcome<usize> {
    if let Some(n) = labels.iter().position(|l| l == given) {
        return Ok(n);
    }
    match given.parse::<usize>() {
        Ok(n) if n < labels.len() => Ok(n),
        _ => Err(Failure::usage(format!("unknown {what} {given:?}; expected one of {labels:?} or an index"))),
    }
}

fn start_point(at: &StartPoint, spec: &GameSpec) -> Outcome<(Belief, usize)> {
    let types = spec.dims().types;
    let p = Belief::new(at.belief.clone().unwrap_or_else(|| spec.initial_belief.clone()));
    if p.dim() != types || !p.is_valid(1e-9) {
        return Err(Failure::usage(format!(
            "belief must be {types} nonnegative probabilities summing to one"
        )));
    }
    let i = resolve_label("state", &spec.states, &at.state)?;
    Ok((p, i))
}

fn emit(io: &SpecIo, text: &str) -> Outcome<()> {
    match &io.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(e).into()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io(e).into())
        }
    }
}

fn emit_json(io: &SpecIo, value: &Value) -> Outcome<()> {
    if io.format == Format::Csv {
        return Err(Failure::usage("this command only produces JSON"));
    }
    emit(io, &(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n"))
}

fn certificate_json(cert: &Assumption1Certificate, spec: &GameSpec) -> Value {
    let (i, a, b) = cert.worst_pair;
    json!({
        "delta": cert.delta,
        "epsilon": cert.epsilon,
        "beta": cert.beta,
        "worst_pair": {
            "state": spec.states[i],
            "action_p1": spec.actions_p1[a],
            "action_p2": spec.actions_p2[b],
        },
    })
}

fn validate(io: &SpecIo) -> Outcome<()> {
    let l = load(&io.spec)?;
    eprintln!(
        "spec is valid; certified delta {:.4}, epsilon {:.4}, beta {:.6}",
        l.cert.delta, l.cert.epsilon, l.cert.beta
    );
    emit_json(io, &json!({ "valid": true, "certificate": certificate_json(&l.cert, &l.spec) }))
}

fn solve(io: &SpecIo, solution: &Path, opts: &SolveOptions) -> Outcome<()> {
    let l = load(&io.spec)?;
    let report = value_iterate(&l.spec, &l.agg, &l.cert, opts)?;
    eprintln!(
        "{} iterations, last change {:.2e}, tail bound {:.2e}, {} cuts",
        report.iterations,
        report.last_change,
        report.tail_bound,
        report.envelopes.total_cuts()
    );
    SolutionFile::from_report(&l.spec, &report).save(solution)?;
    match io.format {
        Format::Csv => emit(io, &values_csv(&report.envelopes, &l.spec, &report.grid)),
        Format::Json => {
            let values: Vec<Value> = (0..report.envelopes.states())
                .flat_map(|i| {
                    let (report, spec) = (&report, &l.spec);
                    report.grid.iter().map(move |p| {
                        json!({ "belief": p.0, "state": spec.states[i], "value": report.value(p, i) })
                    })
                })
                .collect();
            emit_json(io, &json!({ "values": values }))
        }
    }
}

fn oracle(io: &SpecIo, at: &StartPoint, n: usize, budget: f64) -> Outcome<()> {
    let l = load(&io.spec)?;
    let (p, i) = start_point(at, &l.spec)?;
    let brute = brute_value(&p, i, n, &l.spec, &l.agg, budget)?;
    eprintln!(
        "V_{n}({:?}, {}) = {:.9} over {} x {} policies",
        p.0, l.spec.states[i], brute.value, brute.p1_policies, brute.p2_policies
    );
    emit_json(
        io,
        &json!({
            "belief": p.0,
            "state": l.spec.states[i],
            "n": n,
            "value": brute.value,
            "p1_policies": brute.p1_policies,
            "p2_policies": brute.p2_policies,
        }),
    )
}

/// Every point of the `points`-per-axis grid on `[0, c*]^K`.
fn dual_grid(types: usize, points: usize, cstar: f64) -> Vec<Vec<f64>> {
    let step = cstar / (points - 1) as f64;
    let mut out = vec![Vec::new()];
    for _ in 0..types {
        out = out
            .into_iter()
            .flat_map(|z| {
                (0..points).map(move |t| {
                    let mut z = z.clone();
                    z.push(t as f64 * step);
                    z
                })
            })
            .collect();
    }
    out
}

const DUAL_GRID_LIMIT: f64 = 1e6;

fn conjugate(io: &SpecIo, solution: &Path, points: usize, mesh: usize) -> Outcome<()> {
    let l = load(&io.spec)?;
    let (_, env) = load_solution(solution, &l.spec)?;
    let dims = l.spec.dims();
    let size = (points as f64).powi(dims.types as i32) * dims.states as f64;
    if size > DUAL_GRID_LIMIT {
        return Err(Error::BudgetExceeded {
            nodes: size,
            budget: DUAL_GRID_LIMIT,
        }
        .into());
    }
    let oracle = DualValueOracle::new(env.clone(), l.spec.alpha, l.spec.cstar());
    let grid = dual_grid(dims.types, points, l.spec.cstar());
    let mut rows = Vec::with_capacity(grid.len() * dims.states);
    for i in 0..dims.states {
        for z in &grid {
            rows.push((z, i, oracle.conjugate(z, i)?));
        }
    }

    let mut round_trip = 0.0f64;
    for i in 0..dims.states {
        for p in simplex_grid(dims.types, mesh) {
            let r = recover_value(&oracle, &p, i, &RecoverConfig::default())?;
            round_trip = round_trip.max((r.value - env.eval(&p, i)).abs());
        }
    }
    eprintln!("round trip: max |recovered - V| = {round_trip:.3e} over the mesh-{mesh} belief grid");

    match io.format {
        Format::Csv => {
            let mut text = String::from("z,state,value\n");
            for (z, i, u) in &rows {
                let coords: Vec<String> = z.iter().map(|x| x.to_string()).collect();
                text.push_str(&format!("{},{},{u}\n", coords.join(";"), l.spec.states[*i]));
            }
            emit(io, &text)
        }
        Format::Json => {
            let values: Vec<Value> = rows
                .iter()
                .map(|(z, i, u)| json!({ "z": z, "state": l.spec.states[*i], "value": u }))
                .collect();
            emit_json(
                io,
                &json!({ "values": values, "round_trip": { "mesh": mesh, "max_error": round_trip } }),
            )
        }
    }
}

fn exploit(io: &SpecIo, solution: &Path, at: &StartPoint, player: u8, horizon: usize, budget: f64) -> Outcome<()> {
    let l = load(&io.spec)?;
    let (sol, env) = load_solution(solution, &l.spec)?;
    let (p, i) = start_point(at, &l.spec)?;
    let v = env.eval(&p, i);
    let truncation = l.spec.cstar() * l.cert.beta.powi(horizon as i32 + 1) / l.spec.alpha;
    let (bracket, stage_tol) = if player == 1 {
        let engine = P1Engine::new(Arc::new(P1Policy::new(l.spec.clone(), l.agg.clone(), env)), p.clone());
        let br = best_response_p2(&engine, &p, i, horizon, &l.spec, &l.agg, &l.cert, budget)?;
        (br, 0.0)
    } else {
        let oracle = Arc::new(DualValueOracle::new(env, l.spec.alpha, l.spec.cstar()));
        let policy = Arc::new(P2Policy::new(oracle, l.spec.clone(), l.agg.clone(), DualSearchConfig::default()));
        let engine = P2Engine::start(policy.clone(), &p, i, &RecoverConfig::default())?;
        let br = best_response_p1(&engine, &p, i, horizon, &l.spec, &l.agg, &l.cert, budget)?;
        (br, policy.max_stage_tol())
    };
    let slack = truncation + sol.stop_tol + stage_tol + GUARANTEE_SLACK;
    let (guaranteed, holds) = if player == 1 {
        (bracket.lo, bracket.lo >= v - slack)
    } else {
        (bracket.hi, bracket.hi <= v + slack)
    };
    eprintln!(
        "player {player} engine guarantees {guaranteed:.6} against V = {v:.6} (slack {slack:.4}): {}",
        if holds { "holds" } else { "VIOLATED" }
    );
    emit_json(
        io,
        &json!({
            "player": player,
            "belief": p.0,
            "state": l.spec.states[i],
            "horizon": horizon,
            "lo": bracket.lo,
            "hi": bracket.hi,
            "nodes": bracket.nodes,
            "value": v,
            "stage_tol": stage_tol,
            "slack": slack,
            "holds": holds,
        }),
    )?;
    if holds {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_INVALID,
            message: "the engine's guarantee is outside the allowed slack".into(),
        })
    }
}

fn simulate(
    io: &SpecIo,
    solution: &Path,
    at: &StartPoint,
    episodes: usize,
    seed: u64,
    kappa: Option<&str>,
) -> Outcome<()> {
    let l = load(&io.spec)?;
    let (_, env) = load_solution(solution, &l.spec)?;
    let (p, i) = start_point(at, &l.spec)?;
    let kappa = kappa.map(|k| resolve_label("type", &l.spec.types, k)).transpose()?;
    let p1 = P1Engine::new(Arc::new(P1Policy::new(l.spec.clone(), l.agg.clone(), env.clone())), p.clone());
    let oracle = Arc::new(DualValueOracle::new(env.clone(), l.spec.alpha, l.spec.cstar()));
    let policy = Arc::new(P2Policy::new(oracle, l.spec.clone(), l.agg.clone(), DualSearchConfig::default()));
    let p2 = P2Engine::start(policy, &p, i, &RecoverConfig::default())?;
    let trunc = Truncation::default();
    let records = simulate_many(&l.spec, &p1, &p2, episodes, seed, &trunc, i, kappa)?;
    let summary = summarize(&records);
    let v = env.eval(&p, i);
    eprintln!(
        "{} episodes: mean {:.6} +/- {:.1e} (V = {v:.6}), {:.1} epochs per episode",
        summary.episodes, summary.mean, summary.stderr, summary.mean_epochs
    );
    match io.format {
        Format::Csv => {
            let mut text = String::from("episode,type,payoff,epochs,residual\n");
            for (e, r) in records.iter().enumerate() {
                text.push_str(&format!(
                    "{e},{},{},{},{}\n",
                    l.spec.types[r.kappa], r.payoff, r.epochs, r.residual
                ));
            }
            emit(io, &text)
        }
        Format::Json => emit_json(
            io,
            &json!({
                "belief": p.0,
                "state": l.spec.states[i],
                "seed": seed,
                "episodes": summary.episodes,
                "mean": summary.mean,
                "stderr": summary.stderr,
                "max_residual": summary.max_residual,
                "mean_epochs": summary.mean_epochs,
                "value": v,
            }),
        ),
    }
}
