//! Command-line front end. Data goes to standard output (or `--out`),
//! diagnostics and run metadata go to standard error, and every
//! computation is configured entirely by flags, so identical invocations
//! produce identical data bytes.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 resource
//! limit, 4 iteration did not converge (the bracket is still printed).

use std::fmt::Display;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::Serialize;

use av4231::automaton::{Automaton, AutomatonError, BuildOptions, Mode, Operator};
use av4231::lock::{count_states, unrank_bounded, LockError, LockSequence};
use av4231::perm::{enumerate_avoiders_with_limit, InsertionWord, PermError, Permutation};
use av4231::spectral::{
    certify_lower_bound, count_words_on, extrapolate, parse_rational, power_iteration_on,
    verify_lower_bound, write_certificate, EigenEstimate, SpectralError, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
};

#[derive(Parser)]
#[command(
    name = "av4231",
    version,
    about = "Insertion-encoding automata for 4231-avoiding permutations",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Number of states of the k-slot automaton (Schröder sums, no enumeration)
    States {
        #[arg(long)]
        k: usize,
    },
    /// Index of a lock sequence in the (length, lex) state order
    Rank {
        /// Lock sequence, e.g. "0,2,1,0" or compact "0210"
        #[arg(long)]
        seq: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Lock sequence at a given state index
    Unrank {
        #[arg(long)]
        index: u64,
        /// Bound the index by the state count of this cap
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Export the transfer matrix as text: header "N E k", then "i j w" lines
    Build {
        #[arg(long)]
        k: u32,
        #[command(flatten)]
        resources: ResourceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Structural statistics of the automaton
    Stats {
        #[arg(long)]
        k: u32,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Dominant-eigenvalue bracket by power iteration
    Eig {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iter: u64,
        #[command(flatten)]
        resources: ResourceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Exactly verify a growth-rate lower bound A v >= c v
    Certify {
        #[arg(long)]
        k: u32,
        /// Bound as "p/q", a decimal such as "9.35", or an integer
        #[arg(long)]
        c: String,
        /// File with one non-negative integer vector entry per line, in
        /// state-rank order; derived from a power iterate when omitted
        #[arg(long)]
        vector: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iter: u64,
        #[command(flatten)]
        resources: ResourceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Exact accepted-word counts for lengths 0..=n
    Count {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        resources: ResourceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Brute-force count of 4231-avoiding permutations of length n
    Oracle {
        #[arg(long)]
        n: usize,
        /// Keep only permutations whose evolution uses at most k slots
        #[arg(long)]
        k: Option<usize>,
        /// Refusal threshold for the exhaustive enumeration
        #[arg(long, default_value_t = av4231::perm::DEFAULT_ENUMERATION_LIMIT)]
        limit: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Insertion encoding of a permutation
    Encode {
        /// Space-separated values, e.g. "2 4 6 1 5 3"
        #[arg(long)]
        perm: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Permutation encoded by a word
    Decode {
        /// Whitespace-separated letters, e.g. "m1 l1 m2 l1 f2 f1"
        #[arg(long)]
        word: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Whether the k-slot automaton accepts a word
    Accepts {
        #[arg(long)]
        word: String,
        #[arg(long)]
        k: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Eigenvalue brackets for every cap 1..=k
    Table {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iter: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        resources: ResourceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Least-squares fit lambda ~ a + b/sqrt(k) over table rows
    Extrapolate {
        /// CSV rows "k,lambda,..." as produced by `table`; stdin if omitted
        #[arg(long)]
        table: Option<String>,
        #[arg(long, default_value_t = 1)]
        k_min: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct ResourceArgs {
    /// csr materializes the matrix, matrix-free regenerates rows on the fly
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Worker threads; defaults to the available parallelism
    #[arg(long)]
    threads: Option<usize>,
    /// Memory budget in bytes for materialized matrices
    #[arg(long, default_value_t = av4231::automaton::DEFAULT_MEMORY_BUDGET)]
    memory_budget: u64,
}

#[derive(Args)]
struct OutputArgs {
    /// Write data output to a file instead of standard output
    #[arg(long)]
    out: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Csr,
    MatrixFree,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

impl ResourceArgs {
    fn build_options(&self) -> BuildOptions {
        BuildOptions {
            mode: match self.mode {
                ModeArg::Auto => Mode::Auto,
                ModeArg::Csr => Mode::Csr,
                ModeArg::MatrixFree => Mode::MatrixFree,
            },
            memory_budget: self.memory_budget,
        }
    }

    fn configure_threads(&self) {
        if let Some(threads) = self.threads {
            // Ignored if a global pool already exists.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
}

enum CliError {
    Validation(String),
    Resource(String),
    NotConverged(Box<EigenEstimate>, f64),
    Io(io::Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<PermError> for CliError {
    fn from(e: PermError) -> Self {
        match e {
            PermError::EnumerationLimit { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LockError> for CliError {
    fn from(e: LockError) -> Self {
        match e {
            LockError::CapTooLarge(_) | LockError::EnumerationLimit { .. } => {
                CliError::Resource(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AutomatonError> for CliError {
    fn from(e: AutomatonError) -> Self {
        match e {
            AutomatonError::Lock(inner) => inner.into(),
            AutomatonError::ResourceLimit { .. } | AutomatonError::DimensionTooLarge(_) => {
                CliError::Resource(e.to_string())
            }
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Automaton(inner) => inner.into(),
            SpectralError::NotConverged {
                estimate, tolerance, ..
            } => CliError::NotConverged(estimate, tolerance),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let (name, result) = dispatch(cli.command);
    let wall_ms = started.elapsed().as_millis();
    match result {
        Ok(()) => {
            eprintln!(
                "# av4231 {} cmd={name} wall_ms={wall_ms}",
                env!("CARGO_PKG_VERSION")
            );
            ExitCode::SUCCESS
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Resource(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::NotConverged(estimate, tol)) => {
            eprintln!(
                "error: bracket [{}, {}] did not reach width {tol:e} in {} iterations",
                estimate.lower, estimate.upper, estimate.iterations
            );
            ExitCode::from(4)
        }
        Err(CliError::Io(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> (&'static str, Result<(), CliError>) {
    match command {
        Command::States { k } => ("states", states(k)),
        Command::Rank { seq, out } => ("rank", rank(&seq, &out)),
        Command::Unrank { index, k, out } => ("unrank", unrank_cmd(index, k, &out)),
        Command::Build { k, resources, out } => ("build", build(k, &resources, &out)),
        Command::Stats { k, format, out } => ("stats", stats(k, format, &out)),
        Command::Eig {
            k,
            tol,
            max_iter,
            resources,
            out,
        } => ("eig", eig(k, tol, max_iter, &resources, &out)),
        Command::Certify {
            k,
            c,
            vector,
            tol,
            max_iter,
            resources,
            out,
        } => (
            "certify",
            certify(k, &c, vector.as_deref(), tol, max_iter, &resources, &out),
        ),
        Command::Count {
            k,
            n,
            format,
            resources,
            out,
        } => ("count", count(k, n, format, &resources, &out)),
        Command::Oracle { n, k, limit, out } => ("oracle", oracle(n, k, limit, &out)),
        Command::Encode { perm, out } => ("encode", encode(&perm, &out)),
        Command::Decode { word, out } => ("decode", decode(&word, &out)),
        Command::Accepts { word, k, out } => ("accepts", accepts(&word, k, &out)),
        Command::Table {
            k,
            tol,
            max_iter,
            format,
            resources,
            out,
        } => ("table", table(k, tol, max_iter, format, &resources, &out)),
        Command::Extrapolate { table, k_min, out } => {
            ("extrapolate", extrapolate_cmd(table.as_deref(), k_min, &out))
        }
    }
}

fn emit(out: &OutputArgs, body: impl Display) -> Result<(), CliError> {
    match &out.out {
        Some(path) => {
            let mut file = BufWriter::new(fs::File::create(path)?);
            writeln!(file, "{body}")?;
            file.flush()?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn states(k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Validation("--k must be at least 1".into()));
    }
    println!("{}", count_states(k));
    Ok(())
}

fn rank(seq: &str, out: &OutputArgs) -> Result<(), CliError> {
    let state: LockSequence = seq.parse()?;
    emit(out, state.rank()?)
}

fn unrank_cmd(index: u64, k: Option<usize>, out: &OutputArgs) -> Result<(), CliError> {
    let state = match k {
        Some(cap) => unrank_bounded(index, cap)?,
        None => av4231::lock::unrank(index)?,
    };
    emit(out, state)
}

fn build(k: u32, resources: &ResourceArgs, out: &OutputArgs) -> Result<(), CliError> {
    resources.configure_threads();
    let matrix = Automaton::new(k)?.build_matrix(&resources.build_options())?;
    eprintln!(
        "# k={k} states={} entries={} letters={}",
        matrix.dim(),
        matrix.nnz(),
        matrix.letter_count()
    );
    match &out.out {
        Some(path) => {
            let mut file = BufWriter::new(fs::File::create(path)?);
            matrix.write_text(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            matrix.write_text(BufWriter::new(stdout.lock()))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    k: u32,
    states: u64,
    transitions: u64,
    #[serde(rename = "maxOutDegree")]
    max_out_degree: u64,
    #[serde(rename = "argmaxState")]
    argmax_state: String,
}

fn stats(k: u32, format: Format, out: &OutputArgs) -> Result<(), CliError> {
    let stats = Automaton::new(k)?.stats()?;
    let output = StatsOutput {
        k: stats.k,
        states: stats.states,
        transitions: stats.transitions,
        max_out_degree: stats.max_out_degree,
        argmax_state: stats.argmax_state.to_string(),
    };
    let body = match format {
        Format::Json => serde_json::to_string(&output).expect("serializable"),
        Format::Csv | Format::Text => format!(
            "{} {} {} {} {}",
            output.k, output.states, output.transitions, output.max_out_degree, output.argmax_state
        ),
    };
    emit(out, body)
}

#[derive(Serialize)]
struct EigOutput {
    k: u32,
    lambda: f64,
    lower: f64,
    upper: f64,
    iterations: u64,
    mode: &'static str,
}

fn eig(
    k: u32,
    tol: f64,
    max_iter: u64,
    resources: &ResourceArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    resources.configure_threads();
    let op = Operator::new(k, &resources.build_options())?;
    eprintln!("# k={k} states={} mode={}", op.dim(), op.mode_name());
    let mut progress = |iteration: u64, lower: f64, upper: f64| {
        if iteration % 100 == 0 {
            eprintln!("# iter={iteration} bracket=[{lower}, {upper}]");
        }
    };
    let outcome = power_iteration_on(&op, tol, max_iter, Some(&mut progress));
    let output = EigOutput {
        k,
        lambda: outcome.estimate.estimate,
        lower: outcome.estimate.lower,
        upper: outcome.estimate.upper,
        iterations: outcome.estimate.iterations,
        mode: op.mode_name(),
    };
    emit(out, serde_json::to_string(&output).expect("serializable"))?;
    if !outcome.converged {
        return Err(CliError::NotConverged(Box::new(outcome.estimate), tol));
    }
    Ok(())
}

#[derive(Serialize)]
struct CertifyOutput {
    k: u32,
    c: String,
    verified: bool,
    violation: Option<u64>,
    mode: &'static str,
}

fn certify(
    k: u32,
    c: &str,
    vector_path: Option<&str>,
    tol: f64,
    max_iter: u64,
    resources: &ResourceArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    resources.configure_threads();
    let bound = parse_rational(c)?;
    let options = resources.build_options();
    let (certificate, mode) = match vector_path {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let vector = text
                .split_whitespace()
                .map(|tok| {
                    BigUint::from_str(tok).map_err(|_| {
                        CliError::Validation(format!("bad vector entry {tok:?} in {path}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let op = Operator::new(k, &options)?;
            let mode = op.mode_name();
            (verify_lower_bound(&op, &bound, vector)?, mode)
        }
        None => {
            let cert = certify_lower_bound(k, &bound, tol, max_iter, &options)?;
            (cert, "auto")
        }
    };
    let output = CertifyOutput {
        k,
        c: format!("{}/{}", certificate.c.numer(), certificate.c.denom()),
        verified: certificate.verified,
        violation: certificate.violation,
        mode,
    };
    println!("{}", serde_json::to_string(&output).expect("serializable"));
    if let Some(path) = &out.out {
        let mut file = BufWriter::new(fs::File::create(path)?);
        write_certificate(&certificate, &mut file)?;
        file.flush()?;
    }
    Ok(())
}

fn count(
    k: u32,
    n: usize,
    format: Format,
    resources: &ResourceArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    resources.configure_threads();
    let op = Operator::new(k, &resources.build_options())?;
    eprintln!("# k={k} states={} mode={}", op.dim(), op.mode_name());
    let counts = count_words_on(&op, n);
    if counts.is_restricted(n) {
        eprintln!(
            "# note: lengths above {} count only the {k}-slot class, flagged as restricted",
            2 * k as usize - 1
        );
    }
    let mut body = String::new();
    match format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = counts
                .counts
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    serde_json::json!({
                        "n": i,
                        "count": c.to_string(),
                        "restricted": counts.is_restricted(i),
                    })
                })
                .collect();
            body = serde_json::to_string(&rows).expect("serializable");
        }
        Format::Csv | Format::Text => {
            body.push_str("n,count,restricted");
            for (i, c) in counts.counts.iter().enumerate() {
                let flag = if counts.is_restricted(i) { "restricted" } else { "" };
                body.push_str(&format!("\n{i},{c},{flag}"));
            }
        }
    }
    emit(out, body)
}

fn oracle(n: usize, k: Option<usize>, limit: usize, out: &OutputArgs) -> Result<(), CliError> {
    let count = enumerate_avoiders_with_limit(n, k, limit)?;
    emit(out, count)
}

fn encode(perm: &str, out: &OutputArgs) -> Result<(), CliError> {
    let p: Permutation = perm.parse()?;
    emit(out, p.encode())
}

fn decode(word: &str, out: &OutputArgs) -> Result<(), CliError> {
    let w: InsertionWord = word.parse()?;
    emit(out, w.decode()?)
}

fn accepts(word: &str, k: u32, out: &OutputArgs) -> Result<(), CliError> {
    let w: InsertionWord = word.parse()?;
    let automaton = Automaton::new(k)?;
    emit(out, automaton.accepts(&w))
}

fn table(
    k_max: u32,
    tol: f64,
    max_iter: u64,
    format: Format,
    resources: &ResourceArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    resources.configure_threads();
    let options = resources.build_options();
    let mut rows = Vec::new();
    let mut failure: Option<CliError> = None;
    for k in 1..=k_max {
        // A cap that exhausts resources truncates the table there; the
        // finished rows are still emitted.
        let op = match Operator::new(k, &options) {
            Ok(op) => op,
            Err(err) => {
                eprintln!("# k={k}: {err}");
                failure = Some(err.into());
                break;
            }
        };
        let outcome = power_iteration_on(&op, tol, max_iter, None);
        if !outcome.converged {
            eprintln!("# k={k}: bracket not converged within {max_iter} iterations");
        }
        rows.push(EigOutput {
            k,
            lambda: outcome.estimate.estimate,
            lower: outcome.estimate.lower,
            upper: outcome.estimate.upper,
            iterations: outcome.estimate.iterations,
            mode: op.mode_name(),
        });
    }
    let body = match format {
        Format::Json => serde_json::to_string(&rows).expect("serializable"),
        Format::Csv | Format::Text => {
            let mut text = String::from("k,lambda,lower,upper,iterations");
            for row in &rows {
                text.push_str(&format!(
                    "\n{},{:.6},{:.6},{:.6},{}",
                    row.k, row.lambda, row.lower, row.upper, row.iterations
                ));
            }
            text
        }
    };
    emit(out, body)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ExtrapolateOutput {
    intercept: f64,
    slope: f64,
    residuals: Vec<(u32, f64)>,
}

fn extrapolate_cmd(table: Option<&str>, k_min: u32, out: &OutputArgs) -> Result<(), CliError> {
    let text = match table {
        Some(path) => fs::read_to_string(path)?,
        None => {
            let mut buffer = String::new();
            io::stdin().read_to_string(&mut buffer)?;
            buffer
        }
    };
    let mut rows = Vec::new();
    for line in text.lines() {
        let mut fields = line.split(',');
        let (Some(k), Some(lambda)) = (fields.next(), fields.next()) else {
            continue;
        };
        let (Ok(k), Ok(lambda)) = (k.trim().parse::<u32>(), lambda.trim().parse::<f64>()) else {
            continue; // header or annotation line
        };
        rows.push((k, lambda));
    }
    let fit = extrapolate(&rows, k_min)?;
    let output = ExtrapolateOutput {
        intercept: fit.intercept,
        slope: fit.slope,
        residuals: fit.residuals,
    };
    emit(out, serde_json::to_string(&output).expect("serializable"))
}
