use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pmcert::certify::{certify_witness, check_violation, eta_bisect_with_l2};
use pmcert::gilbert::{history_csv, run_gilbert, GilbertConfig};
use pmcert::gisin::simulate_pairs;
use pmcert::heuristics::seesaw_l2;
use pmcert::matrix::{
    gen_family, integerize, load_matrix, load_matrix_with_dims, load_real_matrix, make_doubled, save_matrix,
};
use pmcert::norms::{
    cut_norm_bruteforce, lk_branch_bound, lk_bruteforce, local_bound_branch_bound, local_bound_bruteforce,
    SolverConfig,
};
use pmcert::qgeom::{
    correlation_matrix, gen_packing, load_vectors, noisy_family, q_lowerbound_restarts, q_value, vectors_to_text,
    BlochConfig, Vec3, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use pmcert::{Error, WitnessMatrix};

#[derive(Parser, Debug)]
#[command(name = "pmcert", version, about = "One-bit classical bounds and qubit quantumness certificates")]
struct Cli {
    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = "PMCERT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classical bounds L_k(M), L(M) or the cut norm
    Lnorm(LnormArgs),
    /// See-saw lower bound on L_2(M)
    Seesaw(SeesawArgs),
    /// Lower bound on the qubit value q(M)
    Qlb(QlbArgs),
    /// Gilbert search for a witness separating a noisy qubit family
    Gilbert(GilbertArgs),
    /// Monte Carlo of the one-bit Gisin-Gisin model
    Gisin(GisinArgs),
    /// Certify a witness: exact L_2, q lower bound, ratios and thresholds
    Certify(CertifyArgs),
    /// Write standard matrices and packings
    Gen(GenArgs),
    /// Scale a real matrix and truncate it to integers
    Integerize(IntegerizeArgs),
}

#[derive(Args, Debug)]
struct MatrixArg {
    /// Matrix file ("n m" header, then rows)
    matrix: PathBuf,
    /// Dimensions of a headerless matrix file
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    dims: Option<Vec<usize>>,
}

impl MatrixArg {
    fn load(&self) -> Result<WitnessMatrix> {
        let m = match self.dims.as_deref() {
            Some(&[n, m]) => load_matrix_with_dims(&self.matrix, n, m),
            _ => load_matrix(&self.matrix),
        };
        m.with_context(|| format!("reading {}", self.matrix.display()))
    }
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Known lower bound on the answer
    #[arg(long, default_value_t = 0)]
    guess: i64,
    /// Prefix length at which the search splits into parallel tasks
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Suffixes holding at least this fraction of the rows skip pruning
    #[arg(long = "skip-frac", default_value_t = 0.75)]
    skip_frac: f64,
}

impl SolverArgs {
    fn config(&self, threads: usize) -> SolverConfig {
        SolverConfig {
            threads,
            parallel_depth: self.depth,
            skip_fraction: self.skip_frac,
            guess: self.guess,
        }
    }
}

#[derive(Args, Debug)]
struct LnormArgs {
    #[command(flatten)]
    input: MatrixArg,
    /// Number of messages
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Exact branch and bound (default)
    #[arg(long, conflicts_with_all = ["bruteforce", "seesaw"])]
    exact: bool,
    /// Exhaustive enumeration (small matrices only)
    #[arg(long, conflicts_with = "seesaw")]
    bruteforce: bool,
    /// See-saw lower bound (k = 2 only)
    #[arg(long)]
    seesaw: bool,
    /// Compute the local bound L(M) instead of L_k(M)
    #[arg(long, conflicts_with_all = ["cut", "seesaw"])]
    local: bool,
    /// Compute the cut norm by enumeration
    #[arg(long, conflicts_with = "seesaw")]
    cut: bool,
    /// Also print an optimal assignment
    #[arg(long)]
    witness: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SeesawArgs {
    #[command(flatten)]
    input: MatrixArg,
    /// Read the matrix as real numbers
    #[arg(long)]
    real: bool,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also print the strategy
    #[arg(long)]
    strategy: bool,
}

#[derive(Args, Debug)]
struct VectorArgs {
    /// Shared vectors for preparations and measurements
    #[arg(long, conflicts_with_all = ["vectors_a", "vectors_b"])]
    vectors: Option<PathBuf>,
    /// Preparation vectors
    #[arg(long = "vectors-a", requires = "vectors_b")]
    vectors_a: Option<PathBuf>,
    /// Measurement vectors
    #[arg(long = "vectors-b", requires = "vectors_a")]
    vectors_b: Option<PathBuf>,
}

impl VectorArgs {
    fn load(&self) -> Result<Option<BlochConfig>> {
        let read = |p: &Path| load_vectors(p).with_context(|| format!("reading {}", p.display()));
        Ok(match (&self.vectors, &self.vectors_a, &self.vectors_b) {
            (Some(v), _, _) => Some(BlochConfig::symmetric(read(v)?)?),
            (None, Some(a), Some(b)) => Some(BlochConfig::new(read(a)?, read(b)?)?),
            _ => None,
        })
    }
}

#[derive(Args, Debug)]
struct QlbArgs {
    #[command(flatten)]
    input: MatrixArg,
    #[command(flatten)]
    vectors: VectorArgs,
    /// Evaluate the supplied vectors without alternating
    #[arg(long, requires = "vectors")]
    fixed: bool,
    /// Random starting configurations
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Write the preparation vectors here
    #[arg(long = "out-a")]
    out_a: Option<PathBuf>,
    /// Write the measurement vectors here
    #[arg(long = "out-b")]
    out_b: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GilbertArgs {
    /// Shared Bloch vectors defining E = a·b
    #[arg(long, conflicts_with = "packing")]
    vectors: Option<PathBuf>,
    /// Generate a packing of this many vectors instead
    #[arg(long)]
    packing: Option<usize>,
    #[arg(long = "packing-seed", default_value_t = 0)]
    packing_seed: u64,
    #[arg(long = "packing-iters", default_value_t = 3000)]
    packing_iters: usize,
    /// Visibility of the noisy family η E + (1 − η)
    #[arg(long)]
    eta: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 200_000)]
    imax: usize,
    #[arg(long, default_value_t = 40)]
    buffer: usize,
    #[arg(long = "oracle-restarts", default_value_t = 20)]
    oracle_restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many iterations without relative progress (0: off)
    #[arg(long = "stall-window", default_value_t = 0)]
    stall_window: usize,
    /// Integerization scale for the witness
    #[arg(long, default_value_t = 1000)]
    scale: i64,
    /// Write the real residual matrix here
    #[arg(long)]
    residual: Option<PathBuf>,
    /// Write the integerized witness here
    #[arg(long = "witness")]
    witness: Option<PathBuf>,
    /// Write dist(i) as CSV here
    #[arg(long)]
    history: Option<PathBuf>,
    /// Check the integer witness with the exact solver
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug)]
struct GisinArgs {
    /// Samples per pair
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Settings to simulate: "random:N" for N random pairs
    #[arg(long, default_value = "random:20", conflicts_with = "vectors")]
    pairs: String,
    /// Simulate every pair of these shared vectors instead
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Write the per-pair results as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long = "matrix")]
    matrix: PathBuf,
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    dims: Option<Vec<usize>>,
    #[command(flatten)]
    vectors: VectorArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also bisect for the critical η to this tolerance
    #[arg(long = "eta-tol")]
    eta_tol: Option<f64>,
    /// Write the machine-readable certificate here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct GenWhat {
    /// The k-row family matrix (k = 2 is CHSH)
    #[arg(long)]
    family: Option<usize>,
    /// Stack a matrix file on its negation
    #[arg(long)]
    doubled: Option<PathBuf>,
    /// A line packing of this many unit vectors
    #[arg(long)]
    packing: Option<usize>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    what: GenWhat,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IntegerizeArgs {
    /// Real matrix file
    matrix: PathBuf,
    #[arg(long, default_value_t = 1000)]
    scale: i64,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit statuses.
const USAGE: u8 = 1;
const INPUT: u8 = 2;
const RESOURCE: u8 = 3;
const NOT_CERTIFIED: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_status(&e))
        }
    }
}

/// Context chain down to the first library error, which already names its cause.
fn describe(e: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in e.chain() {
        parts.push(cause.to_string());
        if cause.is::<Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn exit_status(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::SizeCap(_)) => RESOURCE,
        Some(Error::GuessDominated { .. } | Error::NoViolation { .. }) => NOT_CERTIFIED,
        Some(Error::InvalidArgument(_)) => USAGE,
        _ => INPUT,
    }
}

fn run(cli: Cli) -> Result<u8> {
    let threads = match cli.threads {
        Some(0) => bail!(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    info!("threads = {threads}");
    info!("{:?}", cli.command);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("starting thread pool")?;
    match cli.command {
        Command::Lnorm(a) => cmd_lnorm(a, threads),
        Command::Seesaw(a) => cmd_seesaw(a),
        Command::Qlb(a) => cmd_qlb(a),
        Command::Gilbert(a) => cmd_gilbert(a, threads),
        Command::Gisin(a) => cmd_gisin(a),
        Command::Certify(a) => cmd_certify(a, threads),
        Command::Gen(a) => cmd_gen(a),
        Command::Integerize(a) => cmd_integerize(a),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_lnorm(a: LnormArgs, threads: usize) -> Result<u8> {
    let m = a.input.load()?;
    if a.cut {
        println!("{}", cut_norm_bruteforce(&m)?);
        return Ok(0);
    }
    if a.seesaw {
        if a.k != 2 {
            bail!(Error::InvalidArgument("--seesaw bounds L_2 only".into()));
        }
        let r = seesaw_l2(&m, a.restarts, a.seed)?;
        println!("{}", r.value);
        if a.witness {
            println!("a {}", join(&r.strategy.a));
        }
        return Ok(0);
    }
    if a.local {
        if a.bruteforce {
            println!("{}", local_bound_bruteforce(&m)?);
        } else {
            let w = local_bound_branch_bound(&m, &a.solver.config(threads))?;
            println!("{}", w.value);
            if a.witness {
                println!("a {}", join(&w.a));
                println!("b {}", join(&w.b));
            }
        }
        return Ok(0);
    }
    if a.bruteforce {
        println!("{}", lk_bruteforce(&m, a.k)?);
        return Ok(0);
    }
    let r = lk_branch_bound(&m, a.k, &a.solver.config(threads))?;
    println!("{}", r.value);
    if r.guess_dominated {
        warn!("guess {} is not attained: L_{} is below it", a.solver.guess, a.k);
    }
    if a.witness {
        if let Some(w) = &r.witness {
            println!("groups {}", join(&w.groups()));
        }
    }
    info!("{} search nodes", r.nodes);
    Ok(0)
}

fn cmd_seesaw(a: SeesawArgs) -> Result<u8> {
    if a.real {
        if a.input.dims.is_some() {
            bail!(Error::InvalidArgument("--dims is only supported for integer matrices".into()));
        }
        let m = load_real_matrix(&a.input.matrix)?;
        let r = seesaw_l2(&m, a.restarts, a.seed)?;
        println!("{:?}", r.value);
        if a.strategy {
            print_strategy(&r.strategy);
        }
    } else {
        let m = a.input.load()?;
        let r = seesaw_l2(&m, a.restarts, a.seed)?;
        println!("{}", r.value);
        if a.strategy {
            print_strategy(&r.strategy);
        }
    }
    Ok(0)
}

fn print_strategy(s: &pmcert::heuristics::OneBitStrategy) {
    println!("a {}", join(&s.a));
    println!("b+ {}", join(&s.b_plus));
    println!("b- {}", join(&s.b_minus));
}

fn cmd_qlb(a: QlbArgs) -> Result<u8> {
    let m = a.input.load()?;
    let given = a.vectors.load()?;
    let cfg = match (given, a.fixed) {
        (Some(c), true) => c,
        (given, _) => {
            let starts = given.into_iter().collect();
            q_lowerbound_restarts(&m, starts, a.restarts, a.seed, a.max_iter, a.tol)?.config
        }
    };
    println!("{:?}", q_value(&m, &cfg)?);
    if let Some(p) = &a.out_a {
        write_out(Some(p), &vectors_to_text(cfg.a()))?;
    }
    if let Some(p) = &a.out_b {
        write_out(Some(p), &vectors_to_text(cfg.b()))?;
    }
    Ok(0)
}

fn cmd_gilbert(a: GilbertArgs, threads: usize) -> Result<u8> {
    let vectors = match (&a.vectors, a.packing) {
        (Some(p), _) => load_vectors(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(n)) => gen_packing(n, a.packing_seed, a.packing_iters),
        (None, None) => bail!(Error::InvalidArgument("give --vectors or --packing".into())),
    };
    let e = correlation_matrix(&BlochConfig::symmetric(vectors)?);
    let target = noisy_family(&e, a.eta)?;
    let cfg = GilbertConfig {
        epsilon: a.eps,
        i_max: a.imax,
        buffer_size: a.buffer,
        oracle_restarts: a.oracle_restarts,
        seed: a.seed,
        stall_window: a.stall_window,
        ..GilbertConfig::default()
    };
    let out = run_gilbert(&target, &cfg)?;
    println!("iterations = {}", out.state.i);
    println!("stop = {:?}", out.stop);
    println!("final_dist = {:e}", out.final_dist);
    if let Some(p) = &a.residual {
        save_matrix(&out.residual, p)?;
    }
    if let Some(p) = &a.history {
        write_out(Some(p), &history_csv(&out.state.dist_history))?;
    }
    let witness = integerize(&out.residual, a.scale)?;
    if let Some(p) = &a.witness {
        save_matrix(&witness, p)?;
    }
    if a.verify {
        let solved = lk_branch_bound(&witness, 2, &SolverConfig { threads, ..SolverConfig::default() })?;
        let v = check_violation(&witness, &target, solved.value)?;
        println!("l2_exact = {}", solved.value);
        println!("witness_value = {:?}", v.value);
        println!("margin = {:?}", v.margin);
        println!("violated = {}", v.violated);
        if !v.violated {
            return Ok(NOT_CERTIFIED);
        }
    }
    Ok(0)
}

fn cmd_gisin(a: GisinArgs) -> Result<u8> {
    let pairs: Vec<(Vec3, Vec3)> = match &a.vectors {
        Some(p) => {
            let v = load_vectors(p).with_context(|| format!("reading {}", p.display()))?;
            v.iter().flat_map(|x| v.iter().map(move |y| (*x, *y))).collect()
        }
        None => {
            let count: usize = a
                .pairs
                .strip_prefix("random:")
                .and_then(|c| c.parse().ok())
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("--pairs {:?}: expected random:N", a.pairs)))?;
            let cfg = BlochConfig::random(count, count, a.seed);
            cfg.a().iter().copied().zip(cfg.b().iter().copied()).collect()
        }
    };
    let reports = simulate_pairs(&pairs, a.samples, a.seed)?;
    let mut csv = String::from("pair,ab,detect_rate,e_detected,e_coarse,se_detect_rate,se_detected,se_coarse\n");
    for (i, ((pa, pb), r)) in pairs.iter().zip(&reports).enumerate() {
        let ab = pa.dot(pb);
        println!(
            "pair {i}: a.b = {ab:.6}  detect_rate = {:.6}  e_detected = {:.6} (expect {ab:.6})  e_coarse = {:.6} (expect {:.6})",
            r.detect_rate,
            r.e_detected,
            r.e_coarse,
            (ab + 1.0) / 2.0
        );
        csv.push_str(&format!(
            "{i},{ab:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.detect_rate, r.e_detected, r.e_coarse, r.se_detect_rate, r.se_detected, r.se_coarse
        ));
    }
    if let Some(p) = &a.csv {
        write_out(Some(p), &csv)?;
    }
    Ok(0)
}

fn cmd_certify(a: CertifyArgs, threads: usize) -> Result<u8> {
    let input = MatrixArg {
        matrix: a.matrix.clone(),
        dims: a.dims.clone(),
    };
    let m = input.load()?;
    let vectors = a.vectors.load()?;
    let cert = certify_witness(&m, vectors.as_ref(), &a.solver.config(threads), a.seed)?;
    print!("{}", cert.to_report());
    if let Some(p) = &a.out {
        write_out(Some(p), &cert.to_key_value())?;
    }
    if let (Some(tol), true) = (a.eta_tol, cert.margin_ok) {
        let eta = eta_bisect_with_l2(&m, &cert.config, cert.l2_exact, tol)?;
        println!("  eta (bisection) {eta:.8}");
    }
    Ok(if cert.margin_ok { 0 } else { NOT_CERTIFIED })
}

fn cmd_gen(a: GenArgs) -> Result<u8> {
    let text = if let Some(k) = a.what.family {
        gen_family(k)?.to_text()
    } else if let Some(p) = &a.what.doubled {
        let m = load_matrix(p).with_context(|| format!("reading {}", p.display()))?;
        make_doubled(&m).to_text()
    } else if let Some(n) = a.what.packing {
        let v: Vec<Vec3> = gen_packing(n, a.seed, a.iters);
        vectors_to_text(&v)
    } else {
        unreachable!("clap enforces one target")
    };
    write_out(a.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_integerize(a: IntegerizeArgs) -> Result<u8> {
    let r = load_real_matrix(&a.matrix).with_context(|| format!("reading {}", a.matrix.display()))?;
    write_out(a.out.as_deref(), &integerize(&r, a.scale)?.to_text())?;
    Ok(0)
}
