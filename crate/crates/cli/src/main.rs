//! `scansat` command-line driver.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use scansat::attack::{run_attack, verify_key, AttackMode, AttackResult, Outcome, ResultRow};
use scansat::bench::write_bench;
use scansat::cnf::to_cnf;
use scansat::defense::{scan_inserted_netlist, GoldenSecret};
use scansat::solver::SolverSession;
use scansat::{LockedModel, ModelKind, ObfuscatedDesign, Oracle};
use serde::{Deserialize, Serialize};

use config::{default_mode, load_secret, AttackSection, DesignFile, RunConfig};

const EXIT_ATTACK_FAILED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "scansat", version, about = "Lock scan chains, attack them with SAT, check the result")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lock a circuit and write the public design plus the golden secret.
    Gen(GenArgs),
    /// Attack a design through a simulated chip built from the secret.
    Attack(AttackArgs),
    /// Compare a recovered secret against the chip.
    Verify(VerifyArgs),
    /// Run a suite of gen+attack jobs and tabulate them.
    Bench(BenchArgs),
    /// Write the combinational locked model as DIMACS and BENCH.
    ExportCnf(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "SCANSAT_OUT", default_value = ".")]
    out: PathBuf,
    /// RNG seed; overrides the config value.
    #[arg(long, env = "SCANSAT_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, env = "SCANSAT_CONFIG")]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AttackArgs {
    /// Public design file written by `gen`.
    #[arg(long, env = "SCANSAT_DESIGN")]
    design: PathBuf,
    /// Golden secret; only used to build the chip.
    #[arg(long, env = "SCANSAT_SECRET")]
    secret: PathBuf,
    /// Run configuration supplying attack limits and mode.
    #[arg(long, env = "SCANSAT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "SCANSAT_MODE")]
    mode: Option<AttackMode>,
    /// Whole-attack wall clock limit in seconds.
    #[arg(long, env = "SCANSAT_TIMEOUT")]
    timeout: Option<f64>,
    /// Log every chip transaction to transcript.jsonl.
    #[arg(long)]
    transcript: bool,
    /// Dump the final solver CNF to final.cnf.
    #[arg(long)]
    dump_cnf: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, env = "SCANSAT_DESIGN")]
    design: PathBuf,
    /// Golden secret.
    #[arg(long, env = "SCANSAT_SECRET")]
    secret: PathBuf,
    /// Recovered secret or attack result JSON.
    #[arg(long)]
    recovered: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, env = "SCANSAT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite file: `{"trials": n, "runs": [RunConfig, ...]}`.
    #[arg(long, env = "SCANSAT_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "SCANSAT_JOBS")]
    jobs: Option<usize>,
    #[arg(long, env = "SCANSAT_TIMEOUT")]
    timeout: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, env = "SCANSAT_DESIGN")]
    design: PathBuf,
    /// Key window for a DOS design.
    #[arg(long, default_value_t = 1)]
    window: u64,
    /// Model that ignores the scan obfuscation.
    #[arg(long)]
    naive: bool,
    #[arg(long, env = "SCANSAT_OUT", default_value = ".")]
    out: PathBuf,
}

/// Error carrying its exit code.
struct Fail(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(EXIT_CONFIG, e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Attack(a) => attack(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Bench(a) => bench(a),
        Cmd::ExportCnf(a) => export_cnf(a),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn gen(a: GenArgs) -> Result<u8, Fail> {
    let (mut cfg, base) = RunConfig::load(&a.config)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    let (d, g) = cfg.generate(&base)?;
    let out = &a.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("locked.bench"), &write_bench(&d.netlist))?;
    write(&out.join("scan_inserted.bench"), &write_bench(&scan_inserted_netlist(&d)?))?;
    write(&out.join("design.json"), &to_json(&DesignFile::from_design(&cfg.circuit_name(), &d)))?;
    write(&out.join("golden.json"), &to_json(&g))?;
    eprintln!(
        "locked {}: {} chains x {} cells, R={}, key bits static={} scramble={} dos={} rll={}",
        cfg.circuit_name(),
        d.arch.num_chains(),
        d.depth(),
        d.compression.ratio,
        g.static_key.len(),
        g.scramble_key.len(),
        g.dos.as_ref().map_or(0, |x| x.seed.len()),
        g.rll_key.len()
    );
    Ok(0)
}

fn key_bits(g: &GoldenSecret) -> usize {
    g.static_key.len() + g.scramble_key.len() + g.dos.as_ref().map_or(0, |d| d.seed.len()) + g.rll_key.len()
}

fn exit_for(r: &AttackResult) -> u8 {
    match r.outcome {
        Outcome::Timeout => EXIT_TIMEOUT,
        _ if r.success => 0,
        _ => EXIT_ATTACK_FAILED,
    }
}

struct Job<'a> {
    circuit: &'a str,
    design: &'a ObfuscatedDesign,
    secret: GoldenSecret,
    mode: AttackMode,
    section: &'a AttackSection,
    seed: u64,
    timeout: Option<f64>,
}

fn run_job(j: Job<'_>, transcript: Option<Box<dyn std::io::Write + Send>>, record: bool) -> Result<(AttackResult, ResultRow, SolverSession), Fail> {
    let cfg = j.section.to_config(j.seed, j.timeout)?;
    let bits = key_bits(&j.secret);
    let mut oracle = Oracle::new(j.design.clone(), j.secret)?;
    oracle.set_transcript(transcript);
    let mut s = if record { SolverSession::new().with_recording() } else { SolverSession::new() };
    let r = run_attack(j.design, &mut oracle, j.mode, &cfg, &mut s).map_err(|e| Fail(EXIT_CONFIG, e.into()))?;
    let row = ResultRow::new(j.circuit, j.design.compression.ratio, bits, &r);
    Ok((r, row, s))
}

fn append_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists();
    let f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn attack(a: AttackArgs) -> Result<u8, Fail> {
    let file = DesignFile::load(&a.design)?;
    let d = file.to_design()?;
    let secret = load_secret(&a.secret, &d)?;
    let (section, cfg_mode, cfg_seed) = match &a.config {
        Some(p) => {
            let (c, _) = RunConfig::load(p)?;
            (c.attack, c.mode, c.seed)
        }
        None => (AttackSection::default(), None, 0),
    };
    let mode = a.mode.or(cfg_mode).unwrap_or_else(|| default_mode(&d));
    let out = &a.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let transcript: Option<Box<dyn std::io::Write + Send>> = if a.transcript {
        let f = fs::File::create(out.join("transcript.jsonl")).context("creating transcript.jsonl")?;
        Some(Box::new(std::io::BufWriter::new(f)))
    } else {
        None
    };
    let job = Job {
        circuit: &file.circuit,
        design: &d,
        secret,
        mode,
        section: &section,
        seed: a.common.seed.unwrap_or(cfg_seed),
        timeout: a.timeout,
    };
    let (r, row, s) = run_job(job, transcript, a.dump_cnf)?;
    write(&out.join("result.json"), &to_json(&r))?;
    append_csv(&out.join("results.csv"), std::slice::from_ref(&row))?;
    if let Some(cnf) = s.to_dimacs() {
        write(&out.join("final.cnf"), &cnf)?;
    }
    eprintln!(
        "{:?} attack on {}: {:?}, success={}, DIPs={}, iterations={}, {:.3}s",
        r.mode, file.circuit, r.outcome, r.success, r.dips, r.iterations, r.time_s
    );
    for (i, t) in r.resolution_trace.iter().enumerate() {
        eprintln!("  iteration {}: {}", i + 1, AttackResult::render_resolution(t));
    }
    Ok(exit_for(&r))
}

fn verify(a: VerifyArgs) -> Result<u8, Fail> {
    let d = DesignFile::load(&a.design)?.to_design()?;
    let golden = load_secret(&a.secret, &d)?;
    let recovered = load_secret(&a.recovered, &d)?;
    let mut oracle = Oracle::new(d.clone(), golden.clone())?;
    let ok = verify_key(&d, &mut oracle, &recovered, a.trials, a.seed).map_err(|e| Fail(EXIT_CONFIG, e.into()))?;
    let same_seed = match (&golden.dos, &recovered.dos) {
        (Some(x), Some(y)) => x.seed == y.seed,
        (None, None) => true,
        _ => false,
    };
    let bitwise = golden.static_key == recovered.static_key
        && golden.scramble_key == recovered.scramble_key
        && golden.rll_key == recovered.rll_key
        && same_seed;
    println!("{}: {} random transactions", if ok { "PASS" } else { "FAIL" }, a.trials);
    if ok && !bitwise {
        println!("NOTE: functionally equivalent but differs bitwise from the golden secret");
    }
    Ok(if ok { 0 } else { EXIT_ATTACK_FAILED })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    #[serde(default = "one")]
    trials: u64,
    #[serde(default)]
    runs: Vec<RunConfig>,
}

fn one() -> u64 {
    1
}

#[derive(Debug)]
struct BenchRow {
    row: ResultRow,
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    circuit: &'a str,
    mode: AttackMode,
    ratio: usize,
    key_bits: usize,
    seed: u64,
    outcome: Outcome,
    success: bool,
    dips: usize,
    iterations: usize,
    time_s: f64,
    error: &'a str,
}

impl BenchRow {
    fn csv(&self) -> CsvRow<'_> {
        let r = &self.row;
        CsvRow {
            circuit: &r.circuit,
            mode: r.mode,
            ratio: r.ratio,
            key_bits: r.key_bits,
            seed: self.seed,
            outcome: r.outcome,
            success: r.success,
            dips: r.dips,
            iterations: r.iterations,
            time_s: r.time_s,
            error: &self.error,
        }
    }
}

fn bench(a: BenchArgs) -> Result<u8, Fail> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let suite: Suite = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let base_seed = a.common.seed.unwrap_or(0);
    let tasks: Vec<(usize, u64)> = (0..suite.runs.len()).flat_map(|i| (0..suite.trials).map(move |t| (i, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let rows: Vec<BenchRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, t)| {
                let mut cfg = suite.runs[i].clone();
                cfg.seed = cfg.seed.wrapping_add(base_seed).wrapping_add(t);
                bench_one(&cfg, &base, a.timeout)
            })
            .collect()
    });
    let out = &a.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("results.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for r in &rows {
        w.serialize(r.csv()).context("writing results.csv")?;
    }
    w.flush().context("writing results.csv")?;
    write(&out.join("results.md"), &markdown(&rows))?;
    let failed = rows.iter().filter(|r| !r.row.success).count();
    eprintln!("{} runs, {} failed", rows.len(), failed);
    Ok(0)
}

fn bench_one(cfg: &RunConfig, base: &Path, timeout: Option<f64>) -> BenchRow {
    let fail = |e: String| BenchRow {
        row: ResultRow {
            circuit: cfg.circuit_name(),
            mode: cfg.mode.unwrap_or(AttackMode::Static),
            ratio: cfg.ratio,
            key_bits: 0,
            outcome: Outcome::Partial,
            success: false,
            dips: 0,
            iterations: 0,
            time_s: 0.0,
        },
        seed: cfg.seed,
        error: e,
    };
    let (d, g) = match cfg.generate(base) {
        Ok(x) => x,
        Err(e) => return fail(format!("{e:#}")),
    };
    let job = Job {
        circuit: &cfg.circuit_name(),
        design: &d,
        secret: g,
        mode: cfg.mode.unwrap_or_else(|| default_mode(&d)),
        section: &cfg.attack,
        seed: cfg.seed,
        timeout,
    };
    match run_job(job, None, false) {
        Ok((_, row, _)) => BenchRow { row, seed: cfg.seed, error: String::new() },
        Err(Fail(_, e)) => fail(format!("{e:#}")),
    }
}

fn markdown(rows: &[BenchRow]) -> String {
    let mut s = String::from("| Circuit | Mode | R | Key bits | #DIPs | Iterations | Time (s) | Result |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let result = if r.error.is_empty() { format!("{:?}", r.row.outcome) } else { format!("error: {}", r.error) };
        s.push_str(&format!(
            "| {} | {:?} | {} | {} | {} | {} | {:.3} | {} |\n",
            r.row.circuit, r.row.mode, r.row.ratio, r.row.key_bits, r.row.dips, r.row.iterations, r.row.time_s, result
        ));
    }
    s
}

fn export_cnf(a: ExportArgs) -> Result<u8, Fail> {
    let file = DesignFile::load(&a.design)?;
    let d = file.to_design()?;
    let kind = if a.naive {
        ModelKind::Naive
    } else if d.dos.is_some() {
        ModelKind::Dynamic(a.window.max(1))
    } else {
        ModelKind::Static
    };
    let m = LockedModel::build(&d, kind)?;
    let cnf = to_cnf(&m.netlist, "model")?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut text = format!(
        "c locked model of {}: {} scan bits, {} PIs, {} key bits\n",
        file.circuit,
        m.scan_bits(),
        m.num_pis(),
        m.key_len()
    );
    text.push_str(&cnf.to_dimacs());
    write(&a.out.join("model.cnf"), &text)?;
    write(&a.out.join("model.bench"), &m.to_bench())?;
    Ok(0)
}
