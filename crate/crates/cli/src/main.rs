use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use phstab::analysis::{order_range_derivative_only, order_range_pd_stabilizing};
use phstab::condensed::{condense_unitary, eliminate};
use phstab::io::{
    from_json, read_system_file, read_text, to_json, CondensedFile, DesignFile, Meta, ReportFile, SystemFile,
};
use phstab::model::random_ph_system;
use phstab::synthesis::{synthesize_order_only, synthesize_pd, synthesize_proportional};
use phstab::verify::{analyze_open_loop, verify_design, AnalysisReport, OpenLoopReport, StructureCheck};
use phstab::{DescriptorSystem, DesignPolicy, Error, FeedbackDesign, GeneratorRecipe, KPolicy, PhGenerator, ToleranceProfile};

const TOL_RANK_ENV: &str = "PHSTAB_TOL_RANK";

#[derive(Parser)]
#[command(name = "phstab", version)]
#[command(about = "Output-feedback stabilization of port-Hamiltonian descriptor systems")]
#[command(long_about = "Output-feedback stabilization of port-Hamiltonian descriptor systems

Systems are JSON documents with keys n, m, E, A, B, C (matrices as nested
arrays of [re, im] pairs) and an optional oracle {J, R, Q, G, P}.

EXIT CODES:
    0    success (analysis verdicts do not affect the exit code)
    2    unreadable or malformed input, I/O failure
    3    precondition, range, contract or structure failure
    4    numeric failure

ENVIRONMENT VARIABLES:
    PHSTAB_TOL_RANK    overrides the default relative rank tolerance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Q-free open-loop analysis: regularity, conditions (i)/(ii), order ranges
    Analyze {
        /// System file (omit with --batch)
        system: Option<PathBuf>,
        /// Relative rank tolerance; takes precedence over PHSTAB_TOL_RANK
        #[arg(long)]
        tol_rank: Option<f64>,
        /// Also sample N imaginary-axis points for condition (ii)
        #[arg(long)]
        grid: Option<usize>,
        /// Analyze every *.json file in a directory, ordered by file name
        #[arg(long, conflicts_with = "system")]
        batch: Option<PathBuf>,
        /// Embed wall-clock timings in the report
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unitary condensed form with block dimensions and residuals
    Condense {
        system: PathBuf,
        /// Add the eliminated form and the condition numbers of S and T
        #[arg(long)]
        eliminated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feedback design with an embedded closed-loop report
    Synthesize {
        system: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Target dynamical order (order and pd modes)
        #[arg(long)]
        r: Option<usize>,
        /// Seed for a random positive definite K instead of the identity
        #[arg(long)]
        k_seed: Option<u64>,
        /// One design per feasible order, written as a JSON array
        #[arg(long, conflicts_with = "r")]
        sweep: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded random port-Hamiltonian system with its oracle
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Planted condensed-form block sizes n1,n2,n3,n4,n5
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        rank_e: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a design against its system
    Verify {
        system: PathBuf,
        design: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Proportional feedback only
    P,
    /// Derivative feedback assigning the order, K = 0
    Order,
    /// Proportional-derivative stabilization with assigned order
    Pd,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
    attachment: Option<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) => 2,
            Error::Numeric(_) => 4,
            Error::ContractViolation(_)
            | Error::StructureViolation(_)
            | Error::PreconditionFailure(_)
            | Error::OrderOutOfRange { .. }
            | Error::EmptyOrderRange { .. } => 3,
        };
        let attachment = match &e {
            Error::PreconditionFailure(v) => to_json(v.as_ref()).ok(),
            _ => None,
        };
        Failure {
            code,
            message: e.to_string(),
            attachment,
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
        attachment: None,
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn tolerances(tol_rank: Option<f64>) -> CliResult<ToleranceProfile> {
    let mut tol = ToleranceProfile::default();
    if let Ok(raw) = std::env::var(TOL_RANK_ENV) {
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("{TOL_RANK_ENV}={raw:?} is not a number")))?;
        tol = tol.with_rank_rel(v);
    }
    if let Some(v) = tol_rank {
        tol = tol.with_rank_rel(v);
    }
    tol.validate()?;
    Ok(tol)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn analyze_file(path: &Path, tol: &ToleranceProfile, grid: Option<usize>, timing: bool) -> CliResult<OpenLoopReport> {
    let start = Instant::now();
    let sys = read_system_file(path)?.system()?;
    let mut report = analyze_open_loop(&sys, tol, grid)?;
    if timing {
        report.timing_ms = Some(elapsed_ms(start));
    }
    Ok(report)
}

#[derive(Serialize)]
struct BatchEntry {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<OpenLoopReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn analyze_batch(dir: &Path, tol: &ToleranceProfile, grid: Option<usize>, timing: bool) -> CliResult<(Vec<BatchEntry>, u8)> {
    let listing = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut worst = 0;
    let entries = files
        .iter()
        .map(|path| {
            let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            match analyze_file(path, tol, grid, timing) {
                Ok(report) => BatchEntry {
                    file,
                    report: Some(report),
                    error: None,
                },
                Err(f) => {
                    worst = worst.max(f.code);
                    BatchEntry {
                        file,
                        report: None,
                        error: Some(f.message),
                    }
                }
            }
        })
        .collect();
    Ok((entries, worst))
}

fn policy(k_seed: Option<u64>) -> DesignPolicy {
    DesignPolicy {
        k: match k_seed {
            Some(seed) => KPolicy::Random { seed, epsilon: 1e-2 },
            None => KPolicy::Identity,
        },
        ..DesignPolicy::default()
    }
}

fn design_file(
    sys: &DescriptorSystem,
    design: &FeedbackDesign,
    oracle: Option<&PhGenerator>,
    policy: DesignPolicy,
    tol: &ToleranceProfile,
) -> CliResult<DesignFile> {
    let report = verify_design(sys, design, oracle, tol)?;
    let structure = oracle.map(|_| StructureCheck {
        status: report.structure_preserved,
        witnesses: report.structure_witnesses.clone(),
    });
    Ok(DesignFile::new(design, policy, report, structure))
}

fn synthesize(path: &Path, mode: Mode, r: Option<usize>, k_seed: Option<u64>, sweep: bool, tol: &ToleranceProfile) -> CliResult<String> {
    let file = read_system_file(path)?;
    let sys = file.system()?;
    let oracle = file.generator()?;
    let pol = policy(k_seed);
    let run = |r: usize| -> CliResult<DesignFile> {
        let design = match mode {
            Mode::Order => synthesize_order_only(&sys, r, tol, &pol)?,
            Mode::Pd => synthesize_pd(&sys, r, tol, &pol)?,
            Mode::P => unreachable!("proportional mode has no order"),
        };
        design_file(&sys, &design, oracle.as_ref(), pol, tol)
    };
    match (mode, r, sweep) {
        (Mode::P, None, false) => {
            let design = synthesize_proportional(&sys, tol, &pol)?;
            Ok(to_json(&design_file(&sys, &design, oracle.as_ref(), pol, tol)?)?)
        }
        (Mode::P, _, _) => Err(usage("--r and --sweep apply to the order and pd modes only")),
        (_, Some(r), _) => Ok(to_json(&run(r)?)?),
        (_, None, true) => {
            let range = match mode {
                Mode::Order => order_range_derivative_only(&sys, tol)?,
                _ => order_range_pd_stabilizing(&sys, tol)?,
            };
            if range.empty {
                return Err(Error::EmptyOrderRange {
                    r_min: range.r_min,
                    r_max: range.r_max,
                }
                .into());
            }
            let designs = range.orders().into_iter().map(run).collect::<CliResult<Vec<_>>>()?;
            Ok(to_json(&designs)?)
        }
        (_, None, false) => Err(usage("the order and pd modes need --r or --sweep")),
    }
}

fn generate(n: usize, m: usize, dims: Option<Vec<usize>>, seed: u64, rank_e: Option<usize>, tol: &ToleranceProfile) -> CliResult<String> {
    let mut recipe = GeneratorRecipe::new(n, m, seed);
    if let Some(d) = dims {
        let d: [usize; 5] = d.try_into().map_err(|_| usage("--dims takes exactly five sizes"))?;
        recipe = recipe.dims(d);
    }
    if let Some(r) = rank_e {
        recipe.rank_e = r;
    }
    let g = random_ph_system(&recipe)?;
    let meta = Meta {
        seed: Some(seed),
        recipe: Some(recipe),
        description: None,
    };
    Ok(to_json(&SystemFile::from_generator(&g, tol, Some(meta))?)?)
}

/// Closed-loop report with its overall verdict spelled out.
#[derive(Serialize, Deserialize)]
struct Verification {
    all_true: bool,
    #[serde(flatten)]
    analysis: AnalysisReport,
}

fn verify(system: &Path, design: &Path, tol: &ToleranceProfile) -> CliResult<String> {
    let file = read_system_file(system)?;
    let sys = file.system()?;
    let oracle = file.generator()?;
    let doc: DesignFile = from_json(&read_text(design)?, &design.display().to_string())?;
    let d = doc.design(sys.n(), sys.m())?;
    let analysis = verify_design(&sys, &d, oracle.as_ref(), tol)?;
    let report = Verification {
        all_true: analysis.all_true(),
        analysis,
    };
    Ok(to_json(&ReportFile::new(report, tol))?)
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Analyze {
            system,
            tol_rank,
            grid,
            batch,
            timing,
            out,
        } => {
            let tol = tolerances(tol_rank)?;
            if let Some(dir) = batch {
                let (entries, worst) = analyze_batch(&dir, &tol, grid, timing)?;
                emit(&to_json(&ReportFile::new(entries, &tol))?, out.as_deref())?;
                return Ok(worst);
            }
            let path = system.ok_or_else(|| usage("analyze needs a system file or --batch"))?;
            let report = analyze_file(&path, &tol, grid, timing)?;
            emit(&to_json(&ReportFile::new(report, &tol))?, out.as_deref())?;
        }
        Command::Condense { system, eliminated, out } => {
            let tol = tolerances(None)?;
            let sys = read_system_file(&system)?.system()?;
            let form = condense_unitary(&sys, &tol)?;
            let el = if eliminated { Some(eliminate(&form, &tol)?) } else { None };
            emit(&to_json(&ReportFile::new(CondensedFile::new(&form, el.as_ref()), &tol))?, out.as_deref())?;
        }
        Command::Synthesize {
            system,
            mode,
            r,
            k_seed,
            sweep,
            out,
        } => {
            let tol = tolerances(None)?;
            emit(&synthesize(&system, mode, r, k_seed, sweep, &tol)?, out.as_deref())?;
        }
        Command::Generate {
            n,
            m,
            dims,
            seed,
            rank_e,
            out,
        } => {
            let tol = tolerances(None)?;
            emit(&generate(n, m, dims, seed, rank_e, &tol)?, out.as_deref())?;
        }
        Command::Verify { system, design, out } => {
            let tol = tolerances(None)?;
            emit(&verify(&system, &design, &tol)?, out.as_deref())?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            if let Some(a) = f.attachment {
                eprint!("{a}");
            }
            ExitCode::from(f.code)
        }
    }
}
