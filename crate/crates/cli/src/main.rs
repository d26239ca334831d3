//! `chist`: check histories against consistency models, run the replicated
//! store simulator, and query the model lattice.
//!
//! Exit codes: 0 all accepted, 1 some verdict rejected (or a lattice
//! violation), 2 some verdict inconclusive, 3 invalid input, 4 I/O error,
//! 5 checker error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use chist::checkers::check;
use chist::dimensions::{self, Lattice};
use chist::history::{parse_history, History};
use chist::sim::{flush_and_quiesce, run_sim, SimConfig, SimError};
use chist::{certify, CheckBudget, CheckError, ModelId, Outcome, Verdict};

const EXIT_REJECTED: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_CHECKER: u8 = 5;

#[derive(Parser)]
#[command(name = "chist", version, about = "Consistency-model checker and replicated store simulator")]
struct Cli {
    /// Output style; `machine` prints bare verdict lines.
    #[arg(long, global = true, value_enum, default_value_t = Format::Plain)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Plain,
    Machine,
}

#[derive(clap::Args, Clone, Copy)]
struct BudgetArgs {
    /// Largest history the search checkers attempt.
    #[arg(long, default_value_t = 12)]
    budget_txns: usize,
    /// States the search checkers may explore before giving up.
    #[arg(long, default_value_t = 1_000_000)]
    budget_states: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Check histories against a list of models.
    Check {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Comma-separated model ids, or `all`.
        #[arg(long, default_value = "all")]
        models: String,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Run the simulator on a config file and write the trace.
    Simulate {
        config: PathBuf,
        /// Trace destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Run fault-free anti-entropy and final reads after the run.
        #[arg(long)]
        flush: bool,
    },
    /// Check one history against one model and show the full evidence.
    Explain {
        path: PathBuf,
        model: String,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Relative strength of two models, with their classifications.
    Compare { a: String, b: String },
    /// Verify every lattice edge on a corpus of histories, or print the
    /// lattice when no corpus is given.
    Lattice {
        corpus: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
    },
}

/// A failure that ends the command with a diagnostic and exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

type Run = Result<(String, u8), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { paths, models, budget } => cmd_check(&paths, &models, budget, cli.format),
        Command::Simulate { config, out, seed_override, flush } => {
            cmd_simulate(&config, out.as_deref(), seed_override, flush)
        }
        Command::Explain { path, model, budget } => cmd_explain(&path, &model, budget, cli.format),
        Command::Compare { a, b } => cmd_compare(&a, &b),
        Command::Lattice { corpus, budget } => cmd_lattice(corpus.as_deref(), budget),
    };
    match result {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn budget(b: BudgetArgs) -> Result<CheckBudget, Failure> {
    CheckBudget::new(b.budget_txns, b.budget_states).map_err(|e| Failure::input(e.to_string()))
}

fn parse_models(list: &str) -> Result<Vec<ModelId>, Failure> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelId::history_models().collect());
    }
    let mut out = Vec::new();
    for tok in list.split(',').filter(|t| !t.trim().is_empty()) {
        let m: ModelId = tok.parse().map_err(|e: chist::model::UnknownModel| Failure::input(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Failure::input("no models given"));
    }
    Ok(out)
}

fn load_history(path: &Path) -> Result<History, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    parse_history(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Exit code for a batch of results: checker errors dominate, then
/// rejections, then inconclusive verdicts.
fn exit_code<'a>(results: impl IntoIterator<Item = &'a Result<Verdict, CheckError>>) -> u8 {
    let mut code = 0;
    for r in results {
        let c = match r {
            Err(_) => EXIT_CHECKER,
            Ok(v) if v.is_rejected() => EXIT_REJECTED,
            Ok(v) if v.is_inconclusive() => EXIT_INCONCLUSIVE,
            Ok(_) => 0,
        };
        code = match (code, c) {
            (EXIT_CHECKER, _) | (_, EXIT_CHECKER) => EXIT_CHECKER,
            (EXIT_REJECTED, _) | (_, EXIT_REJECTED) => EXIT_REJECTED,
            (a, b) => a.max(b),
        };
    }
    code
}

fn result_line(m: ModelId, r: &Result<Verdict, CheckError>) -> String {
    match r {
        Ok(v) => v.line(),
        Err(e) => format!("{m} error {}", e.kind_name()),
    }
}

fn detail(r: &Result<Verdict, CheckError>) -> Option<String> {
    match r {
        Ok(v) => match &v.outcome {
            Outcome::Accepted(_) => None,
            Outcome::Rejected(a) => Some(a.narrative.clone()),
            Outcome::Inconclusive(why) => Some(why.clone()),
        },
        Err(e) => Some(e.to_string()),
    }
}

fn cmd_check(paths: &[PathBuf], models: &str, b: BudgetArgs, format: Format) -> Run {
    let models = parse_models(models)?;
    let b = budget(b)?;
    let histories = paths.iter().map(|p| load_history(p)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, ModelId)> = (0..histories.len()).flat_map(|i| models.iter().map(move |&m| (i, m))).collect();
    let results: Vec<Result<Verdict, CheckError>> = jobs.par_iter().map(|&(i, m)| check(m, &histories[i], b)).collect();

    let mut out = String::new();
    for (i, path) in paths.iter().enumerate() {
        if paths.len() > 1 && format == Format::Plain {
            let _ = writeln!(out, "# {}", path.display());
        }
        for (j, &m) in models.iter().enumerate() {
            let r = &results[i * models.len() + j];
            let _ = writeln!(out, "{}", result_line(m, r));
            if format == Format::Plain {
                if let Some(d) = detail(r) {
                    let _ = writeln!(out, "  {d}");
                }
            }
        }
    }
    Ok((out, exit_code(&results)))
}

fn cmd_explain(path: &Path, model: &str, b: BudgetArgs, format: Format) -> Run {
    let m: ModelId = model.parse().map_err(|e: chist::model::UnknownModel| Failure::input(e.to_string()))?;
    let b = budget(b)?;
    let h = load_history(path)?;
    let r = check(m, &h, b);
    let mut out = String::new();
    match &r {
        Err(e) => {
            let _ = writeln!(out, "{}", result_line(m, &r));
            if format == Format::Plain {
                let _ = writeln!(out, "  {e}");
            }
        }
        Ok(v) => {
            out.push_str(&v.render());
            if format == Format::Plain {
                if let Ok(t) = dimensions::classify(m) {
                    let _ = writeln!(out, "model {m}: {t}");
                }
                let _ = writeln!(out, "transactions {} states explored {}", h.txns().len(), v.stats.explored);
                if let Some(a) = v.anomaly() {
                    let ids: Vec<String> = a.participants.iter().map(|t| t.to_string()).collect();
                    let _ = writeln!(out, "anomaly {} participants {}", a.kind, ids.join(","));
                    if !a.keys.is_empty() {
                        let _ = writeln!(out, "keys {}", a.keys.join(","));
                    }
                    let _ = writeln!(out, "{}", a.narrative);
                }
                if let Outcome::Inconclusive(why) = &v.outcome {
                    let _ = writeln!(out, "{why}");
                }
                if let Some(cert) = v.certificate() {
                    let _ = writeln!(out, "certificate {cert:?}");
                }
                match certify::validate(&h, v) {
                    Ok(()) => out.push_str("evidence replays: ok\n"),
                    Err(e) => {
                        let _ = writeln!(out, "evidence replays: FAILED {e}");
                    }
                }
            }
        }
    }
    Ok((out, exit_code([&r])))
}

fn cmd_compare(a: &str, b: &str) -> Run {
    let parse = |s: &str| s.parse::<ModelId>().map_err(|e| Failure::input(e.to_string()));
    let (a, b) = (parse(a)?, parse(b)?);
    let input = |e: dimensions::DimensionError| Failure::input(e.to_string());
    let cmp = dimensions::compare(a, b).map_err(input)?;
    let mut out = format!("{a} {cmp} {b}\n");
    for m in [a, b] {
        let _ = writeln!(out, "{m} {}", dimensions::classify(m).map_err(input)?);
    }
    Ok((out, 0))
}

fn cmd_simulate(config: &Path, out: Option<&Path>, seed: Option<u64>, flush: bool) -> Run {
    let text = fs::read_to_string(config).map_err(|e| Failure::io(config, e))?;
    let sim_failure = |e: SimError| match e {
        SimError::InvalidConfig { .. } => Failure::input(format!("{}: {e}", config.display())),
        other => Failure { code: EXIT_CHECKER, message: other.to_string() },
    };
    let mut cfg = SimConfig::parse(&text).map_err(sim_failure)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut trace = run_sim(&cfg).map_err(sim_failure)?;
    if flush {
        trace = flush_and_quiesce(&trace).map_err(sim_failure)?;
    }
    let h = &trace.history;
    let updates = h.txns().iter().filter(|t| t.ops.iter().any(|o| o.kind.is_update())).count();
    let summary = format!(
        "seed {} protocol {} txns {} updates {} pending {} replica_changes {} end_tick {}\n",
        cfg.seed,
        cfg.protocol,
        h.txns().len(),
        updates,
        trace.pending.len(),
        trace.changes.len(),
        trace.end_tick
    );
    match out {
        Some(p) => {
            fs::write(p, trace.to_text()).map_err(|e| Failure::io(p, e))?;
            Ok((summary, 0))
        }
        None => {
            eprint!("{summary}");
            Ok((trace.to_text(), 0))
        }
    }
}

fn cmd_lattice(corpus: Option<&Path>, b: BudgetArgs) -> Run {
    let lattice = Lattice::shipped();
    let Some(dir) = corpus else {
        let mut out = String::new();
        for m in lattice.models() {
            let _ = writeln!(out, "model {m} {}", lattice.classify(m).expect("listed model"));
        }
        for e in lattice.edges() {
            let _ = writeln!(out, "edge {} {}", e.stronger, e.weaker);
        }
        return Ok((out, 0));
    };
    let b = budget(b)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Failure::io(dir, e)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "chist"))
        .collect();
    files.sort();
    let histories = files.iter().map(|p| load_history(p)).collect::<Result<Vec<_>, _>>()?;

    let models: Vec<ModelId> = ModelId::history_models().collect();
    let verdicts: Vec<Vec<Result<Verdict, CheckError>>> =
        histories.par_iter().map(|h| models.iter().map(|&m| check(m, h, b)).collect()).collect();

    let mut out = String::new();
    let (mut checked, mut skipped, mut violations) = (0usize, 0usize, 0usize);
    for (f, vs) in files.iter().zip(&verdicts) {
        let get = |m: ModelId| vs[models.iter().position(|&x| x == m).expect("history model")].as_ref().ok();
        for e in lattice.edges() {
            match (get(e.stronger), get(e.weaker)) {
                (Some(s), Some(w)) if !s.is_inconclusive() && !w.is_inconclusive() => {
                    checked += 1;
                    if s.is_accepted() && w.is_rejected() {
                        violations += 1;
                        let _ =
                            writeln!(out, "violation {} -> {} in {}: {}", e.stronger, e.weaker, f.display(), w.line());
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    let _ = writeln!(
        out,
        "histories {} edges {} checked {checked} skipped {skipped} violations {violations}",
        files.len(),
        lattice.edges().count()
    );
    Ok((out, if violations == 0 { 0 } else { EXIT_REJECTED }))
}
