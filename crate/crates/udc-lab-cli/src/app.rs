//! Subcommand implementations. Exit codes: 0 all PASS, 1 any FAIL, 2 input
//! or precondition error, 3 internal invariant breach, 4 INCONCLUSIVE with
//! no FAIL.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use udc_lab::check::{
    check_account_property, check_conditions, check_nudc, check_strong_eq_perfect, check_udc,
    Condition, Status, Verdict,
};
use udc_lab::fdetect::{check_generalized, check_property, FdProperty, SuspicionSource};
use udc_lab::model::{validate_run, Provenance, SystemOfRuns};
use udc_lab::sim::{generate_system, parse_config, simulate, FamilyConfig};
use udc_lab::trace::{read_system, read_trace, write_system, write_trace};
use udc_lab::{ActionId, ProcessId};

#[derive(Parser)]
#[command(
    name = "udc-lab",
    about = "Simulate, record, check and transform uniform-distributed-coordination runs",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and record its trace(s)
    Run(RunArgs),
    /// Check a recorded trace or system against a specification
    Check(CheckArgs),
    /// Extract a failure detector from an exhaustive system (f or f')
    Extract(ExtractArgs),
    /// Convert detector streams (weak-to-strong, impermanent-to-strong)
    Convert(ConvertArgs),
    /// Exhaustively enumerate a generating context into a system directory
    Enumerate(EnumerateArgs),
    /// Run the acceptance sweep
    Sweep,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (flat key = value)
    #[arg(long)]
    config: PathBuf,
    /// Output trace file (or directory when the config yields several runs)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// A trace file or a system directory
    #[arg(long)]
    input: PathBuf,
    /// One of: udc, nudc, fd:<property>, generalized, conditions, account,
    /// strong-eq-perfect
    #[arg(long)]
    spec: String,
    /// Action for udc/nudc/account checks, e.g. a0.0
    #[arg(long)]
    action: Option<String>,
    /// Failure bound for generalized / A5 checks
    #[arg(long)]
    t: Option<u32>,
    /// Which report stream to read: original or primed
    #[arg(long, default_value = "original")]
    source: String,
    /// A raw formula (prefix syntax) for --spec formula
    #[arg(long)]
    formula: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    /// System directory with provenance recorded in the manifest
    #[arg(long)]
    system: PathBuf,
    /// f (perfect extraction) or fprime (generalized extraction)
    #[arg(long)]
    mode: String,
    /// Failure bound for the generalized extraction's usefulness check
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// System directory to convert
    #[arg(long)]
    input: PathBuf,
    /// weak-to-strong or impermanent-to-strong
    #[arg(long)]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &[String]) -> i32 {
    udc_lab::par::init_thread_cap();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Convert(a) => cmd_convert(&a),
        Command::Enumerate(a) => cmd_enumerate(&a),
        Command::Sweep => cmd_sweep(),
    }
}

fn load_family(path: &Path) -> Result<FamilyConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        2
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("error: {e}");
        2
    })
}

fn cmd_run(a: &RunArgs) -> i32 {
    let family = match load_family(&a.config) {
        Ok(f) => f,
        Err(code) => return code,
    };
    if family.exhaustive || family.sample_runs > 1 || family.closure_a5 {
        let sys = match generate_system(&family) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
        for run in &sys.runs {
            if !validate_run(run).is_empty() {
                eprintln!("internal error: generated run violates the run model");
                return 3;
            }
        }
        if let Err(e) = write_system(&a.out, &family, &sys, None) {
            eprintln!("error: {e}");
            return 2;
        }
        println!("wrote {} runs to {}", sys.runs.len(), a.out.display());
        return 0;
    }
    let run = match simulate(&family.base) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let violations = validate_run(&run);
    if !violations.is_empty() {
        eprintln!("internal error: simulated run violates {:?}", violations[0].rule);
        return 3;
    }
    if let Err(e) = std::fs::write(&a.out, write_trace(&run)) {
        eprintln!("error: cannot write {}: {e}", a.out.display());
        return 2;
    }
    println!("wrote trace to {}", a.out.display());
    0
}

fn load_system(path: &Path) -> Result<SystemOfRuns, i32> {
    if path.is_dir() {
        read_system(path).map(|(_, sys)| sys).map_err(|e| {
            eprintln!("error: {e}");
            2
        })
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| {
            eprintln!("error: cannot read {}: {e}", path.display());
            2
        })?;
        let run = read_trace(&text).map_err(|e| {
            eprintln!("error: {e}");
            2
        })?;
        let n = run.n();
        Ok(SystemOfRuns::new(n, vec![run], Provenance::Sampled))
    }
}

fn parse_action_arg(s: Option<&String>) -> Result<ActionId, i32> {
    let s = s.ok_or_else(|| {
        eprintln!("error: this check needs --action (e.g. --action a0.0)");
        2
    })?;
    udc_lab::formula::parse_action(s).map_err(|e| {
        eprintln!("error: {e}");
        2
    })
}

fn exit_code(verdicts: &[(String, Verdict)]) -> i32 {
    for (name, v) in verdicts {
        print!("{}", v.render(name));
    }
    if verdicts.iter().any(|(_, v)| v.status == Status::Fail) {
        1
    } else if verdicts.iter().any(|(_, v)| v.status == Status::Inconclusive) {
        4
    } else {
        0
    }
}

fn cmd_check(a: &CheckArgs) -> i32 {
    let sys = match load_system(&a.input) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let source = match a.source.as_str() {
        "original" => SuspicionSource::Original,
        "primed" => SuspicionSource::Primed,
        other => {
            eprintln!("error: unknown source {other:?}");
            return 2;
        }
    };
    let spec = a.spec.as_str();
    if spec == "udc" || spec == "nudc" {
        let alpha = match parse_action_arg(a.action.as_ref()) {
            Ok(x) => x,
            Err(code) => return code,
        };
        let (v1, v2, v3) =
            if spec == "udc" { check_udc(&sys, alpha) } else { check_nudc(&sys, alpha) };
        let dc2 = if spec == "udc" { "DC2" } else { "DC2'" };
        return exit_code(&[
            ("DC1".into(), v1),
            (dc2.into(), v2),
            ("DC3".into(), v3),
        ]);
    }
    if let Some(prop) = spec.strip_prefix("fd:") {
        let property = match prop {
            "strong-accuracy" => FdProperty::StrongAccuracy,
            "weak-accuracy" => FdProperty::WeakAccuracy,
            "strong-completeness" => FdProperty::StrongCompleteness,
            "weak-completeness" => FdProperty::WeakCompleteness,
            "impermanent-strong-completeness" => FdProperty::ImpermanentStrongCompleteness,
            "impermanent-weak-completeness" => FdProperty::ImpermanentWeakCompleteness,
            other => {
                eprintln!("error: unknown detector property {other:?}");
                return 2;
            }
        };
        let v = check_property(&sys, property, source);
        return exit_code(&[(format!("{property}"), v)]);
    }
    match spec {
        "formula" => {
            let Some(text) = a.formula.as_ref() else {
                eprintln!("error: --spec formula needs --formula \"(...)\"");
                return 2;
            };
            let f = match udc_lab::formula::parse_formula(text) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            let v = udc_lab::check::validity_verdict(&sys, &f, &f.to_string());
            exit_code(&[(f.to_string(), v)])
        }
        "generalized" => {
            let t = a.t.unwrap_or(sys.n as u32);
            let v = check_generalized(&sys, t);
            exit_code(&[(format!("Generalized(t={t})"), v)])
        }
        "conditions" => {
            let t = a.t.unwrap_or(sys.n as u32);
            let which =
                [Condition::A1, Condition::A2, Condition::A3, Condition::A5(t)];
            match check_conditions(&sys, &which) {
                Ok(results) => exit_code(
                    &results
                        .into_iter()
                        .map(|(c, v)| (c.to_string(), v))
                        .collect::<Vec<_>>(),
                ),
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            }
        }
        "account" => {
            let alpha = match parse_action_arg(a.action.as_ref()) {
                Ok(x) => x,
                Err(code) => return code,
            };
            let mut verdicts = Vec::new();
            for p in (0..sys.n).map(ProcessId) {
                match check_account_property(&sys, p, alpha.owner, alpha) {
                    Ok(outcome) => {
                        if !outcome.preconditions_met {
                            for note in &outcome.notes {
                                println!("note: {note} (preconditions unmet)");
                            }
                        }
                        verdicts.push((format!("Account({p})"), outcome.verdict));
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                }
            }
            exit_code(&verdicts)
        }
        "strong-eq-perfect" => match check_strong_eq_perfect(&sys) {
            Ok(v) => exit_code(&[("StrongEqPerfect".into(), v)]),
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
        other => {
            eprintln!("error: unknown spec {other:?}");
            2
        }
    }
}

fn cmd_extract(a: &ExtractArgs) -> i32 {
    let (meta, sys) = match read_system(&a.system) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if meta.provenance != Provenance::Exhaustive {
        eprintln!("error: extraction needs a system with exhaustive provenance");
        return 2;
    }
    match a.mode.as_str() {
        "f" => {
            let out = match udc_lab::transform::f_transform(&sys) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            if let Err(e) = write_system(&a.out, &meta.family, &out, Some("f")) {
                eprintln!("error: {e}");
                return 2;
            }
            let acc = check_property(&out, FdProperty::StrongAccuracy, SuspicionSource::Primed);
            let comp =
                check_property(&out, FdProperty::StrongCompleteness, SuspicionSource::Primed);
            exit_code(&[
                ("StrongAccuracy".into(), acc),
                ("StrongCompleteness".into(), comp),
            ])
        }
        "fprime" => {
            let requested = a.t.unwrap_or(sys.n as u32);
            let effective = requested.min(sys.n.saturating_sub(1) as u32);
            if requested > effective {
                println!(
                    "note: t={requested} clamped to min(t, n-1) = {effective} in the usefulness inequality"
                );
            }
            let out = match udc_lab::transform::f_prime_transform(&sys, requested) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            if let Err(e) = write_system(&a.out, &meta.family, &out, Some("fprime")) {
                eprintln!("error: {e}");
                return 2;
            }
            let v = check_generalized(&out, requested);
            exit_code(&[(format!("Generalized(t={requested})"), v)])
        }
        other => {
            eprintln!("error: unknown mode {other:?} (expected f or fprime)");
            2
        }
    }
}

fn cmd_convert(a: &ConvertArgs) -> i32 {
    let (meta, sys) = match read_system(&a.input) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let (out, label) = match a.mode.as_str() {
        "weak-to-strong" => match udc_lab::transform::convert_weak_to_strong(&sys) {
            Ok(s) => (s, "weak-to-strong"),
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        "impermanent-to-strong" => (
            udc_lab::transform::convert_impermanent_to_strong_system(&sys),
            "impermanent-to-strong",
        ),
        other => {
            eprintln!("error: unknown mode {other:?}");
            return 2;
        }
    };
    if let Err(e) = write_system(&a.out, &meta.family, &out, Some(label)) {
        eprintln!("error: {e}");
        return 2;
    }
    let v = check_property(&out, FdProperty::StrongCompleteness, SuspicionSource::Primed);
    exit_code(&[("StrongCompleteness".into(), v)])
}

fn cmd_enumerate(a: &EnumerateArgs) -> i32 {
    let family = match load_family(&a.config) {
        Ok(f) => f,
        Err(code) => return code,
    };
    if !family.exhaustive {
        eprintln!("error: enumerate needs exhaustive = true in the config");
        return 2;
    }
    let sys = match generate_system(&family) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    for run in &sys.runs {
        if !validate_run(run).is_empty() {
            eprintln!("internal error: generated run violates the run model");
            return 3;
        }
    }
    if let Err(e) = write_system(&a.out, &family, &sys, None) {
        eprintln!("error: {e}");
        return 2;
    }
    println!(
        "enumerated {} runs ({} points) into {}",
        sys.runs.len(),
        sys.point_count(),
        a.out.display()
    );
    let mut which = Vec::new();
    if family.closure_a1 {
        which.push(Condition::A1);
    }
    if family.closure_a2 {
        which.push(Condition::A2);
    }
    if family.closure_a5 {
        which.push(Condition::A5(family.base.t));
    }
    if !which.is_empty() {
        match check_conditions(&sys, &which) {
            Ok(results) => {
                for (c, v) in results {
                    print!("{}", v.render(&c.to_string()));
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    0
}

fn cmd_sweep() -> i32 {
    let results = udc_lab::sweep::run_all();
    let mut ok = true;
    for r in &results {
        println!("{}", r.line());
        if !r.pass {
            ok = false;
            for d in &r.details {
                if !d.is_empty() {
                    println!("  {d}");
                }
            }
        }
    }
    if ok {
        0
    } else {
        1
    }
}
