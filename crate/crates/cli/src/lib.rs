//! Command workflows behind the `hyperplan` binary: verify, encode,
//! emit-pddl, and check.
//!
//! Each command is a pure function from a [`RunConfig`] to an [`Outcome`]
//! holding an exit code, a human-readable report, an equivalent JSON
//! report, and named artifacts. The process wrapper prints one report and
//! writes everything to the output directory when one is configured. Given
//! identical inputs and configuration, reports and artifacts are
//! byte-identical across runs.
//!
//! Verification verdicts are deliberately asymmetric: a validated plan
//! prints `VERIFIED`, but the absence of a plan only prints an
//! inconclusive `NO PLAN` line, because the reduction to planning is sound
//! yet incomplete — a formula can hold without any plan existing. Claims
//! of falsity are only available by verifying the dualized formula via
//! `--negate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use hyperplan_core::automata::DEFAULT_MAX_STATES;
use hyperplan_core::encoding::{
    encode, factor, EncodeError, EncodeLimits, QdecPomdp, Variant,
};
use hyperplan_core::logic::{classify_body, BodyClass, Formula, PrefixClass};
use hyperplan_core::pddl::{emit_pddl, ingest_policy, Manifest, PddlError};
use hyperplan_core::solver::{
    check_execution, solve, CheckError, CheckMode, Policy, SolveLimits, SolverChoice, Verdict,
};
use hyperplan_core::system::TransitionSystem;
use hyperplan_core::witness::{
    validate_witness, SkolemWitness, ValidateLimits, Validation, WitnessError,
};

/// First line of a successful verification.
pub const VERIFIED_MESSAGE: &str = "VERIFIED";
/// First line when no plan exists. Plan absence never refutes the formula.
pub const NO_PLAN_MESSAGE: &str = "NO PLAN (inconclusive: encoding is sound but incomplete)";

/// Exit codes of every command.
pub mod exit_code {
    /// Verified / validated / artifacts written.
    pub const OK: i32 = 0;
    /// No plan, or a plan that validation could not confirm.
    pub const INCONCLUSIVE: i32 = 1;
    /// The instance falls outside what the tool can solve or emit.
    pub const UNSUPPORTED: i32 = 2;
    /// Unreadable or unparseable input.
    pub const PARSE: i32 = 10;
    /// The body classifies as neither reachability nor safety.
    pub const CLASSIFICATION: i32 = 11;
    /// A configured resource cap was exceeded, or artifacts could not be
    /// written.
    pub const RESOURCE: i32 = 12;
    /// Internal inconsistency between solver and validator; never expected.
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Encode,
    EmitPddl,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Encode => "encode",
            Command::EmitPddl => "emit-pddl",
            Command::Check => "check",
        }
    }
}

/// Everything a command invocation depends on.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub ts_path: PathBuf,
    /// Path to a formula file, or the formula text itself.
    pub formula: String,
    /// Dualize every quantifier and negate the body before anything else.
    pub negate: bool,
    /// Depth bound for witness validation.
    pub bound: usize,
    pub solver: SolverChoice,
    /// When set, fail unless the encoding variant matches.
    pub expect_variant: Option<Variant>,
    /// Directory receiving artifacts plus `report.txt` / `report.json`.
    pub out_dir: Option<PathBuf>,
    /// Controller JSON to check (check command only).
    pub policy_path: Option<PathBuf>,
    /// Manifest translating PDDL action names in the controller.
    pub manifest_path: Option<PathBuf>,
    pub max_automaton_states: usize,
    pub max_explicit_states: usize,
    pub max_beliefs: usize,
    pub max_configs: usize,
}

impl RunConfig {
    pub fn new(
        command: Command,
        ts_path: impl Into<PathBuf>,
        formula: impl Into<String>,
    ) -> RunConfig {
        RunConfig {
            command,
            ts_path: ts_path.into(),
            formula: formula.into(),
            negate: false,
            bound: 10,
            solver: SolverChoice::Auto,
            expect_variant: None,
            out_dir: None,
            policy_path: None,
            manifest_path: None,
            max_automaton_states: DEFAULT_MAX_STATES,
            max_explicit_states: 1_000_000,
            max_beliefs: 1_000_000,
            max_configs: 1_000_000,
        }
    }
}

/// Result of one command: exit code, both report renderings, and the
/// artifacts the command produced (file name, content).
pub struct Outcome {
    pub code: i32,
    pub human: String,
    pub json: Value,
    pub artifacts: Vec<(String, String)>,
}

struct Failure {
    code: i32,
    message: String,
}

type Run<T> = Result<T, Failure>;

/// Runs one command and, when an output directory is configured, writes
/// its artifacts plus `report.txt` and `report.json`.
pub fn run(cfg: &RunConfig) -> Outcome {
    let mut outcome = match run_command(cfg) {
        Ok(o) => o,
        Err(f) => failure_outcome(cfg, f),
    };
    outcome.json["exit_code"] = json!(outcome.code);
    if let Some(dir) = &cfg.out_dir {
        if let Err(f) = write_outputs(dir, &outcome) {
            return failure_outcome(cfg, f);
        }
    }
    outcome
}

fn run_command(cfg: &RunConfig) -> Run<Outcome> {
    match cfg.command {
        Command::Verify => cmd_verify(cfg),
        Command::Encode => cmd_encode(cfg),
        Command::EmitPddl => cmd_emit_pddl(cfg),
        Command::Check => cmd_check(cfg),
    }
}

fn failure_outcome(cfg: &RunConfig, f: Failure) -> Outcome {
    let prefix = match f.code {
        exit_code::UNSUPPORTED => "UNSUPPORTED",
        exit_code::PARSE => "ERROR (parse)",
        exit_code::CLASSIFICATION => "ERROR (classification)",
        exit_code::RESOURCE => "ERROR (resource)",
        exit_code::INTERNAL => "INTERNAL ERROR",
        _ => "ERROR",
    };
    let mut json = json!({
        "format": "report",
        "version": 1,
        "command": cfg.command.name(),
        "verdict": if f.code == exit_code::UNSUPPORTED { "unsupported" } else { "error" },
        "message": f.message,
    });
    json["exit_code"] = json!(f.code);
    Outcome {
        code: f.code,
        human: format!("{prefix}: {}\n", f.message),
        json,
        artifacts: Vec::new(),
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<(), Failure> {
    let io = |e: std::io::Error, what: &str| Failure {
        code: exit_code::RESOURCE,
        message: format!("cannot write {what}: {e}"),
    };
    fs::create_dir_all(dir).map_err(|e| io(e, "output directory"))?;
    for (name, content) in &outcome.artifacts {
        fs::write(dir.join(name), content).map_err(|e| io(e, name))?;
    }
    fs::write(dir.join("report.txt"), &outcome.human).map_err(|e| io(e, "report.txt"))?;
    let pretty = serde_json::to_string_pretty(&outcome.json).expect("report serializes") + "\n";
    fs::write(dir.join("report.json"), pretty).map_err(|e| io(e, "report.json"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared input loading
// ---------------------------------------------------------------------------

struct Instance {
    ts: TransitionSystem,
    formula: Formula,
    qdec: QdecPomdp,
}

fn read_file(path: &Path, what: &str) -> Run<String> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: exit_code::PARSE,
        message: format!("cannot read {what} {}: {e}", path.display()),
    })
}

fn build_instance(cfg: &RunConfig) -> Run<Instance> {
    let ts_text = read_file(&cfg.ts_path, "system file")?;
    let ts = TransitionSystem::parse(&ts_text).map_err(|e| Failure {
        code: exit_code::PARSE,
        message: format!("system file {}: {e}", cfg.ts_path.display()),
    })?;
    let formula_text = if Path::new(&cfg.formula).is_file() {
        read_file(Path::new(&cfg.formula), "formula file")?
    } else {
        cfg.formula.clone()
    };
    let formula = Formula::parse(&formula_text).map_err(|e| Failure {
        code: exit_code::PARSE,
        message: format!("formula: {e}"),
    })?;
    let formula = if cfg.negate { formula.negated() } else { formula };
    let limits = EncodeLimits {
        max_automaton_states: cfg.max_automaton_states,
        max_explicit_states: cfg.max_explicit_states,
    };
    let qdec = encode(&ts, &formula, &limits).map_err(map_encode_error)?;
    if let Some(expect) = cfg.expect_variant {
        if qdec.variant() != expect {
            return Err(Failure {
                code: exit_code::CLASSIFICATION,
                message: format!(
                    "encoding variant is {} but {} was required",
                    variant_name(qdec.variant()),
                    variant_name(expect)
                ),
            });
        }
    }
    Ok(Instance { ts, formula, qdec })
}

fn map_encode_error(e: EncodeError) -> Failure {
    use hyperplan_core::automata::AutomatonError;
    let code = match &e {
        EncodeError::Formula(_) => exit_code::PARSE,
        EncodeError::BodyNotSupported => exit_code::CLASSIFICATION,
        EncodeError::Automaton(AutomatonError::WrongClass { .. }) => exit_code::CLASSIFICATION,
        EncodeError::Automaton(_) => exit_code::RESOURCE,
        EncodeError::TooManyStates { .. } | EncodeError::TooManyBranches { .. } => {
            exit_code::RESOURCE
        }
    };
    Failure { code, message: e.to_string() }
}

fn map_witness_error(e: WitnessError) -> Failure {
    let code = match &e {
        WitnessError::BadPolicy(_) => exit_code::PARSE,
        WitnessError::Unsupported => exit_code::UNSUPPORTED,
        WitnessError::Budget { .. } => exit_code::RESOURCE,
        WitnessError::Internal(_) => exit_code::INTERNAL,
    };
    Failure { code, message: e.to_string() }
}

fn map_pddl_error(e: PddlError) -> Failure {
    let code = match &e {
        PddlError::UnsupportedClass(_) | PddlError::Unsupported(_) => exit_code::UNSUPPORTED,
        PddlError::Parse(_) | PddlError::ManifestMismatch(_) | PddlError::BadController(_) => {
            exit_code::PARSE
        }
    };
    Failure { code, message: e.to_string() }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Reach => "reach",
        Variant::Safe => "safe",
    }
}

fn class_names(inst: &Instance) -> (&'static str, &'static str) {
    let prefix = match inst.qdec.prefix_class() {
        PrefixClass::ExistsOnly => "existential",
        PrefixClass::ForallExists => "forall-exists",
        PrefixClass::ForallExistsForall => "forall-exists-forall",
        PrefixClass::General => "general",
    };
    let body = match classify_body(inst.formula.body()) {
        BodyClass::Reachability => "reachability",
        BodyClass::Safety => "safety",
        BodyClass::Neither => "unclassified",
    };
    (prefix, body)
}

fn describe_instance(out: &mut String, cfg: &RunConfig, inst: &Instance) {
    let _ = writeln!(
        out,
        "system: {} ({} locations, {} directions, {} atoms)",
        cfg.ts_path.display(),
        inst.ts.num_locations(),
        inst.ts.num_directions(),
        inst.ts.num_atoms()
    );
    let _ = writeln!(out, "formula: {}", inst.formula);
    if cfg.negate {
        let _ = writeln!(out, "  (dualized from the input via --negate)");
    }
    let (prefix, body) = class_names(inst);
    let _ = writeln!(
        out,
        "class: {prefix} prefix, {body} body, {} encoding",
        variant_name(inst.qdec.variant())
    );
}

fn base_json(cfg: &RunConfig, inst: &Instance) -> Value {
    let (prefix, body) = class_names(inst);
    json!({
        "format": "report",
        "version": 1,
        "command": cfg.command.name(),
        "system": cfg.ts_path.display().to_string(),
        "formula": inst.formula.to_string(),
        "negated": cfg.negate,
        "prefix_class": prefix,
        "body_class": body,
        "variant": variant_name(inst.qdec.variant()),
    })
}

fn dirs_json(ts: &TransitionSystem, steps: &[Vec<hyperplan_core::system::DirId>]) -> Value {
    json!(steps
        .iter()
        .map(|dirs| dirs.iter().map(|&d| ts.dir_name(d)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(cfg: &RunConfig) -> Run<Outcome> {
    let inst = build_instance(cfg)?;
    let verdict = solve(
        &inst.qdec,
        cfg.solver,
        &SolveLimits { max_beliefs: cfg.max_beliefs },
    )
    .map_err(|e| Failure { code: exit_code::RESOURCE, message: e.to_string() })?;

    let mut report = base_json(cfg, &inst);
    let mut human = String::new();
    match verdict {
        Verdict::Unsupported { reason } => {
            let _ = writeln!(human, "UNSUPPORTED: {reason}");
            describe_instance(&mut human, cfg, &inst);
            report["verdict"] = json!("unsupported");
            report["message"] = json!(reason);
            Ok(Outcome {
                code: exit_code::UNSUPPORTED,
                human,
                json: report,
                artifacts: Vec::new(),
            })
        }
        Verdict::NoPlan => {
            let _ = writeln!(human, "{NO_PLAN_MESSAGE}");
            describe_instance(&mut human, cfg, &inst);
            let _ = writeln!(
                human,
                "note: plan absence never establishes that the property fails; \
                 try `--negate` to search for a counterexample strategy"
            );
            report["verdict"] = json!("no-plan");
            report["message"] = json!(NO_PLAN_MESSAGE);
            Ok(Outcome {
                code: exit_code::INCONCLUSIVE,
                human,
                json: report,
                artifacts: Vec::new(),
            })
        }
        Verdict::PlanFound { policy, kind, sequence } => {
            let sequence_json = sequence.as_ref().map(|steps| {
                steps
                    .iter()
                    .map(|&a| {
                        inst.qdec.actions()[a]
                            .iter()
                            .map(|&d| inst.ts.dir_name(d))
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            });
            let witness = SkolemWitness::new(&inst.ts, &inst.formula, policy)
                .map_err(map_witness_error)?;
            let horizon = witness.policy().horizon;
            let mut bound = cfg.bound;
            if classify_body(inst.formula.body()) == BodyClass::Reachability {
                if let Some(h) = horizon {
                    // Reach claims are judged at the plan's own horizon.
                    bound = bound.max(h);
                }
            }
            let validation = validate_witness(
                &witness,
                bound,
                &ValidateLimits {
                    max_configs: cfg.max_configs,
                    max_automaton_states: cfg.max_automaton_states,
                },
            )
            .map_err(map_witness_error)?;

            let plan_json = json!({
                "kind": kind.as_str(),
                "nodes": witness.policy().nodes.len(),
                "horizon": horizon,
                "sequence": sequence_json,
            });
            report["plan"] = plan_json;
            let policy_doc =
                serde_json::to_string_pretty(&witness.policy().to_json(&inst.ts)).unwrap() + "\n";

            match validation {
                Validation::Validated { steps } => {
                    let _ = writeln!(human, "{VERIFIED_MESSAGE}");
                    describe_instance(&mut human, cfg, &inst);
                    let _ = writeln!(
                        human,
                        "plan: {} controller with {} node(s){}",
                        kind.as_str(),
                        witness.policy().nodes.len(),
                        horizon.map_or(String::new(), |h| format!(", horizon {h}"))
                    );
                    let _ = writeln!(
                        human,
                        "validation: confirmed against the system for every universal \
                         choice to depth {steps}"
                    );
                    report["verdict"] = json!("verified");
                    report["validation"] = json!({ "result": "validated", "steps": steps });
                    Ok(Outcome {
                        code: exit_code::OK,
                        human,
                        json: report,
                        artifacts: vec![("policy.json".into(), policy_doc)],
                    })
                }
                Validation::Violated { universal_dirs, verdict, step } => {
                    let _ = writeln!(
                        human,
                        "PLAN FOUND (unconfirmed: witness validation refuted the plan's \
                         claim at step {step})"
                    );
                    describe_instance(&mut human, cfg, &inst);
                    report["verdict"] = json!("plan-unconfirmed");
                    report["validation"] = json!({
                        "result": "violated",
                        "step": step,
                        "outcome": format!("{verdict:?}"),
                        "universal_dirs": dirs_json(&inst.ts, &universal_dirs),
                    });
                    Ok(Outcome {
                        code: exit_code::INCONCLUSIVE,
                        human,
                        json: report,
                        artifacts: vec![("policy.json".into(), policy_doc)],
                    })
                }
                Validation::Indeterminate { bound, needed } => {
                    let _ = writeln!(
                        human,
                        "PLAN FOUND (unconfirmed: validation bound {bound} is below \
                         the plan horizon {needed})"
                    );
                    describe_instance(&mut human, cfg, &inst);
                    report["verdict"] = json!("plan-unconfirmed");
                    report["validation"] =
                        json!({ "result": "indeterminate", "bound": bound, "needed": needed });
                    Ok(Outcome {
                        code: exit_code::INCONCLUSIVE,
                        human,
                        json: report,
                        artifacts: vec![("policy.json".into(), policy_doc)],
                    })
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

fn cmd_encode(cfg: &RunConfig) -> Run<Outcome> {
    let inst = build_instance(cfg)?;
    let fenc = factor(&inst.qdec);
    let explicit = serde_json::to_string_pretty(&inst.qdec.to_json()).unwrap() + "\n";
    let factored = serde_json::to_string_pretty(&fenc.to_json(&inst.qdec)).unwrap() + "\n";

    let defn = inst.qdec.definitional_states();
    let mut human = String::from("ENCODED\n");
    describe_instance(&mut human, cfg, &inst);
    let _ = writeln!(
        human,
        "explicit: {} reachable state(s) of {} definitional, {} action(s), {} goal(s)",
        inst.qdec.num_states(),
        defn,
        inst.qdec.num_actions(),
        inst.qdec.goals().len()
    );
    let _ = writeln!(
        human,
        "factored: {} fluent(s), {} action(s)",
        fenc.fluents.len(),
        fenc.actions.len()
    );

    let mut report = base_json(cfg, &inst);
    report["verdict"] = json!("encoded");
    report["explicit"] = json!({
        "states": inst.qdec.num_states(),
        "definitional_states": if defn <= u64::MAX as u128 {
            json!(defn as u64)
        } else {
            json!(defn.to_string())
        },
        "actions": inst.qdec.num_actions(),
        "goals": inst.qdec.goals().len(),
    });
    report["factored"] = json!({
        "fluents": fenc.fluents.len(),
        "actions": fenc.actions.len(),
    });
    Ok(Outcome {
        code: exit_code::OK,
        human,
        json: report,
        artifacts: vec![
            ("explicit.json".into(), explicit),
            ("factored.json".into(), factored),
        ],
    })
}

// ---------------------------------------------------------------------------
// emit-pddl
// ---------------------------------------------------------------------------

fn cmd_emit_pddl(cfg: &RunConfig) -> Run<Outcome> {
    let inst = build_instance(cfg)?;
    let fenc = factor(&inst.qdec);
    let pair = emit_pddl(&inst.qdec, &fenc).map_err(map_pddl_error)?;
    let manifest_doc = serde_json::to_string_pretty(&pair.manifest.to_json()).unwrap() + "\n";

    let mut human = String::from("EMITTED\n");
    describe_instance(&mut human, cfg, &inst);
    let _ = writeln!(
        human,
        "documents: domain.pddl problem.pddl manifest.json ({} grounded action(s))",
        pair.manifest.actions.len()
    );

    let mut report = base_json(cfg, &inst);
    report["verdict"] = json!("emitted");
    report["pddl"] = json!({
        "domain": pair.manifest.domain,
        "problem": pair.manifest.problem,
        "actions": pair.manifest.actions.len(),
        "artifacts": ["domain.pddl", "problem.pddl", "manifest.json"],
    });
    Ok(Outcome {
        code: exit_code::OK,
        human,
        json: report,
        artifacts: vec![
            ("domain.pddl".into(), pair.domain_text),
            ("problem.pddl".into(), pair.problem_text),
            ("manifest.json".into(), manifest_doc),
        ],
    })
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(cfg: &RunConfig) -> Run<Outcome> {
    let inst = build_instance(cfg)?;
    let policy_path = cfg.policy_path.as_ref().ok_or_else(|| Failure {
        code: exit_code::PARSE,
        message: "check requires --policy <controller.json>".into(),
    })?;
    let text = read_file(policy_path, "controller file")?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure {
        code: exit_code::PARSE,
        message: format!("controller file {}: {e}", policy_path.display()),
    })?;
    let policy = match &cfg.manifest_path {
        Some(mp) => {
            let mtext = read_file(mp, "manifest file")?;
            let mdoc: Value = serde_json::from_str(&mtext).map_err(|e| Failure {
                code: exit_code::PARSE,
                message: format!("manifest file {}: {e}", mp.display()),
            })?;
            let manifest = Manifest::from_json(&mdoc).map_err(map_pddl_error)?;
            ingest_policy(&doc, &inst.ts, &manifest).map_err(map_pddl_error)?
        }
        None => Policy::from_json(&doc, &inst.ts).map_err(|e| Failure {
            code: exit_code::PARSE,
            message: format!("controller file {}: {e}", policy_path.display()),
        })?,
    };

    // Guarantee implied by the controller's own horizon claim.
    let mode = match policy.horizon {
        Some(_) => CheckMode::Strong,
        None => CheckMode::StrongCyclic,
    };
    let exec = check_execution(&inst.qdec, &policy, mode);
    if let Err(CheckError::BadPolicy(msg)) = &exec {
        return Err(Failure {
            code: exit_code::PARSE,
            message: format!("controller file {}: {msg}", policy_path.display()),
        });
    }
    let witness =
        SkolemWitness::new(&inst.ts, &inst.formula, policy).map_err(map_witness_error)?;
    let validation = validate_witness(
        &witness,
        cfg.bound,
        &ValidateLimits {
            max_configs: cfg.max_configs,
            max_automaton_states: cfg.max_automaton_states,
        },
    )
    .map_err(map_witness_error)?;

    let mode_name = match mode {
        CheckMode::Weak => "weak",
        CheckMode::Strong => "strong",
        CheckMode::StrongCyclic => "strong-cyclic",
    };
    let mut report = base_json(cfg, &inst);
    report["plan"] = json!({
        "nodes": witness.policy().nodes.len(),
        "horizon": witness.policy().horizon,
    });
    let exec_line;
    match &exec {
        Ok(()) => {
            exec_line = format!("execution check: ok ({mode_name} guarantee on the encoding)");
            report["execution"] = json!({ "mode": mode_name, "result": "ok" });
        }
        Err(e) => {
            exec_line = format!("execution check: FAILED: {e}");
            report["execution"] =
                json!({ "mode": mode_name, "result": "failed", "message": e.to_string() });
        }
    }

    let mut human = String::new();
    match validation {
        Validation::Validated { steps } if exec.is_ok() => {
            let _ = writeln!(human, "VALIDATED");
            describe_instance(&mut human, cfg, &inst);
            let _ = writeln!(human, "{exec_line}");
            let _ = writeln!(
                human,
                "validation: confirmed against the system for every universal \
                 choice to depth {steps}"
            );
            report["verdict"] = json!("validated");
            report["validation"] = json!({ "result": "validated", "steps": steps });
            Ok(Outcome { code: exit_code::OK, human, json: report, artifacts: Vec::new() })
        }
        Validation::Validated { steps } => {
            let _ = writeln!(
                human,
                "NOT VALIDATED (the controller satisfies the formula to depth {steps} \
                 but violates its claimed planning guarantee)"
            );
            describe_instance(&mut human, cfg, &inst);
            let _ = writeln!(human, "{exec_line}");
            report["verdict"] = json!("not-validated");
            report["validation"] = json!({ "result": "validated", "steps": steps });
            Ok(Outcome {
                code: exit_code::INCONCLUSIVE,
                human,
                json: report,
                artifacts: Vec::new(),
            })
        }
        Validation::Violated { universal_dirs, verdict, step } => {
            let _ = writeln!(human, "REFUTED (counterexample at step {step})");
            describe_instance(&mut human, cfg, &inst);
            let _ = writeln!(human, "{exec_line}");
            let names: Vec<String> = universal_dirs
                .iter()
                .map(|dirs| {
                    dirs.iter()
                        .map(|&d| inst.ts.dir_name(d).to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            let _ = writeln!(
                human,
                "counterexample universal directions: [{}] (evaluation: {verdict:?})",
                names.join(" ; ")
            );
            let replay = witness.replay(&universal_dirs).map_err(map_witness_error)?;
            let _ = write!(human, "{}", witness.trace_table(&replay));
            report["verdict"] = json!("refuted");
            report["validation"] = json!({
                "result": "violated",
                "step": step,
                "outcome": format!("{verdict:?}"),
                "universal_dirs": dirs_json(&inst.ts, &universal_dirs),
                "trace": witness.trace_table(&replay),
            });
            Ok(Outcome {
                code: exit_code::INCONCLUSIVE,
                human,
                json: report,
                artifacts: Vec::new(),
            })
        }
        Validation::Indeterminate { bound, needed } => {
            let _ = writeln!(
                human,
                "INDETERMINATE (validation bound {bound} is below the plan horizon {needed})"
            );
            describe_instance(&mut human, cfg, &inst);
            let _ = writeln!(human, "{exec_line}");
            report["verdict"] = json!("indeterminate");
            report["validation"] =
                json!({ "result": "indeterminate", "bound": bound, "needed": needed });
            Ok(Outcome {
                code: exit_code::INCONCLUSIVE,
                human,
                json: report,
                artifacts: Vec::new(),
            })
        }
    }
}
