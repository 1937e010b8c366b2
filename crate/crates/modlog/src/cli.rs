//! Batch command-line driver.
//!
//! Exit codes: 0 ok, 1 compile error or no answer, 2 non-conformance,
//! 3 requires violation, 4 ensures violation, 5 internal error.

use crate::diag::{codes, sort_diags, Diag, Span};
use crate::engine::{self, EvalOptions};
use crate::loader::{self, Workspace};
use crate::modsys::{resolve::ResolveCtx, CompiledModel};
use crate::transform::{apply_transform, run_system, ContractPolicy, TransformError};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: u8 = 0;
pub const EXIT_COMPILE_OR_NO_ANSWER: u8 = 1;
pub const EXIT_NONCONFORMANCE: u8 = 2;
pub const EXIT_REQUIRES: u8 = 3;
pub const EXIT_ENSURES: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

#[derive(Parser)]
#[command(name = "modlog", version, about = "Domains, models, and transforms over stratified logic programs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Load path: a .4ml file or a directory of them (repeatable).
    #[arg(short = 'I', long = "load", value_name = "PATH")]
    load: Vec<PathBuf>,
    /// Emit machine-readable JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Abort evaluation beyond this many facts (env: MODLOG_MAX_FACTS).
    #[arg(long, value_name = "N")]
    max_facts: Option<usize>,
}

impl Common {
    fn options(&self) -> EvalOptions {
        let from_env = std::env::var("MODLOG_MAX_FACTS").ok().and_then(|v| v.parse().ok());
        EvalOptions {
            max_facts: self.max_facts.or(from_env).unwrap_or(engine::DEFAULT_MAX_FACTS),
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse, elaborate, and stratify every loaded module.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Check a model against its domain's conforms clauses.
    Conform {
        #[command(flatten)]
        common: Common,
        model: String,
    },
    /// Apply a transform to input models and write one file per output.
    Apply {
        #[command(flatten)]
        common: Common,
        transform: String,
        /// Input model names, in signature order.
        models: Vec<String>,
        /// Directory for output model files.
        #[arg(short, long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Write outputs even when `ensures` fails.
        #[arg(long)]
        force: bool,
    },
    /// Run a transform system with named inputs (label=model).
    Run {
        #[command(flatten)]
        common: Common,
        system: String,
        /// Input bindings, e.g. in1=TwoStateMach.
        bindings: Vec<String>,
        #[arg(short, long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Also write intermediate pipeline models to this directory.
        #[arg(long, value_name = "DIR")]
        keep_intermediates: Option<PathBuf>,
    },
    /// Print a module's symbol table.
    Symbols {
        #[command(flatten)]
        common: Common,
        module: String,
    },
    /// Evaluate a goal against a model's fixpoint.
    Query {
        #[command(flatten)]
        common: Common,
        model: String,
        goal: String,
    },
}

pub fn main() -> u8 {
    // Usage errors must not collide with the non-conformance exit code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_COMPILE_OR_NO_ANSWER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Check { common } => cmd_check(&common),
        Command::Conform { common, model } => cmd_conform(&common, &model),
        Command::Apply { common, transform, models, out, force } => {
            cmd_apply(&common, &transform, &models, out.as_deref(), force)
        }
        Command::Run { common, system, bindings, out, force, keep_intermediates } => {
            cmd_run(&common, &system, &bindings, out.as_deref(), force, keep_intermediates.as_deref())
        }
        Command::Symbols { common, module } => cmd_symbols(&common, &module),
        Command::Query { common, model, goal } => cmd_query(&common, &model, &goal),
    }
}

fn emit_diags(common: &Common, mut diags: Vec<Diag>) {
    sort_diags(&mut diags);
    if common.json {
        println!("{}", serde_json::to_string_pretty(&diags).expect("diags serialize"));
    } else {
        for d in &diags {
            eprintln!("{}", d);
        }
    }
}

fn load_ws(common: &Common) -> Result<Workspace, u8> {
    match loader::load(&common.load) {
        Ok(ws) => Ok(ws),
        Err(diags) => {
            emit_diags(common, diags);
            Err(EXIT_COMPILE_OR_NO_ANSWER)
        }
    }
}

fn unknown(common: &Common, what: &str, name: &str) -> u8 {
    emit_diags(
        common,
        vec![Diag::error("<cli>", Span::default(), codes::ELAB_UNKNOWN_MODULE, format!("unknown {} `{}`", what, name))],
    );
    EXIT_COMPILE_OR_NO_ANSWER
}

fn cmd_check(common: &Common) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let modules =
        ws.env.domains.len() + ws.env.models.len() + ws.env.transforms.len() + ws.env.systems.len();
    if modules == 0 {
        emit_diags(
            common,
            vec![Diag::warning("<cli>", Span::default(), codes::WARN_NO_MODULES, "no modules loaded")],
        );
    } else if !common.json {
        println!("ok: {} modules", modules);
    } else {
        println!("[]");
    }
    EXIT_OK
}

fn cmd_conform(common: &Common, model: &str) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let Some(m) = ws.env.models.get(model) else {
        return unknown(common, "model", model);
    };
    let report = match engine::check_conforms(m, &common.options()) {
        Ok(r) => r,
        Err(e) => return internal(common, e.to_string()),
    };
    if common.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for c in &report.clauses {
            let verdict = if c.holds { "holds" } else { "FAILS" };
            match &c.witness {
                Some(w) => println!("{} ({} clause at {}:{}): {} with witness {}", c.id, c.origin, c.line, c.col, verdict, w),
                None => println!("{} ({} clause at {}:{}): {}", c.id, c.origin, c.line, c.col, verdict),
            }
        }
        println!(
            "{} {} {}",
            report.model,
            if report.conforms { "conforms to" } else { "does NOT conform to" },
            report.domain
        );
    }
    if report.conforms {
        EXIT_OK
    } else {
        EXIT_NONCONFORMANCE
    }
}

fn internal(common: &Common, message: String) -> u8 {
    emit_diags(common, vec![Diag::error("<cli>", Span::default(), codes::RUN_FACT_CAP, message)]);
    EXIT_INTERNAL
}

fn write_model_file(dir: &Path, model: &CompiledModel) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.4ml", model.name));
    let mut text = format!("model {} of {} {{\n", model.name, model.domain.name);
    for f in &model.facts {
        text.push_str(&format!("   {}.\n", f));
    }
    text.push_str("}\n");
    std::fs::write(&path, text)?;
    Ok(path)
}

fn transform_exit(e: &TransformError) -> u8 {
    match e {
        TransformError::Requires { .. } => EXIT_REQUIRES,
        TransformError::Ensures { .. } => EXIT_ENSURES,
        TransformError::Step { source, .. } => transform_exit(source),
        TransformError::Arity { .. }
        | TransformError::DomainMismatch { .. }
        | TransformError::UnboundInput(_) => EXIT_COMPILE_OR_NO_ANSWER,
        TransformError::IllTypedOutput { .. } | TransformError::Eval(_) => EXIT_INTERNAL,
    }
}

fn cmd_apply(common: &Common, transform: &str, models: &[String], out: Option<&Path>, force: bool) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let Some(t) = ws.env.transforms.get(transform) else {
        return unknown(common, "transform", transform);
    };
    let mut inputs: Vec<&CompiledModel> = Vec::new();
    for name in models {
        match ws.env.models.get(name) {
            Some(m) => inputs.push(m),
            None => return unknown(common, "model", name),
        }
    }
    let policy = ContractPolicy { force };
    match apply_transform(t, &inputs, &common.options(), policy) {
        Ok(app) => {
            let mut written = Vec::new();
            if let Some(dir) = out {
                for m in &app.outputs {
                    match write_model_file(dir, m) {
                        Ok(p) => written.push(p),
                        Err(e) => return internal(common, e.to_string()),
                    }
                }
            }
            if common.json {
                let summary = serde_json::json!({
                    "transform": app.transform,
                    "requires_held": app.requires_held,
                    "ensures_held": app.ensures_held,
                    "outputs": app.outputs.iter().map(|m| serde_json::json!({
                        "label": m.name,
                        "domain": m.domain.name,
                        "facts": m.facts.len(),
                    })).collect::<Vec<_>>(),
                    "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                });
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            } else {
                for m in &app.outputs {
                    println!("output {}: {} facts over {}", m.name, m.facts.len(), m.domain.name);
                }
                for p in &written {
                    println!("wrote {}", p.display());
                }
                if !app.ensures_held {
                    eprintln!("warning: ensures failed; outputs written because of --force");
                }
            }
            if app.ensures_held {
                EXIT_OK
            } else {
                EXIT_ENSURES
            }
        }
        Err(e) => {
            emit_diags(
                common,
                vec![Diag::error("<cli>", Span::default(), code_for(&e), e.to_string())],
            );
            transform_exit(&e)
        }
    }
}

fn code_for(e: &TransformError) -> &'static str {
    match e {
        TransformError::Requires { .. } => codes::RUN_REQUIRES,
        TransformError::Ensures { .. } => codes::RUN_ENSURES,
        TransformError::Step { source, .. } => code_for(source),
        TransformError::Eval(_) => codes::RUN_FACT_CAP,
        TransformError::IllTypedOutput { .. } => codes::RUN_BAD_OUTPUT,
        _ => codes::ELAB_DOMAIN_MISMATCH,
    }
}

fn cmd_run(
    common: &Common,
    system: &str,
    bindings: &[String],
    out: Option<&Path>,
    force: bool,
    keep: Option<&Path>,
) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let Some(s) = ws.env.systems.get(system) else {
        return unknown(common, "transform system", system);
    };
    let mut inputs: BTreeMap<String, Arc<CompiledModel>> = BTreeMap::new();
    for b in bindings {
        let Some((label, model)) = b.split_once('=') else {
            emit_diags(
                common,
                vec![Diag::error(
                    "<cli>",
                    Span::default(),
                    codes::ELAB_PIPELINE,
                    format!("binding `{}` is not of the form label=model", b),
                )],
            );
            return EXIT_COMPILE_OR_NO_ANSWER;
        };
        match ws.env.models.get(model) {
            Some(m) => {
                inputs.insert(label.to_string(), Arc::clone(m));
            }
            None => return unknown(common, "model", model),
        }
    }
    let policy = ContractPolicy { force };
    match run_system(s, &inputs, &common.options(), policy) {
        Ok(run) => {
            let mut written = Vec::new();
            if let Some(dir) = out {
                for (_, m) in &run.outputs {
                    match write_model_file(dir, m) {
                        Ok(p) => written.push(p),
                        Err(e) => return internal(common, e.to_string()),
                    }
                }
            }
            if let Some(dir) = keep {
                for (_, m) in &run.intermediates {
                    if let Err(e) = write_model_file(dir, m) {
                        return internal(common, e.to_string());
                    }
                }
            }
            if common.json {
                let summary = serde_json::json!({
                    "system": s.name,
                    "outputs": run.outputs.iter().map(|(l, m)| serde_json::json!({
                        "label": l,
                        "domain": m.domain.name,
                        "facts": m.facts.len(),
                    })).collect::<Vec<_>>(),
                    "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                });
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            } else {
                for (l, m) in &run.outputs {
                    println!("output {}: {} facts over {}", l, m.facts.len(), m.domain.name);
                }
                for p in &written {
                    println!("wrote {}", p.display());
                }
            }
            EXIT_OK
        }
        Err(e) => {
            emit_diags(common, vec![Diag::error("<cli>", Span::default(), code_for(&e), e.to_string())]);
            transform_exit(&e)
        }
    }
}

fn cmd_symbols(common: &Common, module: &str) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let table = if let Some(d) = ws.env.domains.get(module) {
        &d.table
    } else if let Some(m) = ws.env.models.get(module) {
        &m.table
    } else if let Some(t) = ws.env.transforms.get(module) {
        &t.table
    } else if ws.env.systems.contains_key(module) {
        emit_diags(
            common,
            vec![Diag::error(
                "<cli>",
                Span::default(),
                codes::ELAB_UNKNOWN_MODULE,
                format!("`{}` is a transform system; systems have no symbol table", module),
            )],
        );
        return EXIT_COMPILE_OR_NO_ANSWER;
    } else {
        return unknown(common, "module", module);
    };
    let rows = table.rows();
    if common.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    } else {
        for row in rows {
            println!("{}", row);
        }
    }
    EXIT_OK
}

fn cmd_query(common: &Common, model: &str, goal: &str) -> u8 {
    let ws = match load_ws(common) {
        Ok(ws) => ws,
        Err(code) => return code,
    };
    let Some(m) = ws.env.models.get(model) else {
        return unknown(common, "model", model);
    };
    let body = match crate::frontend::parser::parse_goal("<goal>", goal) {
        Ok(b) => b,
        Err(diags) => {
            emit_diags(common, diags);
            return EXIT_COMPILE_OR_NO_ANSWER;
        }
    };
    let ctx = ResolveCtx { table: &m.table, module: &m.domain.name, prefixes: &[], path: "<goal>" };
    let (conjuncts, vars) = match crate::modsys::resolve::resolve_goal(&ctx, &body) {
        Ok(g) => g,
        Err(diags) => {
            emit_diags(common, diags);
            return EXIT_COMPILE_OR_NO_ANSWER;
        }
    };
    let bindings = match engine::query(m, &conjuncts, &vars, &common.options()) {
        Ok(b) => b,
        Err(e) => return internal(common, e.to_string()),
    };
    if common.json {
        let rows: Vec<BTreeMap<String, String>> = bindings
            .iter()
            .map(|b| b.iter().map(|(k, v)| (k.clone(), v.to_string())).collect())
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    } else {
        for b in &bindings {
            if b.is_empty() {
                println!("true");
            } else {
                let line: Vec<String> =
                    vars.iter().filter_map(|v| b.get(v).map(|t| format!("{} = {}", v, t))).collect();
                println!("{}", line.join(", "));
            }
        }
    }
    if bindings.is_empty() {
        EXIT_COMPILE_OR_NO_ANSWER
    } else {
        EXIT_OK
    }
}
