//! `owlc`: check, compile, run and explore Owlang programs.
//!
//! Exit codes: 0 success, 1 diagnostics or an unsafe result, 2 usage or
//! I/O errors.

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use owl_core::ast::print::{print_module, print_module_with};
use owl_core::cgen;
use owl_core::diag::Diagnostic;
use owl_core::link::explore::{closing_query, explore, ExploreConfig};
use owl_core::link::manifest::{link_program, Manifest};
use owl_core::link::Status;
use owl_core::mem::{Memory, Value};
use owl_core::parse::SourceFile;
use owl_core::pipeline::{compile, Compiled};
use owl_core::sem::{Interp, Query};

const SCHEMA: &str = "owlc/1";

#[derive(Parser)]
#[command(name = "owlc", version, about = "Owlang verifying compiler and safety harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, check well-formedness, lower and ownership-check.
    Check {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Compile to C.
    Build {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Emit code even if ownership checking fails.
        #[arg(long)]
        unchecked: bool,
        /// Also write owl_runtime.h next to the output.
        #[arg(long)]
        runtime_header: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run one path, taking the first choice of every host.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value_t = 100_000)]
        fuel: u64,
        /// Integer or boolean arguments for the entry function.
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Explore every host choice up to a depth bound.
    Explore {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value_t = 200_000)]
        depth: usize,
        /// Skip the boundary contract monitor.
        #[arg(long)]
        no_monitor: bool,
    },
    /// Print an intermediate form.
    Dump {
        file: PathBuf,
        #[arg(long, group = "form")]
        emit_ir: bool,
        #[arg(long, group = "form")]
        emit_ownst: bool,
        #[arg(long, group = "form")]
        emit_elab: bool,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct LinkArgs {
    /// Host manifest (TOML).
    #[arg(long)]
    hosts: Option<PathBuf>,
    /// Execute even if ownership checking fails.
    #[arg(long)]
    unchecked: bool,
    #[arg(long)]
    json: bool,
}

/// Failure modes that map to exit codes.
enum Failure {
    /// Already reported; exit 1.
    Reported,
    /// Usage or I/O problem; exit 2.
    Usage(String),
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Reported) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("owlc: {m}");
            ExitCode::from(2)
        }
    }
}

fn color() -> bool {
    match std::env::var("OWLC_COLOR").as_deref() {
        Ok("1") => true,
        Ok("0") => false,
        _ => std::io::stderr().is_terminal(),
    }
}

fn read(path: &Path) -> Res<SourceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(SourceFile::new(path.display().to_string(), text))
}

fn report_diags(file: &str, diags: &[Diagnostic], json: bool, command: &str) {
    if json {
        let ds: Vec<_> = diags.iter().map(|d| d.to_json(file)).collect();
        println!("{}", json!({"schema": SCHEMA, "command": command, "ok": false, "diagnostics": ds}));
    } else {
        let c = color();
        for d in diags {
            eprintln!("{}", d.render(file, c));
        }
    }
}

/// Compiles; parse and well-formedness errors are reported here.
fn front(src: &SourceFile, json: bool, command: &str) -> Res<Compiled> {
    compile(src).map_err(|diags| {
        report_diags(&src.path, &diags, json, command);
        Failure::Reported
    })
}

/// Refuses programs with ownership errors unless `unchecked`.
fn checked(src: &SourceFile, c: &Compiled, unchecked: bool, json: bool, command: &str) -> Res<()> {
    if c.is_checked() || unchecked {
        return Ok(());
    }
    report_diags(&src.path, &c.report.diagnostics(), json, command);
    Err(Failure::Reported)
}

fn run(cmd: Cmd) -> Res<()> {
    match cmd {
        Cmd::Check { file, json } => {
            let src = read(&file)?;
            let c = front(&src, json, "check")?;
            if !c.is_checked() {
                report_diags(&src.path, &c.report.diagnostics(), json, "check");
                return Err(Failure::Reported);
            }
            if json {
                println!("{}", json!({"schema": SCHEMA, "command": "check", "ok": true, "diagnostics": []}));
            }
            Ok(())
        }
        Cmd::Build { file, output, unchecked, runtime_header, json } => {
            let src = read(&file)?;
            let c = front(&src, json, "build")?;
            checked(&src, &c, unchecked, json, "build")?;
            let code = cgen::emit(&c.elaborated).map_err(|e| Failure::Usage(e.to_string()))?;
            std::fs::write(&output, code).map_err(|e| Failure::Usage(format!("{}: {e}", output.display())))?;
            if runtime_header {
                let h = output.with_file_name("owl_runtime.h");
                std::fs::write(&h, cgen::RUNTIME_HEADER)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", h.display())))?;
            }
            if json {
                println!(
                    "{}",
                    json!({"schema": SCHEMA, "command": "build", "ok": true, "output": output.display().to_string()})
                );
            }
            Ok(())
        }
        Cmd::Run { file, entry, link, fuel, args } => run_cmd(&file, &entry, &link, fuel, &args),
        Cmd::Explore { file, entry, link, depth, no_monitor } => explore_cmd(&file, &entry, &link, depth, no_monitor),
        Cmd::Dump { file, emit_ir, emit_ownst, emit_elab, json } => {
            let src = read(&file)?;
            let c = front(&src, json, "dump")?;
            if emit_ownst {
                if json {
                    let v = json!({"schema": SCHEMA, "command": "dump", "ownst": c.report.functions, "errors": c.report.errors});
                    println!("{v}");
                } else {
                    for f in &c.report.functions {
                        println!("fn {}:", f.function);
                        for p in &f.points {
                            let label = p.label.map_or("    ".to_string(), |l| format!("L{l}:"));
                            let st =
                                p.ownst.as_ref().map_or("unreachable".to_string(), |s| format!("{{{}}}", s.join(", ")));
                            println!("  {label:<5} {:<40} {st}", p.instr);
                        }
                    }
                }
                return Ok(());
            }
            let text = if emit_elab {
                print_module(&c.elaborated)
            } else if emit_ir {
                print_module_with(&c.ir, true)
            } else {
                return Err(Failure::Usage("dump needs --emit-ir, --emit-ownst or --emit-elab".into()));
            };
            if json {
                println!("{}", json!({"schema": SCHEMA, "command": "dump", "text": text}));
            } else {
                print!("{text}");
            }
            Ok(())
        }
    }
}

fn load_program(file: &Path, link: &LinkArgs, command: &str) -> Res<(Arc<Interp>, Manifest)> {
    let src = read(file)?;
    let c = front(&src, link.json, command)?;
    checked(&src, &c, link.unchecked, link.json, command)?;
    let manifest = match &link.hosts {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Manifest::parse(&text).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => Manifest::default(),
    };
    Ok((Interp::new(&c.elaborated), manifest))
}

fn parse_arg(s: &str) -> Res<Value> {
    match s {
        "true" => Ok(Value::Bool(true)),
        "false" => Ok(Value::Bool(false)),
        "()" => Ok(Value::Unit),
        _ => s.parse().map(Value::Int).map_err(|_| Failure::Usage(format!("bad argument `{s}`"))),
    }
}

fn status_json(st: &Status) -> serde_json::Value {
    match st {
        Status::Running => json!({"kind": "out-of-fuel"}),
        Status::Final(r) => json!({"kind": "final", "value": r.value.to_string(), "leaks": r.mem.live_heap_ordinals()}),
        Status::Stuck(r) => json!({"kind": "stuck", "reason": r.to_string()}),
        Status::MemErr(e) => json!({"kind": "mem-err", "class": e.classify().to_string(), "detail": e.to_string()}),
        Status::Awaiting(q) => json!({"kind": "unresolved", "callee": q.callee}),
        Status::HostFault(m) => json!({"kind": "host-fault", "message": m}),
    }
}

fn run_cmd(file: &Path, entry: &str, link: &LinkArgs, fuel: u64, args: &[String]) -> Res<()> {
    let (interp, manifest) = load_program(file, link, "run")?;
    let comp = link_program(interp, &manifest).map_err(|e| Failure::Usage(e.to_string()))?;
    let sig = comp.signature(entry).ok_or_else(|| Failure::Usage(format!("no function `{entry}`")))?;
    let args = args.iter().map(|a| parse_arg(a)).collect::<Res<Vec<_>>>()?;
    let q = Query { callee: entry.to_string(), sig, args, mem: Memory::new() };
    let (st, _) = comp.run_first(&q, fuel, &mut |_| {}).map_err(|e| Failure::Usage(e.to_string()))?;
    let ok = matches!(&st, Status::Final(r) if r.mem.live_heap_ordinals().is_empty());
    let out = status_json(&st);
    if link.json {
        println!("{}", json!({"schema": SCHEMA, "command": "run", "outcome": out}));
    } else {
        match &st {
            Status::Final(r) => {
                println!("final {}", r.value);
                let leaks = r.mem.live_heap_ordinals();
                if !leaks.is_empty() {
                    println!("leaked heap blocks {leaks:?}");
                }
            }
            Status::Running => println!("out of fuel"),
            _ => println!(
                "{} {}",
                out["kind"].as_str().unwrap_or(""),
                out.get("reason")
                    .or(out.get("detail"))
                    .or(out.get("callee"))
                    .or(out.get("message"))
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
            ),
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Reported)
    }
}

fn explore_cmd(file: &Path, entry: &str, link: &LinkArgs, depth: usize, no_monitor: bool) -> Res<()> {
    let (interp, manifest) = load_program(file, link, "explore")?;
    let cenv = interp.cenv().clone();
    let comp = link_program(interp, &manifest).map_err(|e| Failure::Usage(e.to_string()))?;
    let q = closing_query(&comp, entry)
        .ok_or_else(|| Failure::Usage(format!("`{entry}` must exist and take no arguments")))?;
    let monitor = if no_monitor { None } else { Some(manifest.monitor().map_err(|e| Failure::Usage(e.to_string()))?) };
    let rep = explore(&comp, &cenv, &q, &ExploreConfig { depth, monitor });
    if link.json {
        let mut v = json!({
            "schema": SCHEMA,
            "command": "explore",
            "verdict": rep.verdict,
            "leaks": rep.leaks(),
            "statesVisited": rep.states_visited,
            "depth": rep.max_depth,
            "finals": rep.finals,
            "results": rep.results,
        });
        if !rep.witness.is_empty() {
            v["witness"] = json!(rep.witness);
        }
        println!("{v}");
    } else {
        let verdict = match &rep.verdict {
            owl_core::link::explore::Verdict::Safe { bound, truncated } => {
                format!("Safe (bound {bound}{})", if *truncated { ", truncated" } else { "" })
            }
            v => serde_json::to_string(v).unwrap_or_default(),
        };
        println!("verdict: {verdict}");
        println!("leaks: {}", rep.leaks());
        println!("states visited: {}", rep.states_visited);
        println!("depth: {}", rep.max_depth);
        if !rep.witness.is_empty() {
            println!("witness:");
            for w in &rep.witness {
                println!("  {w}");
            }
        }
    }
    if rep.verdict.is_safe() && rep.leaks() == 0 {
        Ok(())
    } else {
        Err(Failure::Reported)
    }
}
