//! Shared test support: a seeded generator of Owlang programs, hosts for
//! them, and runners.
#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use owl_core::ast::Module;
use owl_core::link::explore::{closing_query, explore, ExploreConfig, ExploreReport};
use owl_core::link::manifest::{link_program, Manifest};
use owl_core::link::Component;
use owl_core::mem::{Access, Chunk, MemErr, Memory, Value};
use owl_core::parse::SourceFile;
use owl_core::pipeline::{compile, Compiled};
use owl_core::sem::{HostFail, Interp, Observation, Outcome, Query, Reply};

pub fn programs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

pub fn program_text(name: &str) -> String {
    std::fs::read_to_string(programs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn compile_program(name: &str) -> Compiled {
    compile(&SourceFile::new(name, program_text(name))).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

pub fn manifest(name: &str) -> Manifest {
    Manifest::parse(&program_text(name)).unwrap()
}

pub fn compile_text(text: &str) -> Compiled {
    compile(&SourceFile::new("gen.owl", text)).unwrap_or_else(|d| panic!("{d:?}\n{text}"))
}

/// Hosts for generated programs: a coin and the XOR-42 `process`.
pub const GEN_HOSTS: &str = r#"
[[host]]
module = "env"
name = "rand"
signature = "fn() -> bool"
native = "choice"
choices = [true, false]

[[host]]
module = "env"
name = "process"
signature = "fn(Box<i32>) -> Box<i32>"
native = "xor42"
"#;

pub const FUEL: usize = 100_000;

/// Explores `main` of `m` over every host choice, with the rsown monitor.
pub fn explore_module(m: &Module) -> ExploreReport {
    let interp = Interp::new(m);
    let man = Manifest::parse(GEN_HOSTS).unwrap();
    let comp = link_program(interp.clone(), &man).unwrap();
    let q = closing_query(&comp, "main").unwrap();
    let cfg = ExploreConfig { depth: FUEL, monitor: Some(man.monitor().unwrap()) };
    explore(&comp, interp.cenv(), &q, &cfg)
}

pub fn link_with(m: &Module, man: &Manifest) -> (Arc<Interp>, Component) {
    let interp = Interp::new(m);
    let comp = link_program(interp.clone(), man).unwrap();
    (interp, comp)
}

/// Answers host calls of generated programs: `rand` from `choices` (then
/// false), `process` by XOR-ing the box in place.
pub fn scripted_host(choices: Vec<bool>) -> impl FnMut(&Query) -> Result<Reply, HostFail> {
    let mut next = choices.into_iter();
    move |q: &Query| match q.callee.as_str() {
        "rand" => Ok(Reply { value: Value::Bool(next.next().unwrap_or(false)), mem: q.mem.clone() }),
        "process" => {
            let mut mem: Memory = q.mem.clone();
            // Same as the native xor42 host.
            let Value::Ptr(b, o) = q.args[0] else {
                return Err(HostFail::MemErr(MemErr::undef_address(Access::Load)));
            };
            let x = owl_core::link::host::as_int(mem.load(b, o, Chunk::I32).map_err(HostFail::MemErr)?);
            mem.store(b, o, Chunk::I32, Value::Int(x ^ 42)).map_err(HostFail::MemErr)?;
            Ok(Reply { value: q.args[0], mem })
        }
        _ => Err(HostFail::Unhandled),
    }
}

/// Runs `main` of `m` with a scripted host.
pub fn observe(m: &Module, choices: &[bool]) -> Observation {
    observe_entry(m, "main", choices)
}

pub fn observe_entry(m: &Module, entry: &str, choices: &[bool]) -> Observation {
    let interp = Interp::new(m);
    let q = Query { callee: entry.into(), sig: interp.signature(entry).unwrap(), args: vec![], mem: Memory::new() };
    let mut s = interp.init(&q).unwrap();
    let mut host = scripted_host(choices.to_vec());
    match interp.run(&mut s, FUEL as u64, &mut host) {
        o @ (Outcome::OutOfFuel | Outcome::Unhandled { .. }) => Observation { outcome: o, leaks: vec![] },
        _ => Observation::of_state(&s).unwrap(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Declarations shared by every generated program.
pub const PRELUDE: &str = "\
struct Pair { a: Box<i32>, b: Box<i32> }
enum Opt { None, Some(Box<i32>) }
extern fn rand() -> bool;
extern fn process(v: Box<i32>) -> Box<i32>;
fn consume(x: Box<i32>) -> i32 { return *x; }
fn make(n: i32) -> Box<i32> { let b: Box<i32> = Box(n); return b; }
";

/// Random straight-line-and-branching `main` over a fixed set of owning
/// variables. Nothing prevents use after move, so a good share of the
/// output is rejected by the checker.
pub struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    fresh: usize,
    /// Budget of statements left.
    budget: usize,
}

const BOXES: &[&str] = &["x0", "x1", "x2", "p.a", "p.b", "*bb"];

impl<'r> Gen<'r> {
    pub fn new(rng: &'r mut ChaCha8Rng) -> Self {
        Gen { rng, fresh: 0, budget: 0 }
    }

    pub fn program(&mut self) -> String {
        self.budget = self.rng.gen_range(3..14);
        let mut s = String::from(PRELUDE);
        s.push_str("fn main() -> i32 {\n    let acc: i32 = 0;\n");
        s.push_str("    let x0: Box<i32> = Box(3);\n    let x1: Box<i32> = make(4);\n");
        if self.rng.gen_bool(0.8) {
            s.push_str("    let x2: Box<i32> = Box(7);\n");
        } else {
            s.push_str("    let x2: Box<i32>;\n");
        }
        s.push_str("    let p: Pair = Pair { a: Box(1), b: Box(2) };\n");
        s.push_str("    let o: Opt = Opt::Some(Box(5));\n");
        s.push_str("    let bb: Box<Box<i32>> = Box(Box(6));\n");
        while self.budget > 0 {
            let st = self.stmt(1);
            s.push_str(&st);
        }
        s.push_str("    return acc;\n}\n");
        s
    }

    fn boxp(&mut self) -> &'static str {
        BOXES.choose(self.rng).unwrap()
    }

    fn int(&mut self) -> i32 {
        self.rng.gen_range(-3..10)
    }

    fn block(&mut self, depth: usize) -> String {
        let n = self.rng.gen_range(1..3);
        (0..n).map(|_| self.stmt(depth + 1)).collect()
    }

    fn stmt(&mut self, depth: usize) -> String {
        self.budget = self.budget.saturating_sub(1);
        let pad = "    ".repeat(depth);
        let nested = depth < 3;
        let choice = self.rng.gen_range(0..if nested { 20 } else { 14 });
        let body = match choice {
            0 | 1 => format!("acc = acc + {};", self.boxp()),
            2 => format!("{} = Box({});", self.boxp(), self.int()),
            3 => format!("{} = make({});", self.boxp(), self.int()),
            4 | 5 => {
                let (a, b) = (self.boxp(), self.boxp());
                if a == b {
                    format!("{a} = Box(1);")
                } else {
                    format!("{a} = {b};")
                }
            }
            6 => {
                self.fresh += 1;
                let t = format!("t{}", self.fresh);
                format!("let {t}: i32 = consume({}); acc = acc + {t};", self.boxp())
            }
            7 => {
                let x = self.boxp();
                format!("{x} = process({x});")
            }
            8 => {
                let x = self.boxp();
                format!("*{x} = *{x} + {};", self.int())
            }
            9 => format!("o = Opt::Some({});", self.boxp()),
            10 => "o = Opt::None;".to_string(),
            11 => {
                self.fresh += 1;
                let s = format!("s{}", self.fresh);
                format!("let {s}: Box<i32> = p.a; p.a = p.b; p.b = {s};")
            }
            12 => format!("bb = Box({});", self.boxp()),
            13 => format!("acc = acc * {} % 1000;", self.int()),
            14 | 15 => {
                let (a, b) = (self.block(depth), self.block(depth));
                format!("if rand() {{\n{a}{pad}}} else {{\n{b}{pad}}}")
            }
            16 => {
                let (a, b) = (self.block(depth), self.block(depth));
                format!("if acc > {} {{\n{a}{pad}}} else {{\n{b}{pad}}}", self.int())
            }
            17 => {
                let keep = if self.rng.gen_bool(0.7) { " o = Opt::Some(b);" } else { "" };
                format!("match o {{\n{pad}    Opt::None => {{ acc = acc + 1; }}\n{pad}    Opt::Some(b) => {{ acc = acc + *b;{keep} }}\n{pad}}}")
            }
            18 => {
                self.fresh += 1;
                let n = format!("n{}", self.fresh);
                let b = self.block(depth);
                format!("let {n}: i32 = 0;\n{pad}while {n} < 2 {{\n{pad}    {n} = {n} + 1;\n{b}{pad}}}")
            }
            _ => {
                let (a, b) = (self.block(depth), self.block(depth));
                format!("if o is Some {{\n{a}{pad}}} else {{\n{b}{pad}}}")
            }
        };
        let body = if body.starts_with("acc = acc + ") && !body.contains("consume") {
            // Reads go through the box.
            let place = body.trim_start_matches("acc = acc + ").trim_end_matches(';');
            format!("acc = acc + *{place};")
        } else {
            body
        };
        format!("{pad}{body}\n")
    }
}

/// Generated programs, split by whether the checker accepts them.
pub struct Corpus {
    pub checked: Vec<(String, Compiled)>,
    pub rejected: Vec<(String, Compiled)>,
}

pub fn corpus(seed: u64, want_checked: usize, want_rejected: usize) -> Corpus {
    let mut r = rng(seed);
    let mut c = Corpus { checked: Vec::new(), rejected: Vec::new() };
    let mut attempts = 0;
    while (c.checked.len() < want_checked || c.rejected.len() < want_rejected)
        && attempts < 50 * (want_checked + want_rejected)
    {
        attempts += 1;
        let text = Gen::new(&mut r).program();
        let Ok(comp) = compile(&SourceFile::new("gen.owl", text.clone())) else { continue };
        if comp.is_checked() {
            if c.checked.len() < want_checked {
                c.checked.push((text, comp));
            }
        } else if c.rejected.len() < want_rejected {
            c.rejected.push((text, comp));
        }
    }
    c
}
