//! The acceptance checks, one function each. Each returns whether it held
//! and a one-line summary of what was measured.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use owl_core::ast::print::print_function;
use owl_core::check::PointState;
use owl_core::link::explore::{closing_query, explore, ExploreConfig, ExploreReport, Verdict};
use owl_core::link::manifest::link_program;
use owl_core::link::monitor::Blame;
use owl_core::sem::{Interp, Outcome};
use rand::Rng;

use super::oracle;
use super::*;

pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    fn new(ok: bool, detail: impl Into<String>) -> Check {
        Check { ok, detail: detail.into() }
    }
}

fn ownst_at(points: &[PointState], pick: impl Fn(&PointState) -> bool) -> Option<&[String]> {
    points.iter().find(|p| pick(p)).and_then(|p| p.ownst.as_deref())
}

/// OwnSt of `find_process` at entry, after the match move, at the return of
/// `process` and after the merge that follows it.
pub fn ownst_figure() -> Check {
    let t = Instant::now();
    let comp = compile_program("list.owl");
    let elapsed = t.elapsed();
    let Some(f) = comp.report.functions.iter().find(|f| f.function == "find_process") else {
        return Check::new(false, "find_process missing");
    };
    let pts = &f.points;
    let got = [
        ownst_at(pts, |p| p.label == Some(0)),
        ownst_at(pts, |p| p.label == Some(3)),
        ownst_at(pts, |p| p.label == Some(4) && p.instr.ends_with("<ret>")),
        ownst_at(pts, |p| p.label == Some(10)),
    ];
    let want: [&[&str]; 4] = [&["l", "*l"], &["l", "node"], &["l", "node.next"], &["l", "node"]];
    let ok = got.iter().zip(want).all(|(g, w)| g.is_some_and(|g| g == w)) && elapsed < Duration::from_secs(1);
    Check::new(ok, format!("{got:?} in {elapsed:?}"))
}

pub const POINT_GOLDEN: &str = "__df_p_x = 0; __df_p_y = 0; p.x = Box(1); __df_p_x = 1; p.y = Box(2); __df_p_y = 1; \
__t0 = rand(); if __t0 { a = move p.x; __df_p_x = 0; } else { a = move p.y; __df_p_y = 0; } drop(a); \
if __df_p_x { drop(p.x); } if __df_p_y { drop(p.y); } return;";

/// Body of an elaborated function on one line, declarations left out.
pub fn flat_body(m: &owl_core::ast::Module, name: &str) -> String {
    let f = m.function(name).expect("function");
    let text = print_function(m, f, false);
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    lines[1..lines.len() - 1].iter().filter(|l| !l.starts_with("let ")).copied().collect::<Vec<_>>().join(" ")
}

pub fn point_elaboration() -> Check {
    let t = Instant::now();
    let comp = compile_program("point.owl");
    let elapsed = t.elapsed();
    let got = flat_body(&comp.elaborated, "test");
    let ok = comp.is_checked() && got == POINT_GOLDEN && elapsed < Duration::from_secs(1);
    Check::new(ok, format!("{got} in {elapsed:?}"))
}

pub const CORPUS_SEED: u64 = 7;

/// Checked programs never reach a memory error on any host choice.
pub fn checked_programs_safe(c: &Corpus) -> Check {
    let mut mem_errs = 0;
    let mut other = 0;
    for (_, comp) in &c.checked {
        let r = explore_module(&comp.elaborated);
        match r.verdict {
            Verdict::MemErr { .. } => mem_errs += 1,
            Verdict::Safe { .. } if r.leaks() == 0 => {}
            _ => other += 1,
        }
    }
    Check::new(
        c.checked.len() >= 1000 && mem_errs == 0,
        format!("{} programs, {mem_errs} mem-err, {other} other non-safe or leaking", c.checked.len()),
    )
}

fn faults_or_leaks(r: &ExploreReport) -> bool {
    matches!(r.verdict, Verdict::MemErr { .. }) || r.leaks() > 0
}

/// Rejected programs, run unchecked, do go wrong a fair share of the time.
pub fn rejected_programs_fail(c: &Corpus) -> Check {
    let hits = c.rejected.iter().filter(|(_, comp)| faults_or_leaks(&explore_unmonitored(&comp.elaborated))).count();
    let n = c.rejected.len();
    Check::new(n >= 200 && hits * 10 >= n * 3, format!("{hits}/{n} show a memory error or a leak"))
}

pub fn explore_unmonitored(m: &owl_core::ast::Module) -> ExploreReport {
    let interp = Interp::new(m);
    let man = owl_core::link::manifest::Manifest::parse(GEN_HOSTS).unwrap();
    let comp = link_program(interp.clone(), &man).unwrap();
    let q = closing_query(&comp, "main").unwrap();
    explore(&comp, interp.cenv(), &q, &ExploreConfig { depth: FUEL, monitor: None })
}

/// Surface, IR and elaborated programs behave alike on scripted host
/// choices, rejected programs included. Checked ones are also compared
/// over all choices at once.
pub fn preservation(c: &Corpus) -> Check {
    let mut r = rng(CORPUS_SEED ^ 0x5eed);
    let mut mismatches = 0;
    let mut runs = 0;
    for (_, comp) in c.checked.iter().chain(&c.rejected) {
        let mut scripts = vec![vec![], vec![true; 16]];
        scripts.extend((0..4).map(|_| (0..16).map(|_| r.gen_bool(0.5)).collect()));
        for s in &scripts {
            let a = observe(&comp.surface, s);
            let b = observe(&comp.ir, s);
            let e = observe(&comp.elaborated, s);
            runs += 1;
            if a != b || b != e || matches!(a.outcome, Outcome::OutOfFuel | Outcome::Unhandled { .. }) {
                mismatches += 1;
            }
        }
        if !comp.is_checked() {
            continue;
        }
        let all: Vec<_> = [&comp.surface, &comp.ir, &comp.elaborated]
            .iter()
            .map(|m| {
                let r = explore_unmonitored(m);
                (r.verdict.is_safe(), r.leaks(), r.results)
            })
            .collect();
        if all[0] != all[1] || all[1] != all[2] {
            mismatches += 1;
        }
    }
    Check::new(!c.checked.is_empty() && mismatches == 0, format!("{runs} scripted runs, {mismatches} mismatches"))
}

/// The worklist solver against the exact all-paths oracle.
pub fn kildall_oracle() -> Check {
    let cenv = oracle::cenv();
    let u = oracle::universe(&cenv);
    let mut r = rng(0x6b1d);
    let mut bad = 0;
    for _ in 0..500 {
        let cfg = oracle::random_cfg(&mut r, 12, false);
        let entry = oracle::random_entry(&mut r, &u);
        let sets = oracle::reachable_sets(&u, &cfg, &entry);
        if !oracle::disagreements(&u, &cfg, &entry, &sets).is_empty() {
            bad += 1;
        }
    }
    Check::new(bad == 0, format!("500 graphs, {bad} disagree"))
}

fn explore_buks(owl: &str, hosts: &str, monitor: bool) -> ExploreReport {
    let comp = compile_program(owl);
    let interp = Interp::new(&comp.elaborated);
    let man = manifest(hosts);
    let linked = link_program(interp.clone(), &man).unwrap();
    let q = closing_query(&linked, "main").unwrap();
    let cfg = ExploreConfig { depth: 200_000, monitor: monitor.then(|| man.monitor().unwrap()) };
    explore(&linked, interp.cenv(), &q, &cfg)
}

fn callee_violation(r: &ExploreReport, rule: &str) -> bool {
    matches!(&r.verdict, Verdict::Violation { violation } if violation.rule == rule && violation.blame == Blame::Callee)
}

/// The linked hash map is safe and leak free; the two host mutants are
/// caught and blamed on the callee.
pub fn hashmap_and_mutants() -> Check {
    let good = explore_buks("hashmap_closed.owl", "buks.toml", true);
    let free_other = explore_buks("hashmap_closed.owl", "buks_free_other.toml", true);
    let overflow = explore_buks("list_nohash.owl", "buks_hash_overflow.toml", true);
    let ok = matches!(good.verdict, Verdict::Safe { truncated: false, .. })
        && good.leaks() == 0
        && good.events > 0
        && callee_violation(&free_other, "frame-touched")
        && callee_violation(&overflow, "hash-range-post");
    let rule = |r: &ExploreReport| match &r.verdict {
        Verdict::Violation { violation } => format!("{} ({:?})", violation.rule, violation.blame),
        v => format!("{v:?}"),
    };
    Check::new(
        ok,
        format!(
            "{:?}, {} leaks, {} events; free_other: {}; hash_overflow: {}",
            good.verdict,
            good.leaks(),
            good.events,
            rule(&free_other),
            rule(&overflow)
        ),
    )
}

pub const TAXONOMY: &[(&str, &str)] = &[
    (
        "double-free",
        "fn sink(x: Box<i32>) { return; }\nfn main() -> i32 { let a: Box<i32> = Box(1); sink(a); sink(a); return 0; }",
    ),
    (
        "use-after-free",
        "fn consume(x: Box<i32>) -> i32 { return *x; }\nfn main() -> i32 { let a: Box<i32> = Box(1); let s: i32 = consume(a); return s + *a; }",
    ),
    ("uninit-use", "fn main() -> i32 { let a: Box<i32>; return *a; }"),
    ("div-by-zero", "fn main() -> i32 { let z: i32 = 0; return 1 / z; }"),
];

/// Outcome class of `main` in the elaborated program.
pub fn taxonomy_class(text: &str) -> String {
    let comp = compile_text(text);
    match observe(&comp.elaborated, &[]).outcome {
        Outcome::MemErr { class, .. } => class,
        Outcome::Stuck { reason } => reason.to_string(),
        o => format!("{o:?}"),
    }
}

pub fn memerr_taxonomy() -> Check {
    let got: Vec<String> = TAXONOMY.iter().map(|(_, t)| taxonomy_class(t)).collect();
    let ok = TAXONOMY.iter().zip(&got).all(|((want, _), g)| g == want);
    Check::new(ok, got.join(", "))
}
