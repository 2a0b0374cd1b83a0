//! Bounded breadth-first exploration of a closed program.
//!
//! Every host choice is a branch. The first error found (in BFS order, so
//! with a shortest witness) decides the verdict; otherwise the program is
//! safe up to the bound.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::ast::CompositeEnv;
use crate::mem::{MemErr, Memory};
use crate::sem::{Query, StuckReason};

use super::monitor::{ContractSpec, Violation};
use super::{CState, Component, Event, Status};

#[derive(Clone, Debug)]
pub struct ExploreConfig {
    /// Longest path explored, in steps.
    pub depth: usize,
    pub monitor: Option<ContractSpec>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { depth: 200_000, monitor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    /// No error within `bound` steps; `truncated` if some path was cut.
    Safe {
        bound: usize,
        truncated: bool,
    },
    Stuck {
        reason: StuckReason,
    },
    MemErr {
        class: String,
        detail: String,
    },
    Violation {
        violation: Violation,
    },
    /// The program called something nobody provides.
    Unresolved {
        callee: String,
    },
    HostFault {
        message: String,
    },
}

impl Verdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, Verdict::Safe { .. })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExploreReport {
    pub verdict: Verdict,
    /// Steps from the initial state to the error, as state summaries.
    pub witness: Vec<String>,
    /// Final states that still had live heap blocks.
    pub leaking_finals: usize,
    pub finals: usize,
    /// Final results seen, rendered.
    pub results: BTreeSet<String>,
    pub states_visited: usize,
    pub max_depth: usize,
    pub events: usize,
}

impl ExploreReport {
    pub fn leaks(&self) -> usize {
        self.leaking_finals
    }
}

pub fn fingerprint(s: &CState) -> u64 {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

/// The query that starts a closed program: `entry()` on empty memory.
/// `None` if `entry` is not exported or takes arguments.
pub fn closing_query(c: &Component, entry: &str) -> Option<Query> {
    let sig = c.signature(entry)?;
    sig.params.is_empty().then(|| Query { callee: entry.to_string(), sig, args: vec![], mem: Memory::new() })
}

fn summary(c: &Component, s: &CState) -> String {
    fn go(c: &Component, s: &CState, out: &mut Vec<String>) {
        match (c, s) {
            (Component::Owl(i), CState::Owl(st)) => match i.position(st) {
                Some((f, pc)) => out.push(format!("{f}@{pc}")),
                None => out.push("owl".into()),
            },
            (Component::Host(h), CState::Host(st)) => {
                let fr = st.frames.last();
                out.push(fr.map_or("host".into(), |fr| format!("{}@{}", h.fns[fr.func].name, fr.pc)));
            }
            (Component::Linked(a, b), CState::Linked(ls)) => {
                for (side, st) in &ls.stack {
                    go(if *side == super::Side::Left { a } else { b }, st, out);
                }
            }
            _ => out.push("?".into()),
        }
    }
    let mut out = Vec::new();
    go(c, s, &mut out);
    out.join(" > ")
}

fn error_verdict(st: &Status) -> Option<Verdict> {
    match st {
        Status::Stuck(r) => Some(Verdict::Stuck { reason: *r }),
        Status::MemErr(e) => Some(mem_verdict(e)),
        Status::HostFault(m) => Some(Verdict::HostFault { message: m.clone() }),
        Status::Awaiting(q) => Some(Verdict::Unresolved { callee: q.callee.clone() }),
        _ => None,
    }
}

fn mem_verdict(e: &MemErr) -> Verdict {
    Verdict::MemErr { class: e.classify().to_string(), detail: e.to_string() }
}

struct Node {
    state: CState,
    parent: Option<usize>,
    depth: usize,
}

/// Explores every state reachable from the answers to `q`.
pub fn explore(c: &Component, cenv: &CompositeEnv, q: &Query, cfg: &ExploreConfig) -> ExploreReport {
    let mut report = ExploreReport {
        verdict: Verdict::Safe { bound: cfg.depth, truncated: false },
        witness: Vec::new(),
        leaking_finals: 0,
        finals: 0,
        results: BTreeSet::new(),
        states_visited: 0,
        max_depth: 0,
        events: 0,
    };
    let inits = match c.init(q) {
        Ok(v) => v,
        Err(e) => {
            report.verdict = Verdict::HostFault { message: e.0 };
            return report;
        }
    };
    let mut nodes: Vec<Node> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut queue = VecDeque::new();
    for s in inits {
        if seen.insert(fingerprint(&s)) {
            nodes.push(Node { state: s, parent: None, depth: 0 });
            queue.push_back(nodes.len() - 1);
        }
    }
    let mut truncated = false;
    let witness = |nodes: &Vec<Node>, mut i: usize| {
        let mut path = Vec::new();
        loop {
            path.push(summary(c, &nodes[i].state));
            match nodes[i].parent {
                Some(p) => i = p,
                None => break,
            }
        }
        path.reverse();
        path
    };

    while let Some(i) = queue.pop_front() {
        report.states_visited += 1;
        let depth = nodes[i].depth;
        report.max_depth = report.max_depth.max(depth);
        let status = c.status(&nodes[i].state);
        if let Status::Final(r) = &status {
            report.finals += 1;
            report.results.insert(r.value.to_string());
            if !r.mem.live_heap_blocks().is_empty() {
                report.leaking_finals += 1;
            }
            continue;
        }
        if let Some(v) = error_verdict(&status) {
            report.verdict = v;
            report.witness = witness(&nodes, i);
            return report;
        }
        if depth >= cfg.depth {
            truncated = true;
            continue;
        }
        for succ in c.step(&nodes[i].state) {
            report.events += succ.events.len();
            if let Some(mon) = &cfg.monitor {
                if let Some(v) = succ.events.iter().find_map(|ev: &Event| mon.check(cenv, ev).err()) {
                    report.verdict = Verdict::Violation { violation: v };
                    let mut w = witness(&nodes, i);
                    w.push(summary(c, &succ.state));
                    report.witness = w;
                    return report;
                }
            }
            if seen.insert(fingerprint(&succ.state)) {
                nodes.push(Node { state: succ.state, parent: Some(i), depth: depth + 1 });
                queue.push_back(nodes.len() - 1);
            }
        }
    }
    report.verdict = Verdict::Safe { bound: cfg.depth, truncated };
    report
}
