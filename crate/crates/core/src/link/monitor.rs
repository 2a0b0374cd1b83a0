//! Boundary contracts checked on every query and reply.
//!
//! Contracts are stateless: a reply event carries the query it answers,
//! including the memory at the call, which is all the reply side needs.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::ast::{CompositeEnv, Ident};
use crate::mem::footprint::{footprint, is_duplicate_free};
use crate::mem::{unchanged_outside, BlockId, Perm, Value};
use crate::sem::{Query, Reply};

use super::Event;

/// Who broke the contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blame {
    Caller,
    Callee,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub blame: Blame,
    pub rule: String,
    pub callee: Ident,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = match self.blame {
            Blame::Caller => "caller",
            Blame::Callee => "callee",
        };
        write!(f, "{} ({who} of `{}` blamed): {}", self.rule, self.callee, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContractSpec {
    /// Accepts everything.
    Top,
    /// Ownership discipline at the boundary.
    Rsown,
    /// `hash(k, range)`: requires `range > 0`, ensures `0 <= result < range`.
    HashRange,
    /// Both must accept.
    Conj(Box<ContractSpec>, Box<ContractSpec>),
    /// Dispatch on the callee name; callees in no group are accepted.
    ByCallee(Vec<(BTreeSet<Ident>, ContractSpec)>),
}

impl ContractSpec {
    pub fn conj(a: ContractSpec, b: ContractSpec) -> ContractSpec {
        ContractSpec::Conj(Box::new(a), Box::new(b))
    }

    /// Parses a named contract: `top`, `rsown` or `hash-range`.
    pub fn named(name: &str) -> Option<ContractSpec> {
        match name {
            "top" => Some(ContractSpec::Top),
            "rsown" => Some(ContractSpec::Rsown),
            "hash-range" => Some(ContractSpec::HashRange),
            _ => None,
        }
    }

    pub fn check(&self, cenv: &CompositeEnv, ev: &Event) -> Result<(), Violation> {
        match self {
            ContractSpec::Top => Ok(()),
            ContractSpec::Rsown => rsown(cenv, ev),
            ContractSpec::HashRange => hash_range(ev),
            ContractSpec::Conj(a, b) => a.check(cenv, ev).and_then(|_| b.check(cenv, ev)),
            ContractSpec::ByCallee(groups) => groups
                .iter()
                .find(|(names, _)| names.contains(&ev.query().callee))
                .map_or(Ok(()), |(_, c)| c.check(cenv, ev)),
        }
    }
}

fn violation(blame: Blame, rule: &str, q: &Query, detail: String) -> Violation {
    Violation { blame, rule: rule.to_string(), callee: q.callee.clone(), detail }
}

/// Concatenated footprints of the arguments in the query memory.
fn args_footprint(cenv: &CompositeEnv, q: &Query) -> Result<Vec<BlockId>, String> {
    let mut fp = Vec::new();
    for (i, (t, v)) in q.sig.params.iter().zip(&q.args).enumerate() {
        match footprint(&q.mem, cenv, t, *v) {
            Ok(f) => fp.extend(f),
            Err(e) => return Err(format!("argument {i}: {e}")),
        }
    }
    Ok(fp)
}

fn all_freeable(m: &crate::mem::Memory, fp: &[BlockId]) -> Option<BlockId> {
    fp.iter().copied().find(|b| !m.has_perm_all(*b, Perm::Freeable))
}

pub fn rsown(cenv: &CompositeEnv, ev: &Event) -> Result<(), Violation> {
    match ev {
        Event::Query(q) => {
            let fp = args_footprint(cenv, q).map_err(|d| violation(Blame::Caller, "args-not-wt", q, d))?;
            if !is_duplicate_free(&fp) {
                return Err(violation(Blame::Caller, "dup-footprint", q, "arguments share a block".into()));
            }
            if let Some(b) = all_freeable(&q.mem, &fp) {
                return Err(violation(Blame::Caller, "args-not-wt", q, format!("b{b} is not freeable")));
            }
            Ok(())
        }
        Event::Reply(q, r) => rsown_reply(cenv, q, r),
    }
}

fn rsown_reply(cenv: &CompositeEnv, q: &Query, r: &Reply) -> Result<(), Violation> {
    // The query was checked when it was made; an ill-formed one leaves
    // nothing to hold the callee to.
    let Ok(fp) = args_footprint(cenv, q) else { return Ok(()) };
    if !unchanged_outside(&q.mem, &r.mem, &fp) {
        return Err(violation(Blame::Callee, "frame-touched", q, "memory outside the arguments changed".into()));
    }
    let rfp = footprint(&r.mem, cenv, &q.sig.ret, r.value)
        .map_err(|e| violation(Blame::Callee, "ret-not-wt", q, e.to_string()))?;
    if !is_duplicate_free(&rfp) {
        return Err(violation(Blame::Callee, "ret-not-wt", q, "result shares a block".into()));
    }
    if let Some(b) = all_freeable(&r.mem, &rfp) {
        return Err(violation(Blame::Callee, "ret-not-wt", q, format!("b{b} is not freeable")));
    }
    let fresh_from = q.mem.next_block();
    if let Some(b) = rfp.iter().find(|b| !fp.contains(b) && **b < fresh_from) {
        return Err(violation(
            Blame::Callee,
            "stale-fresh-block",
            q,
            format!("b{b} existed before the call but was not passed in"),
        ));
    }
    Ok(())
}

fn hash_range(ev: &Event) -> Result<(), Violation> {
    let q = ev.query();
    let Some(Value::Int(range)) = q.args.get(1).copied() else {
        return Err(violation(Blame::Caller, "hash-range-pre", q, "range is not an integer".into()));
    };
    match ev {
        Event::Query(_) if range <= 0 => {
            Err(violation(Blame::Caller, "hash-range-pre", q, format!("range {range} is not positive")))
        }
        Event::Query(_) => Ok(()),
        Event::Reply(_, r) => match r.value {
            Value::Int(h) if (0..range).contains(&h) => Ok(()),
            v => Err(violation(Blame::Callee, "hash-range-post", q, format!("result {v} is outside [0, {range})"))),
        },
    }
}
