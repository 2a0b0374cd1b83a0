//! Semantic linking of open components.
//!
//! A component is an Owlang module under the interpreter, a native host, or
//! the link of two components. A linked state is a stack of component
//! states: a call into the other side pushes, a final state pops and
//! resumes the caller. Queries nobody exports escape.

pub mod explore;
pub mod host;
pub mod manifest;
pub mod monitor;

use std::sync::Arc;

use crate::ast::Signature;
use crate::mem::MemErr;
use crate::sem::{Interp, Mode, OwlState, Query, Reply, StuckReason};

pub use host::{Host, HostState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Component {
    Owl(Arc<Interp>),
    Host(Arc<Host>),
    Linked(Box<Component>, Box<Component>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CState {
    Owl(OwlState),
    Host(HostState),
    Linked(LinkedState),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinkedState {
    pub stack: Vec<(Side, CState)>,
    /// Set when a cross call could not even start.
    pub fault: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Awaiting(Query),
    Final(Reply),
    Stuck(StuckReason),
    MemErr(MemErr),
    HostFault(String),
}

/// A call or return crossing between two linked components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Query(Query),
    /// The reply together with the query it answers.
    Reply(Query, Reply),
}

impl Event {
    pub fn query(&self) -> &Query {
        match self {
            Event::Query(q) | Event::Reply(q, _) => q,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Succ {
    pub state: CState,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct InitRefused(pub String);

pub fn link(a: Component, b: Component) -> Component {
    Component::Linked(Box::new(a), Box::new(b))
}

impl Component {
    pub fn exports(&self, name: &str) -> bool {
        match self {
            Component::Owl(i) => i.is_internal(name),
            Component::Host(h) => h.exports(name),
            Component::Linked(a, b) => a.exports(name) || b.exports(name),
        }
    }

    pub fn signature(&self, name: &str) -> Option<Signature> {
        match self {
            Component::Owl(i) => i.signature(name),
            Component::Host(h) => h.signature(name),
            Component::Linked(a, b) => a.signature(name).or_else(|| b.signature(name)),
        }
    }

    /// The Owlang interpreters inside this component.
    pub fn interps(&self) -> Vec<&Arc<Interp>> {
        match self {
            Component::Owl(i) => vec![i],
            Component::Host(_) => vec![],
            Component::Linked(a, b) => {
                let mut v = a.interps();
                v.extend(b.interps());
                v
            }
        }
    }

    fn side(&self, s: Side) -> &Component {
        match (self, s) {
            (Component::Linked(a, _), Side::Left) => a,
            (Component::Linked(_, b), Side::Right) => b,
            _ => unreachable!("side of an unlinked component"),
        }
    }

    /// Initial states for an incoming query, one per host choice.
    pub fn init(&self, q: &Query) -> Result<Vec<CState>, InitRefused> {
        match self {
            Component::Owl(i) => i.init(q).map(|s| vec![CState::Owl(s)]).map_err(|e| InitRefused(e.to_string())),
            Component::Host(h) => Ok(h.init(q)?.into_iter().map(CState::Host).collect()),
            Component::Linked(a, b) => {
                let side = if a.exports(&q.callee) {
                    Side::Left
                } else if b.exports(&q.callee) {
                    Side::Right
                } else {
                    return Err(InitRefused(format!("`{}` is not exported", q.callee)));
                };
                let inits = self.side(side).init(q)?;
                Ok(inits
                    .into_iter()
                    .map(|s| CState::Linked(LinkedState { stack: vec![(side, s)], fault: None }))
                    .collect())
            }
        }
    }

    pub fn status(&self, s: &CState) -> Status {
        match (self, s) {
            (Component::Owl(i), CState::Owl(st)) => match &st.mode {
                Mode::Running => Status::Running,
                Mode::Awaiting { .. } => Status::Awaiting(i.query(st).unwrap()),
                Mode::Final(v) => Status::Final(Reply { value: *v, mem: st.mem.clone() }),
                Mode::Stuck(r) => Status::Stuck(*r),
                Mode::MemErr(e) => Status::MemErr(*e),
            },
            (Component::Host(h), CState::Host(st)) => h.status(st),
            (Component::Linked(..), CState::Linked(ls)) => {
                if let Some(f) = &ls.fault {
                    return Status::HostFault(f.clone());
                }
                let (side, top) = ls.stack.last().expect("non-empty link stack");
                match self.side(*side).status(top) {
                    Status::Awaiting(q) if self.side(side.other()).exports(&q.callee) => Status::Running,
                    Status::Final(_) if ls.stack.len() > 1 => Status::Running,
                    st => st,
                }
            }
            _ => panic!("state does not belong to this component"),
        }
    }

    /// Successors of a running state.
    pub fn step(&self, s: &CState) -> Vec<Succ> {
        match (self, s) {
            (Component::Owl(i), CState::Owl(st)) => {
                let mut st = st.clone();
                i.step(&mut st);
                vec![Succ { state: CState::Owl(st), events: vec![] }]
            }
            (Component::Host(h), CState::Host(st)) => {
                h.step(st).into_iter().map(|st| Succ { state: CState::Host(st), events: vec![] }).collect()
            }
            (Component::Linked(..), CState::Linked(ls)) => self.step_linked(ls),
            _ => panic!("state does not belong to this component"),
        }
    }

    fn step_linked(&self, ls: &LinkedState) -> Vec<Succ> {
        let (side, top) = ls.stack.last().expect("non-empty link stack");
        let comp = self.side(*side);
        match comp.status(top) {
            Status::Running => comp
                .step(top)
                .into_iter()
                .map(|succ| {
                    let mut next = ls.clone();
                    next.stack.last_mut().unwrap().1 = succ.state;
                    Succ { state: CState::Linked(next), events: succ.events }
                })
                .collect(),
            Status::Awaiting(q) => {
                let callee = self.side(side.other());
                match callee.init(&q) {
                    Ok(inits) => inits
                        .into_iter()
                        .map(|s| {
                            let mut next = ls.clone();
                            next.stack.push((side.other(), s));
                            Succ { state: CState::Linked(next), events: vec![Event::Query(q.clone())] }
                        })
                        .collect(),
                    Err(e) => {
                        let mut next = ls.clone();
                        next.fault = Some(e.0);
                        vec![Succ { state: CState::Linked(next), events: vec![Event::Query(q)] }]
                    }
                }
            }
            Status::Final(r) => {
                let mut next = ls.clone();
                next.stack.pop();
                let (cside, caller) = next.stack.last_mut().expect("caller below the callee");
                let ccomp = self.side(*cside);
                let Status::Awaiting(q) = ccomp.status(caller) else { unreachable!("caller awaits a reply") };
                *caller = ccomp.resume(caller, r.clone());
                vec![Succ { state: CState::Linked(next), events: vec![Event::Reply(q, r)] }]
            }
            _ => vec![],
        }
    }

    /// Feeds a reply to a state awaiting one.
    pub fn resume(&self, s: &CState, r: Reply) -> CState {
        match (self, s) {
            (Component::Owl(i), CState::Owl(st)) => {
                let mut st = st.clone();
                i.resume(&mut st, r);
                CState::Owl(st)
            }
            (Component::Host(h), CState::Host(st)) => CState::Host(h.resume(st, r)),
            (Component::Linked(..), CState::Linked(ls)) => {
                let mut next = ls.clone();
                let (side, top) = next.stack.last_mut().unwrap();
                *top = self.side(*side).resume(top, r);
                CState::Linked(next)
            }
            _ => panic!("state does not belong to this component"),
        }
    }

    /// Number of component activations on the stack, counting nested links.
    pub fn depth(&self, s: &CState) -> usize {
        match (self, s) {
            (Component::Linked(..), CState::Linked(ls)) => {
                ls.stack.iter().map(|(side, st)| self.side(*side).depth(st)).sum()
            }
            _ => 1,
        }
    }

    /// Runs following the first host choice at every branch. Events are
    /// handed to `on_event` in order.
    pub fn run_first(
        &self,
        q: &Query,
        fuel: u64,
        on_event: &mut dyn FnMut(&Event),
    ) -> Result<(Status, CState), InitRefused> {
        let mut s = self.init(q)?.into_iter().next().ok_or_else(|| InitRefused("no initial state".into()))?;
        let mut left = fuel;
        loop {
            let st = self.status(&s);
            if st != Status::Running || left == 0 {
                return Ok((st, s));
            }
            left -= 1;
            let Some(succ) = self.step(&s).into_iter().next() else { return Ok((st, s)) };
            succ.events.iter().for_each(&mut *on_event);
            s = succ.state;
        }
    }
}
