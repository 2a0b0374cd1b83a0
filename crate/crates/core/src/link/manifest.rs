//! Host manifests: which native functions exist, at which Owlang types,
//! with which choices and contracts.
//!
//! ```toml
//! [[host]]
//! module = "buks"
//! name = "main"
//! signature = "fn() -> i32"
//! native = "buks_main"
//! choices = [1, 5, 9]
//!
//! [[contract]]
//! function = "hash"
//! spec = "hash-range"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::ast::{BaseType, CompositeEnv, Ident, Signature, Type, F32};
use crate::mem::Value;
use crate::sem::{value_has_type, Interp};

use super::host::{lookup_native, Host, HostFn};
use super::monitor::ContractSpec;
use super::{link, Component};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("host `{0}`: bad signature: {1}")]
    Signature(Ident, String),
    #[error("host `{0}`: unknown native `{1}`")]
    Native(Ident, String),
    #[error("host `{0}`: choice {1} does not have the return type")]
    Choice(Ident, usize),
    #[error("unknown contract `{0}`")]
    Contract(String),
    #[error("`{0}` is exported by more than one component")]
    Duplicate(Ident),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub host: Vec<HostEntry>,
    #[serde(default)]
    pub contract: Vec<ContractEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostEntry {
    #[serde(default = "default_module")]
    pub module: String,
    pub name: Ident,
    pub signature: String,
    pub native: String,
    #[serde(default)]
    pub choices: Vec<toml::Value>,
    pub contract: Option<String>,
}

fn default_module() -> String {
    "host".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractEntry {
    pub function: Ident,
    pub spec: String,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, ManifestError> {
        Ok(toml::from_str(text)?)
    }

    /// Contracts keyed by function, from both `[[contract]]` tables and
    /// `contract` fields of host entries.
    pub fn contracts(&self) -> Result<Vec<(Ident, ContractSpec)>, ManifestError> {
        let named = self
            .contract
            .iter()
            .map(|c| (c.function.clone(), c.spec.clone()))
            .chain(self.host.iter().filter_map(|h| h.contract.clone().map(|s| (h.name.clone(), s))));
        named.map(|(f, s)| ContractSpec::named(&s).map(|c| (f, c)).ok_or(ManifestError::Contract(s))).collect()
    }

    /// `rsown` conjoined with the per-function contracts.
    pub fn monitor(&self) -> Result<ContractSpec, ManifestError> {
        let groups = self.contracts()?.into_iter().map(|(f, c)| (BTreeSet::from([f]), c)).collect::<Vec<_>>();
        Ok(ContractSpec::conj(ContractSpec::Rsown, ContractSpec::ByCallee(groups)))
    }

    /// Hosts in order of first appearance of their module name.
    pub fn hosts(&self, cenv: &CompositeEnv) -> Result<Vec<Host>, ManifestError> {
        let mut hosts: Vec<Host> = Vec::new();
        for e in &self.host {
            let sig = parse_signature(&e.signature, cenv).map_err(|m| ManifestError::Signature(e.name.clone(), m))?;
            let native =
                lookup_native(&e.native).ok_or_else(|| ManifestError::Native(e.name.clone(), e.native.clone()))?;
            let choices = e
                .choices
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    toml_value(v)
                        .filter(|v| value_has_type(&sig.ret, *v))
                        .ok_or(ManifestError::Choice(e.name.clone(), i))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let f = HostFn { name: e.name.clone(), sig, native, native_name: e.native.clone(), choices };
            match hosts.iter_mut().find(|h| h.name == e.module) {
                Some(h) => h.fns.push(f),
                None => hosts.push(Host::new(&e.module).with(f)),
            }
        }
        Ok(hosts)
    }
}

fn toml_value(v: &toml::Value) -> Option<Value> {
    match v {
        toml::Value::Integer(n) => i32::try_from(*n).ok().map(Value::Int),
        toml::Value::Boolean(b) => Some(Value::Bool(*b)),
        toml::Value::Float(x) => Some(Value::Float(F32(*x as f32))),
        _ => None,
    }
}

/// Links an Owlang module with manifest hosts: `owl`, then each host
/// module nested to the right. Every host learns the signatures of all
/// other exported functions so it can call them.
pub fn link_program(interp: Arc<Interp>, manifest: &Manifest) -> Result<Component, ManifestError> {
    let cenv = interp.cenv().clone();
    let mut hosts = manifest.hosts(&cenv)?;
    let mut exported: BTreeMap<Ident, Signature> = BTreeMap::new();
    for f in interp.module().functions.iter().filter(|f| !f.is_external()) {
        exported.insert(f.name.clone(), f.signature());
    }
    for h in &hosts {
        for f in &h.fns {
            if exported.insert(f.name.clone(), f.sig.clone()).is_some() {
                return Err(ManifestError::Duplicate(f.name.clone()));
            }
        }
    }
    for h in &mut hosts {
        h.imports = exported.iter().filter(|(n, _)| !h.exports(n)).map(|(n, s)| (n.clone(), s.clone())).collect();
    }
    let mut rest: Option<Component> = None;
    for h in hosts.into_iter().rev() {
        let c = Component::Host(Arc::new(h));
        rest = Some(match rest {
            None => c,
            Some(r) => link(c, r),
        });
    }
    let owl = Component::Owl(interp);
    Ok(match rest {
        None => owl,
        Some(r) => link(owl, r),
    })
}

/// Parses `fn(T, ..) -> R`; a missing return type means unit.
pub fn parse_signature(s: &str, cenv: &CompositeEnv) -> Result<Signature, String> {
    let s = s.trim();
    let rest = s.strip_prefix("fn").ok_or("expected `fn(..)`")?.trim_start();
    let rest = rest.strip_prefix('(').ok_or("expected `(`")?;
    let close = matching_paren(rest).ok_or("unbalanced parentheses")?;
    let (params_src, tail) = (&rest[..close], rest[close + 1..].trim());
    let params = split_top(params_src)
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_type(p.trim(), cenv))
        .collect::<Result<Vec<_>, _>>()?;
    let ret = if tail.is_empty() {
        Type::UNIT
    } else {
        parse_type(tail.strip_prefix("->").ok_or("expected `->`")?.trim(), cenv)?
    };
    Ok(Signature { params, ret })
}

fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' if depth == 0 => return Some(i),
            ')' => depth -= 1,
            _ => {}
        }
    }
    None
}

fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '<' | '(' => depth += 1,
            '>' | ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

pub fn parse_type(s: &str, cenv: &CompositeEnv) -> Result<Type, String> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("Box<").and_then(|r| r.strip_suffix('>')) {
        return Ok(Type::boxed(parse_type(inner, cenv)?));
    }
    Ok(match s {
        "()" => Type::Base(BaseType::Unit),
        "bool" => Type::BOOL,
        "i32" => Type::I32,
        "f32" => Type::F32,
        name => cenv.type_named(name).ok_or_else(|| format!("unknown type `{name}`"))?,
    })
}
