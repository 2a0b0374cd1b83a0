//! Verifying compiler and safety harness for Owlang, a Rust subset with
//! `Box` ownership, structs, enums and moves but no references.

pub mod ast;
pub mod cfg;
pub mod cgen;
pub mod check;
pub mod dataflow;
pub mod diag;
pub mod elab;
pub mod link;
pub mod lower;
pub mod mem;
pub mod ownership;
pub mod parse;
pub mod pipeline;
pub mod sem;
