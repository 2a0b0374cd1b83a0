//! The compiler pipeline: parse, well-formedness, lowering, ownership
//! checking and drop elaboration.

use crate::ast::wf::wf_module;
use crate::ast::Module;
use crate::check::{check_module, OwnershipReport};
use crate::diag::Diagnostic;
use crate::elab::elaborate;
use crate::lower::lower;
use crate::parse::{parse_module, SourceFile};

#[derive(Clone, Debug)]
pub struct Compiled {
    pub surface: Module,
    pub ir: Module,
    pub report: OwnershipReport,
    pub elaborated: Module,
}

impl Compiled {
    pub fn is_checked(&self) -> bool {
        self.report.is_ok()
    }
}

/// Runs every pass. Parse and well-formedness errors stop the pipeline;
/// ownership errors are recorded in `report` and elaboration still runs.
pub fn compile(src: &SourceFile) -> Result<Compiled, Vec<Diagnostic>> {
    let surface = parse_module(src)?;
    compile_module(surface)
}

pub fn compile_str(text: &str) -> Result<Compiled, Vec<Diagnostic>> {
    compile(&SourceFile::new("main.owl", text))
}

pub fn compile_module(surface: Module) -> Result<Compiled, Vec<Diagnostic>> {
    let wf = wf_module(&surface);
    if !wf.is_empty() {
        return Err(wf);
    }
    let ir = lower(&surface);
    let report = check_module(&ir);
    let elaborated = elaborate(&ir);
    Ok(Compiled { surface, ir, report, elaborated })
}
