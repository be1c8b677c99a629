//! Schema definition language (`.vts`).
//!
//! Classificationists author schemas as text; [`parse`] turns text into a
//! [`SchemaDocument`], [`lower`] turns a document into a draft
//! [`Schema`](crate::schema::Schema), and [`serialize`] renders the canonical
//! text that is both the interchange format and the content-hash input.

mod ast;
mod lexer;
mod lower;
mod parser;
mod serialize;

pub use ast::*;
pub use lexer::is_identifier;
pub use lower::{document_from_schema, lower, LowerError, Lowered, SpanTable};
pub use parser::parse;
pub use serialize::{quote, serialize};

/// Parses and lowers in one step, flattening both error kinds into
/// diagnostics.
pub fn load_draft(text: &str) -> Result<Lowered, Vec<ParseDiagnostic>> {
    let doc = parse(text)?;
    lower(&doc).map_err(|errs| {
        errs.into_iter()
            .map(|e| ParseDiagnostic::error(e.error.to_string(), e.span))
            .collect()
    })
}
