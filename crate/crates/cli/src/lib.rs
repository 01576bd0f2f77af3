//! Library surface of the `nodal` CLI: model documents, the component
//! catalog, and report formatting. The binary in `main.rs` is a thin
//! wrapper over these.

pub mod build;
pub mod document;
pub mod report;
