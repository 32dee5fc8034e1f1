//! Compiler front end and concurrent runtime for Aldwych, a committed-choice
//! concurrent logic language with futures, streams, and object handles.
//!
//! The crate is organized as a pipeline:
//!
//! * [`lexer`] / [`parser`] read surface programs (`.aw` files) into [`ast`].
//! * [`desugar`] rewrites the tree through a fixed sequence of passes until
//!   only the small core language remains; see [`desugar::expand`] for the
//!   order.  Each pass is public and can be run on its own.
//! * [`core`] is the flat committed-choice language the runtime executes:
//!   guarded rules over tuples, cons cells, and single-assignment variables.
//! * [`modecheck`] enforces the single-writer discipline and related rules.
//! * [`runtime`] reduces core programs with a deterministic seeded scheduler.
//! * [`logic`] pretty-prints core programs as logic-programming clauses.
//! * [`cli`] implements the `aldwych` command line on top of the above.
//!
//! The `examples/` directory shows one end-to-end use per capability; start
//! with `run_merge` and `desugar_stages`.

pub mod ast;
pub mod cli;
pub mod core;
pub mod desugar;
pub mod diag;
pub mod lexer;
pub mod logic;
pub mod modecheck;
pub mod parser;
pub mod pretty;
pub mod runtime;
pub mod span;
pub mod token;
