//! The `aldwych` command-line tool.
//!
//! ```text
//! aldwych <check|emit-core|emit-logic|run> <file.aw>
//!         [--seed N] [--max-steps N] [--trace] [--entry NAME] [--stage PASS]
//!         [-- args...]
//! ```
//!
//! * `check` parses, desugars, and mode-checks, printing diagnostics.
//! * `emit-core` prints the compiled core form, or with `--stage` the
//!   surface program as it stands after the named pass.
//! * `emit-logic` prints the clausal reading of the core form.
//! * `run` executes the program: `args` after `--` become the entry
//!   process's input stream, program output goes to standard output, and
//!   `--trace` writes the event log to standard error.
//!
//! A file that starts with the `%aldwych-core` header is read as core
//! directly, skipping the surface pipeline.
//!
//! Exit codes: 0 success; 1 the program has errors or the run faulted;
//! 2 the invocation itself is unusable; 3 the run deadlocked; 4 the run
//! hit the step limit.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::core::{self, CoreProgram};
use crate::desugar::{self, Stage};
use crate::logic::emit_logic;
use crate::parser;
use crate::pretty;
use crate::runtime::{run_program, Outcome};

pub const EXIT_OK: u8 = 0;
/// The program is at fault: diagnostics, or a runtime fault.
pub const EXIT_PROGRAM: u8 = 1;
/// The invocation is at fault: unreadable file, unknown stage.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DEADLOCK: u8 = 3;
pub const EXIT_STEP_LIMIT: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "aldwych", version, about = "Compile and run concurrent logic programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, desugar, and mode-check a program, printing diagnostics
    Check(Opts),
    /// Print the compiled core form of a program
    EmitCore(Opts),
    /// Print the clausal reading of a program
    EmitLogic(Opts),
    /// Compile a program and run it
    Run(Opts),
}

/// One option set shared by every subcommand; flags that a subcommand has
/// no use for are accepted and ignored so that invocations can switch
/// subcommand without reshuffling.
#[derive(Debug, Args)]
pub struct Opts {
    /// The program file
    pub file: PathBuf,

    /// Scheduler seed; the same seed replays the same run
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Stop a run after this many reductions
    #[arg(long, default_value_t = 1_000_000)]
    pub max_steps: u64,

    /// Write the event trace to standard error
    #[arg(long)]
    pub trace: bool,

    /// The process `run` starts
    #[arg(long, default_value = "main")]
    pub entry: String,

    /// Stop `emit-core` after this pass and print the surface form
    #[arg(long)]
    pub stage: Option<String>,

    /// Everything after `--` becomes the entry process's input stream
    #[arg(last = true)]
    pub args: Vec<String>,
}

/// Run one parsed invocation against the given writers and return the
/// process exit code.  Split out from [`main`] so tests can capture the
/// streams.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    match &cli.command {
        Command::Check(o) => cmd_check(o, stderr),
        Command::EmitCore(o) => cmd_emit_core(o, stdout, stderr),
        Command::EmitLogic(o) => cmd_emit_logic(o, stdout, stderr),
        Command::Run(o) => cmd_run(o, stdout, stderr),
    }
}

/// Entry point for the `aldwych` binary.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    std::process::ExitCode::from(execute(&cli, &mut out, &mut err))
}

// ───────────────────────────── subcommands ────────────────────────────────

fn cmd_check(opts: &Opts, stderr: &mut dyn Write) -> u8 {
    let (text, file) = match read_source(opts, stderr) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    match load_core(&text, &file, stderr) {
        Ok(_) => EXIT_OK,
        Err(code) => code,
    }
}

fn cmd_emit_core(opts: &Opts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let (text, file) = match read_source(opts, stderr) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    if let Some(name) = &opts.stage {
        let stage: Stage = match name.parse() {
            Ok(s) => s,
            Err(msg) => {
                let _ = writeln!(stderr, "aldwych: {msg}");
                return EXIT_USAGE;
            }
        };
        // `--stage convert` is the whole pipeline, which is the default.
        if stage != Stage::Convert {
            if is_core(&text) {
                let _ = writeln!(
                    stderr,
                    "aldwych: `--stage {stage}` shows a surface pass, but {file} is already core"
                );
                return EXIT_USAGE;
            }
            let ast = match parser::parse(&text) {
                Ok(p) => p,
                Err(d) => {
                    let _ = writeln!(stderr, "{}", d.plain_line(&file));
                    return EXIT_PROGRAM;
                }
            };
            return match desugar::expand_until(ast, stage) {
                Ok(p) => {
                    print_block(stdout, &pretty::program(&p));
                    EXIT_OK
                }
                Err(d) => {
                    let _ = writeln!(stderr, "{}", d.check_line(&file));
                    EXIT_PROGRAM
                }
            };
        }
    }
    match load_core(&text, &file, stderr) {
        Ok(core) => {
            print_block(stdout, &core.to_text());
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn cmd_emit_logic(opts: &Opts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let (text, file) = match read_source(opts, stderr) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    match load_core(&text, &file, stderr) {
        Ok(core) => {
            print_block(stdout, &emit_logic(&core));
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn cmd_run(opts: &Opts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let (text, file) = match read_source(opts, stderr) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let core = match load_core(&text, &file, stderr) {
        Ok(core) => core,
        Err(code) => return code,
    };
    let trace: Option<&mut dyn Write> = if opts.trace { Some(&mut *stderr) } else { None };
    let result = run_program(
        &core,
        &opts.entry,
        &opts.args,
        opts.seed,
        opts.max_steps,
        &mut *stdout,
        trace,
    );
    match result {
        Ok(report) => match report.outcome {
            Outcome::Quiesced => EXIT_OK,
            Outcome::Deadlocked(pids) => {
                let list: Vec<String> = pids.iter().map(|p| p.to_string()).collect();
                let _ = writeln!(
                    stderr,
                    "aldwych: deadlock: processes {} are suspended and nothing can wake them",
                    list.join(", ")
                );
                EXIT_DEADLOCK
            }
            Outcome::StepLimit => {
                let _ = writeln!(
                    stderr,
                    "aldwych: stopped after {} steps; raise --max-steps to run longer",
                    report.steps
                );
                EXIT_STEP_LIMIT
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "aldwych: {e}");
            EXIT_PROGRAM
        }
    }
}

// ──────────────────────────────── shared ──────────────────────────────────

fn read_source(opts: &Opts, stderr: &mut dyn Write) -> Result<(String, String), u8> {
    let file = opts.file.display().to_string();
    match std::fs::read_to_string(&opts.file) {
        Ok(text) => Ok((text, file)),
        Err(e) => {
            let _ = writeln!(stderr, "aldwych: cannot read {file}: {e}");
            Err(EXIT_USAGE)
        }
    }
}

fn is_core(text: &str) -> bool {
    text.trim_start().starts_with("%aldwych-core")
}

/// Take a source text to core: core files parse directly, surface files go
/// through the whole pipeline.  Diagnostics land on `stderr`; the error
/// carries the exit code.
fn load_core(text: &str, file: &str, stderr: &mut dyn Write) -> Result<CoreProgram, u8> {
    if is_core(text) {
        return core::parse_core(text).map_err(|d| {
            let _ = writeln!(stderr, "{}", d.plain_line(file));
            EXIT_PROGRAM
        });
    }
    let ast = parser::parse(text).map_err(|d| {
        let _ = writeln!(stderr, "{}", d.plain_line(file));
        EXIT_PROGRAM
    })?;
    match desugar::expand(ast) {
        Ok((core, warnings)) => {
            for w in &warnings {
                let _ = writeln!(stderr, "{}", w.check_line(file));
            }
            Ok(core)
        }
        Err(diags) => {
            for d in &diags {
                let _ = writeln!(stderr, "{}", d.check_line(file));
            }
            Err(EXIT_PROGRAM)
        }
    }
}

/// Print a multi-line emission, guaranteeing exactly one trailing newline.
fn print_block(stdout: &mut dyn Write, text: &str) {
    let _ = write!(stdout, "{}", text.trim_end_matches('\n'));
    let _ = writeln!(stdout);
}
