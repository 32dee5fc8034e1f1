//! Reducing core programs.
//!
//! A program runs as a set of processes over a single-assignment store.
//! Each step picks one runnable process with a seeded generator, tries its
//! rules in group order, and either commits to one rule — binding cells,
//! spawning processes — or suspends the process on the unbound cells that
//! stood in the way.  Binding a cell wakes exactly the processes suspended
//! on it.  Commitment is final: once a process reduces by one rule, no
//! other rule of it can ever fire.
//!
//! The scheduler is logically concurrent but runs as one seeded sequential
//! interleaving, so the same seed replays the same run byte for byte.  A
//! later rule group is tried only once every rule of the earlier groups
//! has definitively failed, which is what the surface language's
//! `:`-separated otherwise groups compile to.
//!
//! Arithmetic is exact and unbounded.  The arithmetic and comparison
//! procedures (`add`, `lt`, ...) are built in but behave like ordinary
//! processes: they suspend until their operands are bound and write their
//! one output.  Equality statements between two variables chain cells
//! instead of copying; dereferencing follows the chain.

use std::collections::HashMap;
use std::io::Write;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{ArithOp, RelOp};
use crate::core::{CoreGuard, CorePat, CoreProc, CoreProgram, CoreStmt, CoreTerm};
use crate::desugar::expressions::{arith_proc, rel_proc};

pub type CellId = usize;
pub type Pid = usize;

/// The tuple tag every stream element hides under.  `:` cannot begin a
/// surface or core identifier, so user tuples never collide with it.
const CONS: &str = ":";
/// The constant that closes a stream.
const NIL: &str = "$";

// ─────────────────────────────── values ───────────────────────────────────

/// A runtime value: a constant, an exact integer, a tagged tuple, or a
/// reference into the store.  Streams are `:`-tagged pairs ending in `$`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(String),
    Num(BigInt),
    Tuple(String, Vec<Term>),
    Ref(CellId),
}

impl Term {
    pub fn nil() -> Term {
        Term::Const(NIL.to_string())
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::Tuple(CONS.to_string(), vec![head, tail])
    }

    fn as_cons(&self) -> Option<(&Term, &Term)> {
        match self {
            Term::Tuple(tag, args) if tag == CONS && args.len() == 2 => Some((&args[0], &args[1])),
            _ => None,
        }
    }

    fn is_nil(&self) -> bool {
        matches!(self, Term::Const(c) if c == NIL)
    }

    /// Canonical text: numbers in decimal, identifier-shaped constants
    /// bare and all others quoted, tuples as `tag(...)`, streams with `:`
    /// and `$`.  Unresolved references print as `c<id>`.
    pub fn show(&self) -> String {
        let mut s = String::new();
        self.show_into(&mut s);
        s
    }

    fn show_into(&self, s: &mut String) {
        match self {
            Term::Const(c) if c == NIL => s.push('$'),
            Term::Const(c) => {
                let bare = c
                    .chars()
                    .next()
                    .map_or(false, |f| f.is_ascii_lowercase())
                    && c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
                if bare {
                    s.push_str(c);
                } else {
                    s.push('\'');
                    s.push_str(c);
                    s.push('\'');
                }
            }
            Term::Num(n) => s.push_str(&n.to_string()),
            Term::Tuple(tag, args) if tag == CONS && args.len() == 2 => {
                if args[0].as_cons().is_some() {
                    s.push('(');
                    args[0].show_into(s);
                    s.push(')');
                } else {
                    args[0].show_into(s);
                }
                s.push_str(" : ");
                args[1].show_into(s);
            }
            Term::Tuple(tag, args) => {
                s.push_str(tag);
                s.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    a.show_into(s);
                }
                s.push(')');
            }
            Term::Ref(id) => {
                s.push('c');
                s.push_str(&id.to_string());
            }
        }
    }
}

// ──────────────────────────────── store ───────────────────────────────────

#[derive(Debug)]
enum Cell {
    /// Not yet written; remembers who is waiting for it.
    Unbound(Vec<Pid>),
    Bound(Term),
}

#[derive(Debug, Default)]
struct Store {
    cells: Vec<Cell>,
}

impl Store {
    fn alloc(&mut self) -> CellId {
        self.cells.push(Cell::Unbound(Vec::new()));
        self.cells.len() - 1
    }

    fn alloc_bound(&mut self, t: Term) -> CellId {
        self.cells.push(Cell::Bound(t));
        self.cells.len() - 1
    }

    /// Follow the alias chain to its representative cell.
    fn root(&self, mut id: CellId) -> CellId {
        loop {
            match &self.cells[id] {
                Cell::Bound(Term::Ref(next)) => id = *next,
                _ => return id,
            }
        }
    }

    /// The head value of `t`: bound cells are seen through, an unbound
    /// cell shows as a reference to its representative.
    fn deref(&self, t: &Term) -> Term {
        match t {
            Term::Ref(id) => {
                let r = self.root(*id);
                match &self.cells[r] {
                    Cell::Bound(v) => v.clone(),
                    Cell::Unbound(_) => Term::Ref(r),
                }
            }
            other => other.clone(),
        }
    }

    /// Write `value` to the cell, returning the processes to wake.  An
    /// alias back to the same representative carries no information and
    /// is dropped, which also keeps chains acyclic.
    fn bind(&mut self, id: CellId, value: Term) -> Result<(CellId, Vec<Pid>), ()> {
        let r = self.root(id);
        if let Term::Ref(v) = &value {
            if self.root(*v) == r {
                return Ok((r, Vec::new()));
            }
        }
        match std::mem::replace(&mut self.cells[r], Cell::Bound(value)) {
            Cell::Unbound(waiters) => Ok((r, waiters)),
            Cell::Bound(old) => {
                self.cells[r] = Cell::Bound(old);
                Err(())
            }
        }
    }

    fn wait(&mut self, id: CellId, pid: Pid) {
        let r = self.root(id);
        if let Cell::Unbound(waiters) = &mut self.cells[r] {
            if !waiters.contains(&pid) {
                waiters.push(pid);
            }
        }
    }

    /// Fully resolve `t`; `None` if any part is still unbound.
    fn ground(&self, t: &Term) -> Option<Term> {
        match self.deref(t) {
            Term::Ref(_) => None,
            Term::Tuple(tag, args) => {
                let args = args.iter().map(|a| self.ground(a)).collect::<Option<_>>()?;
                Some(Term::Tuple(tag, args))
            }
            other => Some(other),
        }
    }
}

// ────────────────────────────── processes ─────────────────────────────────

/// What a process does when it runs.
#[derive(Debug, Clone, Copy)]
enum Job {
    /// Reduce by the rules of the program's `idx`-th procedure.
    Rules(usize),
    Arith(ArithOp),
    Rel(RelOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Runnable,
    Suspended,
    Reduced,
}

#[derive(Debug)]
struct Process {
    name: String,
    job: Job,
    /// Input values followed by output references.
    args: Vec<Term>,
    status: Status,
}

// ─────────────────────────────── tracing ──────────────────────────────────

/// One line of the trace: `SEQ KIND PID DETAIL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Spawn,
    Reduce,
    Bind,
    Suspend,
    Wake,
    Fault,
    Quiesce,
    Deadlock,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Spawn => "SPAWN",
            EventKind::Reduce => "REDUCE",
            EventKind::Bind => "BIND",
            EventKind::Suspend => "SUSPEND",
            EventKind::Wake => "WAKE",
            EventKind::Fault => "FAULT",
            EventKind::Quiesce => "QUIESCE",
            EventKind::Deadlock => "DEADLOCK",
        }
    }
}

// ─────────────────────────────── outcomes ─────────────────────────────────

/// How a run ended, if it did not fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Every process reduced; nothing is left.
    Quiesced,
    /// Processes remain but all are suspended; their pids, ascending.
    Deadlocked(Vec<Pid>),
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub outcome: Outcome,
    pub steps: u64,
}

/// Faults that abort the whole run.  A double write can only mean an
/// unchecked program reached the runtime; checked programs cannot produce
/// one.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("entry process `{0}` is not defined")]
    NoEntry(String),
    #[error("process {pid} (`{proc}`) wrote cell c{cell} twice")]
    DoubleWrite { proc: String, pid: Pid, cell: CellId },
    #[error("no rule of `{proc}` can apply for process {pid}")]
    NoRule { proc: String, pid: Pid },
    #[error("`{proc}` is called but defined nowhere")]
    UnknownProcess { proc: String },
}

// ──────────────────────────────── system ──────────────────────────────────

type Env = HashMap<String, Term>;

/// Three-valued result of matching or guard evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    Yes,
    No,
    /// Cannot be decided until more cells are bound.
    Maybe,
}

impl Tri {
    fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::No, _) | (_, Tri::No) => Tri::No,
            (Tri::Maybe, _) | (_, Tri::Maybe) => Tri::Maybe,
            _ => Tri::Yes,
        }
    }
}

/// Per-rule verdict inside `try_match`.
#[derive(Debug)]
enum RuleCheck {
    Commit(Env),
    Fail,
    /// Unbound cells this rule still needs.
    Wait(Vec<CellId>),
}

/// What `try_match` decided for a whole process.
#[derive(Debug)]
enum Decision {
    Commit { flat: usize, group: usize, rule: usize, env: Env },
    Suspend(Vec<CellId>),
    FailAll,
}

/// One executing program: the store, the processes, and the scheduler
/// state.  Mutating calls must not overlap; distinct systems are fully
/// independent.
pub struct System<'p, 'io> {
    program: &'p CoreProgram,
    store: Store,
    processes: Vec<Process>,
    runnables: Vec<Pid>,
    rng: ChaCha8Rng,
    seq: u64,
    steps: u64,
    /// Position in the watched output stream; `None` when exhausted.
    watch: Option<Term>,
    out: &'io mut dyn Write,
    trace: Option<&'io mut dyn Write>,
}

impl<'p, 'io> System<'p, 'io> {
    pub fn new(
        program: &'p CoreProgram,
        seed: u64,
        out: &'io mut dyn Write,
        trace: Option<&'io mut dyn Write>,
    ) -> Self {
        System {
            program,
            store: Store::default(),
            processes: Vec::new(),
            runnables: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seq: 0,
            steps: 0,
            watch: None,
            out,
            trace,
        }
    }

    fn event(&mut self, kind: EventKind, pid: Pid, detail: &str) {
        self.seq += 1;
        if let Some(t) = self.trace.as_deref_mut() {
            let _ = writeln!(t, "{} {} {} {}", self.seq, kind.name(), pid, detail);
        }
    }

    // ── spawning ──

    fn job_for(&self, proc: &str) -> Result<Job, RunError> {
        if let Some(idx) = self.program.procs.iter().position(|p| p.name == proc) {
            return Ok(Job::Rules(idx));
        }
        for op in [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div] {
            if arith_proc(op) == proc {
                return Ok(Job::Arith(op));
            }
        }
        for op in [RelOp::Lt, RelOp::Gt, RelOp::Le, RelOp::Ge, RelOp::Eq, RelOp::Ne] {
            if rel_proc(op) == proc {
                return Ok(Job::Rel(op));
            }
        }
        Err(RunError::UnknownProcess { proc: proc.to_string() })
    }

    fn spawn(&mut self, name: &str, args: Vec<Term>) -> Result<Pid, RunError> {
        let job = self.job_for(name)?;
        self.processes.push(Process { name: name.to_string(), job, args, status: Status::Runnable });
        let pid = self.processes.len();
        self.runnables.push(pid);
        self.event(EventKind::Spawn, pid, name);
        Ok(pid)
    }

    /// Start the entry process.  Its first input is the argument stream
    /// (a `$`-terminated stream of constants); any further inputs stay
    /// unbound.  The first output becomes the watched stream whose
    /// elements are printed as they become ground.
    pub fn spawn_entry(&mut self, entry: &str, argv: &[String]) -> Result<Pid, RunError> {
        let proc = self
            .program
            .proc(entry)
            .ok_or_else(|| RunError::NoEntry(entry.to_string()))?;
        let stream = argv
            .iter()
            .rev()
            .fold(Term::nil(), |t, a| Term::cons(Term::Const(a.clone()), t));
        let mut args = Vec::new();
        for (i, _) in proc.ins.iter().enumerate() {
            let cell = if i == 0 {
                self.store.alloc_bound(stream.clone())
            } else {
                self.store.alloc()
            };
            args.push(Term::Ref(cell));
        }
        let mut outs = Vec::new();
        for _ in &proc.outs {
            outs.push(Term::Ref(self.store.alloc()));
        }
        self.watch = outs.first().cloned();
        args.extend(outs);
        self.spawn(entry, args)
    }

    // ── matching ──

    fn match_pat(&self, t: &Term, pat: &CorePat, env: &mut Env, wait: &mut Vec<CellId>) -> Tri {
        let v = self.store.deref(t);
        match pat {
            CorePat::Capture(x) | CorePat::ReplySlot(x) => {
                env.insert(x.clone(), v);
                Tri::Yes
            }
            CorePat::As(x, inner) => {
                env.insert(x.clone(), v.clone());
                self.match_pat(&v, inner, env, wait)
            }
            CorePat::Const(c) => match v {
                Term::Const(ref d) if d == c => Tri::Yes,
                Term::Ref(id) => {
                    wait.push(id);
                    Tri::Maybe
                }
                _ => Tri::No,
            },
            CorePat::Num(n) => match v {
                Term::Num(ref m) if m == n => Tri::Yes,
                Term::Ref(id) => {
                    wait.push(id);
                    Tri::Maybe
                }
                _ => Tri::No,
            },
            CorePat::Nil => match v {
                ref t if t.is_nil() => Tri::Yes,
                Term::Ref(id) => {
                    wait.push(id);
                    Tri::Maybe
                }
                _ => Tri::No,
            },
            CorePat::Cons(hp, tp) => match v {
                Term::Ref(id) => {
                    wait.push(id);
                    Tri::Maybe
                }
                ref other => match other.as_cons() {
                    Some((h, tl)) => {
                        // Keep walking past an unbound spot: a later
                        // definite mismatch still fails the rule.
                        let a = self.match_pat(h, hp, env, wait);
                        if a == Tri::No {
                            return Tri::No;
                        }
                        a.and(self.match_pat(tl, tp, env, wait))
                    }
                    None => Tri::No,
                },
            },
            CorePat::Tuple(tag, pats) => match v {
                Term::Ref(id) => {
                    wait.push(id);
                    Tri::Maybe
                }
                Term::Tuple(ref vt, ref vs) if vt == tag && vs.len() == pats.len() => {
                    let mut acc = Tri::Yes;
                    for (sub, p) in vs.iter().zip(pats) {
                        acc = acc.and(self.match_pat(sub, p, env, wait));
                        if acc == Tri::No {
                            return Tri::No;
                        }
                    }
                    acc
                }
                _ => Tri::No,
            },
        }
    }

    /// Evaluate a guard operand: a number, a constant, or not yet known.
    /// Arithmetic evaluates in place; anything outside its domain (or a
    /// division by zero) makes the guard definitively false rather than
    /// a fault, so another rule can still apply.
    fn guard_value(&self, t: &CoreTerm, env: &Env, wait: &mut Vec<CellId>) -> GuardVal {
        match t {
            CoreTerm::Num(n) => GuardVal::Num(n.clone()),
            CoreTerm::Const(c) => GuardVal::Atom(c.clone()),
            CoreTerm::Nil => GuardVal::Atom(NIL.to_string()),
            CoreTerm::Var(x) => match env.get(x) {
                None => GuardVal::Unknown,
                Some(t) => match self.store.deref(t) {
                    Term::Ref(id) => {
                        wait.push(id);
                        GuardVal::Unknown
                    }
                    Term::Num(n) => GuardVal::Num(n),
                    Term::Const(c) => GuardVal::Atom(c),
                    Term::Tuple(..) => GuardVal::Bad,
                },
            },
            CoreTerm::Tuple(tag, args) if args.len() == 2 => {
                let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
                    .into_iter()
                    .find(|op| arith_proc(*op) == tag);
                let Some(op) = op else { return GuardVal::Bad };
                let l = self.guard_value(&args[0], env, wait);
                let r = self.guard_value(&args[1], env, wait);
                match (l, r) {
                    (GuardVal::Num(a), GuardVal::Num(b)) => match arith(op, &a, &b) {
                        Some(n) => GuardVal::Num(n),
                        None => GuardVal::Bad,
                    },
                    // A bad operand can never become good, so it beats
                    // a merely unknown one.
                    (GuardVal::Bad, _) | (_, GuardVal::Bad) => GuardVal::Bad,
                    (GuardVal::Unknown, _) | (_, GuardVal::Unknown) => GuardVal::Unknown,
                    _ => GuardVal::Bad,
                }
            }
            CoreTerm::Tuple(..) | CoreTerm::Cons(..) => GuardVal::Bad,
        }
    }

    fn eval_guard(&self, g: &CoreGuard, env: &Env, wait: &mut Vec<CellId>) -> Tri {
        let l = self.guard_value(&g.lhs, env, wait);
        let r = self.guard_value(&g.rhs, env, wait);
        compare(g.op, &l, &r)
    }

    fn check_rule(
        &self,
        rule: &crate::core::CoreRule,
        base: &Env,
    ) -> RuleCheck {
        let mut env = base.clone();
        let mut wait = Vec::new();
        let mut acc = Tri::Yes;
        for (name, pat) in &rule.matches {
            let t = match env.get(name) {
                Some(t) => t.clone(),
                // An input the header does not bind can never match.
                None => return RuleCheck::Fail,
            };
            acc = acc.and(self.match_pat(&t, pat, &mut env, &mut wait));
            if acc == Tri::No {
                return RuleCheck::Fail;
            }
        }
        for g in &rule.guards {
            acc = acc.and(self.eval_guard(g, &env, &mut wait));
            if acc == Tri::No {
                return RuleCheck::Fail;
            }
        }
        match acc {
            Tri::Yes => RuleCheck::Commit(env),
            _ => RuleCheck::Wait(wait),
        }
    }

    fn try_match(&mut self, pid: Pid, proc: &CoreProc) -> Decision {
        let mut base = Env::new();
        let args = &self.processes[pid - 1].args;
        for (name, t) in proc.ins.iter().chain(&proc.outs).zip(args) {
            base.insert(name.clone(), t.clone());
        }
        let mut committable: Vec<(usize, usize, usize, Env)> = Vec::new();
        let mut frontier: Vec<CellId> = Vec::new();
        let mut prior_groups_failed = true;
        let mut flat = 0;
        for (gi, group) in proc.groups.iter().enumerate() {
            let mut group_failed = true;
            for (ri, rule) in group.iter().enumerate() {
                flat += 1;
                match self.check_rule(rule, &base) {
                    RuleCheck::Fail => {}
                    RuleCheck::Wait(cells) => {
                        group_failed = false;
                        frontier.extend(cells);
                    }
                    RuleCheck::Commit(env) => {
                        group_failed = false;
                        // A later group stays gated until every earlier
                        // rule has definitively failed.
                        if prior_groups_failed {
                            committable.push((flat, gi, ri, env));
                        }
                    }
                }
            }
            if !group_failed {
                prior_groups_failed = false;
            }
        }
        if !committable.is_empty() {
            let pick = self.rng.gen_range(0..committable.len());
            let (flat, group, rule, env) = committable.swap_remove(pick);
            return Decision::Commit { flat, group, rule, env };
        }
        frontier.sort_unstable();
        frontier.dedup();
        if frontier.is_empty() {
            Decision::FailAll
        } else {
            Decision::Suspend(frontier)
        }
    }

    // ── committing ──

    fn wake_all(&mut self, woken: Vec<Pid>, cell: CellId) {
        for w in woken {
            if self.processes[w - 1].status == Status::Suspended {
                self.processes[w - 1].status = Status::Runnable;
                self.runnables.push(w);
                self.event(EventKind::Wake, w, &format!("c{cell}"));
            }
        }
    }

    /// Bind the cell behind `var` (allocating it if this rule introduced
    /// the name), trace the write, and wake the readers.
    fn assign(&mut self, pid: Pid, env: &mut Env, var: &str, value: Term) -> Result<(), RunError> {
        let target = lookup_or_alloc(&mut self.store, env, var);
        let Term::Ref(id) = target else {
            // The name was already a value: someone wrote it before us.
            return Err(RunError::DoubleWrite {
                proc: self.processes[pid - 1].name.clone(),
                pid,
                cell: 0,
            });
        };
        match self.store.bind(id, value) {
            Ok((root, woken)) => {
                // A dropped self-alias leaves the cell untouched; there
                // is nothing to report then.
                if let Cell::Bound(t) = &self.store.cells[root] {
                    let detail = format!("c{root}={}", t.show());
                    self.event(EventKind::Bind, pid, &detail);
                }
                self.wake_all(woken, root);
                Ok(())
            }
            Err(()) => Err(RunError::DoubleWrite {
                proc: self.processes[pid - 1].name.clone(),
                pid,
                cell: id,
            }),
        }
    }

    fn commit(
        &mut self,
        pid: Pid,
        flat: usize,
        group: usize,
        rule: usize,
        mut env: Env,
    ) -> Result<(), RunError> {
        let Job::Rules(pidx) = self.processes[pid - 1].job else { unreachable!() };
        let name = self.processes[pid - 1].name.clone();
        self.event(EventKind::Reduce, pid, &format!("{name}/rule{flat}"));
        let program = self.program;
        let body = &program.procs[pidx].groups[group][rule].body;
        for stmt in body {
            match stmt {
                CoreStmt::Assign { var, term } => {
                    let value = term_value(&mut self.store, &mut env, term);
                    self.assign(pid, &mut env, var, value)?;
                }
                CoreStmt::Call { proc, ins, outs } => {
                    let mut args: Vec<Term> = ins
                        .iter()
                        .map(|t| term_value(&mut self.store, &mut env, t))
                        .collect();
                    for o in outs {
                        args.push(lookup_or_alloc(&mut self.store, &mut env, o));
                    }
                    self.spawn(proc, args)?;
                }
            }
        }
        self.retire(pid);
        Ok(())
    }

    // ── builtin processes ──

    fn step_native(&mut self, pid: Pid) -> Result<(), RunError> {
        let name = self.processes[pid - 1].name.clone();
        if self.processes[pid - 1].args.len() != 3 {
            // Builtins take two inputs and one output, full stop.
            self.event(EventKind::Fault, pid, &format!("{name} takes 2 arguments"));
            return Ok(self.retire(pid));
        }
        let (job, a, b, out) = {
            let p = &self.processes[pid - 1];
            (p.job, p.args[0].clone(), p.args[1].clone(), p.args[2].clone())
        };
        let (da, db) = (self.store.deref(&a), self.store.deref(&b));
        let mut unbound = Vec::new();
        if let Term::Ref(id) = da {
            unbound.push(id);
        }
        if let Term::Ref(id) = db {
            unbound.push(id);
        }
        if !unbound.is_empty() {
            return Ok(self.suspend(pid, unbound));
        }
        let result = match job {
            Job::Arith(op) => match (&da, &db) {
                (Term::Num(x), Term::Num(y)) => match arith(op, x, y) {
                    Some(n) => Some(Term::Num(n)),
                    None => {
                        // Kills this process only; its output simply
                        // never arrives.
                        self.event(EventKind::Fault, pid, "division by zero");
                        None
                    }
                },
                _ => {
                    self.event(EventKind::Fault, pid, &format!("{name} on non-numbers"));
                    None
                }
            },
            Job::Rel(op) => {
                let gv = |t: &Term| match t {
                    Term::Num(n) => GuardVal::Num(n.clone()),
                    Term::Const(c) => GuardVal::Atom(c.clone()),
                    _ => GuardVal::Bad,
                };
                let truth = compare(op, &gv(&da), &gv(&db)) == Tri::Yes;
                Some(Term::Const(if truth { "true" } else { "false" }.to_string()))
            }
            Job::Rules(_) => unreachable!(),
        };
        if let Some(value) = result {
            self.event(EventKind::Reduce, pid, &format!("{name}/builtin"));
            let Term::Ref(id) = out else {
                return Err(RunError::DoubleWrite { proc: name, pid, cell: 0 });
            };
            match self.store.bind(id, value) {
                Ok((root, woken)) => {
                    if let Cell::Bound(t) = &self.store.cells[root] {
                        let detail = format!("c{root}={}", t.show());
                        self.event(EventKind::Bind, pid, &detail);
                    }
                    self.wake_all(woken, root);
                }
                Err(()) => return Err(RunError::DoubleWrite { proc: name, pid, cell: id }),
            }
        }
        self.retire(pid);
        Ok(())
    }

    fn retire(&mut self, pid: Pid) {
        let p = &mut self.processes[pid - 1];
        p.status = Status::Reduced;
        p.args = Vec::new(); // release what the process held
    }

    fn suspend(&mut self, pid: Pid, cells: Vec<CellId>) {
        let detail = cells
            .iter()
            .map(|c| format!("c{c}"))
            .collect::<Vec<_>>()
            .join(",");
        for c in &cells {
            self.store.wait(*c, pid);
        }
        self.processes[pid - 1].status = Status::Suspended;
        self.event(EventKind::Suspend, pid, &detail);
    }

    // ── the scheduler ──

    /// Run one process once: commit, suspend, or fail.  Returns whether a
    /// step was taken (there was something runnable).
    pub fn step(&mut self) -> Result<bool, RunError> {
        if self.runnables.is_empty() {
            return Ok(false);
        }
        let pick = self.rng.gen_range(0..self.runnables.len());
        let pid = self.runnables.swap_remove(pick);
        self.steps += 1;
        match self.processes[pid - 1].job {
            Job::Rules(pidx) => {
                let program = self.program;
                let proc = &program.procs[pidx];
                match self.try_match(pid, proc) {
                    Decision::Commit { flat, group, rule, env } => {
                        self.commit(pid, flat, group, rule, env)?
                    }
                    Decision::Suspend(cells) => self.suspend(pid, cells),
                    Decision::FailAll => {
                        return Err(RunError::NoRule {
                            proc: self.processes[pid - 1].name.clone(),
                            pid,
                        })
                    }
                }
            }
            Job::Arith(_) | Job::Rel(_) => self.step_native(pid)?,
        }
        self.print_ready();
        Ok(true)
    }

    /// Print watched stream elements that have become ground, in stream
    /// order, one per line.
    fn print_ready(&mut self) {
        loop {
            let Some(pos) = self.watch.clone() else { return };
            let v = self.store.deref(&pos);
            if matches!(v, Term::Ref(_)) {
                return; // head still unwritten
            }
            if v.is_nil() {
                self.watch = None;
                return;
            }
            if let Some((h, t)) = v.as_cons() {
                match self.store.ground(h) {
                    Some(g) => {
                        let _ = writeln!(self.out, "{}", g.show());
                        self.watch = Some(t.clone());
                    }
                    None => return, // element not yet ground
                }
            } else {
                // Not a stream at all: print the one value whole.
                match self.store.ground(&v) {
                    Some(g) => {
                        let _ = writeln!(self.out, "{}", g.show());
                        self.watch = None;
                    }
                    None => {}
                }
                return;
            }
        }
    }

    /// Step until nothing is runnable or the limit is reached.
    pub fn run_to_quiescence(&mut self, max_steps: u64) -> Result<RunReport, RunError> {
        loop {
            if self.runnables.is_empty() {
                self.print_ready();
                let suspended: Vec<Pid> = self
                    .processes
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.status == Status::Suspended)
                    .map(|(i, _)| i + 1)
                    .collect();
                let outcome = if suspended.is_empty() {
                    self.event(EventKind::Quiesce, 0, "-");
                    Outcome::Quiesced
                } else {
                    let detail = suspended
                        .iter()
                        .map(|p| p.to_string())
                        .collect::<Vec<_>>()
                        .join(",");
                    self.event(EventKind::Deadlock, 0, &detail);
                    Outcome::Deadlocked(suspended)
                };
                return Ok(RunReport { outcome, steps: self.steps });
            }
            if self.steps >= max_steps {
                return Ok(RunReport { outcome: Outcome::StepLimit, steps: self.steps });
            }
            self.step()?;
        }
    }
}

// ─────────────────────────── free helpers ─────────────────────────────────

fn lookup_or_alloc(store: &mut Store, env: &mut Env, var: &str) -> Term {
    if let Some(t) = env.get(var) {
        return t.clone();
    }
    let t = Term::Ref(store.alloc());
    env.insert(var.to_string(), t.clone());
    t
}

fn term_value(store: &mut Store, env: &mut Env, t: &CoreTerm) -> Term {
    match t {
        CoreTerm::Var(x) => lookup_or_alloc(store, env, x),
        CoreTerm::Num(n) => Term::Num(n.clone()),
        CoreTerm::Const(c) => Term::Const(c.clone()),
        CoreTerm::Nil => Term::nil(),
        CoreTerm::Cons(h, tl) => {
            Term::cons(term_value(store, env, h), term_value(store, env, tl))
        }
        CoreTerm::Tuple(tag, args) => Term::Tuple(
            tag.clone(),
            args.iter().map(|a| term_value(store, env, a)).collect(),
        ),
    }
}

fn arith(op: ArithOp, a: &BigInt, b: &BigInt) -> Option<BigInt> {
    Some(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        // Truncates toward zero, which is what BigInt division does.
        ArithOp::Div => {
            if b.is_zero() {
                return None;
            }
            a / b
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum GuardVal {
    Num(BigInt),
    Atom(String),
    /// Still unbound somewhere.
    Unknown,
    /// Outside the guard domain; compares as false, never suspends.
    Bad,
}

fn compare(op: RelOp, a: &GuardVal, b: &GuardVal) -> Tri {
    match (a, b) {
        // Bad before unknown: a comparison against a value that can
        // never exist is false now, not worth waiting for.
        (GuardVal::Bad, _) | (_, GuardVal::Bad) => Tri::No,
        (GuardVal::Unknown, _) | (_, GuardVal::Unknown) => Tri::Maybe,
        (GuardVal::Num(x), GuardVal::Num(y)) => {
            let truth = match op {
                RelOp::Lt => x < y,
                RelOp::Gt => x > y,
                RelOp::Le => x <= y,
                RelOp::Ge => x >= y,
                RelOp::Eq => x == y,
                RelOp::Ne => x != y,
            };
            if truth {
                Tri::Yes
            } else {
                Tri::No
            }
        }
        (GuardVal::Atom(x), GuardVal::Atom(y)) if matches!(op, RelOp::Eq | RelOp::Ne) => {
            let truth = if op == RelOp::Eq { x == y } else { x != y };
            if truth {
                Tri::Yes
            } else {
                Tri::No
            }
        }
        _ => Tri::No,
    }
}

/// Spawn the entry process and run to quiescence in one call; the usual
/// entry point for embedders.  `out` receives the ground elements of the
/// entry's first output, `trace` (when given) the event log.
pub fn run_program<'io>(
    program: &CoreProgram,
    entry: &str,
    argv: &[String],
    seed: u64,
    max_steps: u64,
    out: &'io mut dyn Write,
    trace: Option<&'io mut dyn Write>,
) -> Result<RunReport, RunError> {
    let mut sys = System::new(program, seed, out, trace);
    sys.spawn_entry(entry, argv)?;
    sys.run_to_quiescence(max_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn compile(src: &str) -> CoreProgram {
        let (core, _) = crate::desugar::expand(parse(src).expect("parse")).expect("expand");
        core
    }

    fn run_src(src: &str, entry: &str, argv: &[&str], seed: u64) -> (Outcome, String) {
        let core = compile(src);
        let argv: Vec<String> = argv.iter().map(|s| s.to_string()).collect();
        let mut out = Vec::new();
        let report =
            run_program(&core, entry, &argv, seed, 100_000, &mut out, None).expect("run");
        (report.outcome, String::from_utf8(out).unwrap())
    }

    const TWO_FUTURE_P: &str = "\
#p (u, v) -> (x, y)
{
  u=f(w)      || r(u, v, w) -> (y, x);
  u=g(w)      || q(v, w) -> x, y=g(v);
  u=h(w), v=a || x<-w, y=b;
  v=e         || x=k(u, z), s(u) -> (z, y)
}";

    /// Build a System around `p` with unbound argument cells, returning
    /// the cells for u/v/x/y alongside it for direct poking.
    fn p_system<'p, 'io>(
        core: &'p CoreProgram,
        out: &'io mut Vec<u8>,
    ) -> (System<'p, 'io>, [CellId; 4]) {
        let mut sys = System::new(core, 0, out, None);
        let cells = [
            sys.store.alloc(),
            sys.store.alloc(),
            sys.store.alloc(),
            sys.store.alloc(),
        ];
        sys.spawn("p", cells.iter().map(|c| Term::Ref(*c)).collect())
            .expect("spawn");
        (sys, cells)
    }

    #[test]
    fn commits_the_moment_one_rule_is_fully_bound() {
        let core = compile(TWO_FUTURE_P);
        let mut out = Vec::new();
        let (mut sys, [u, _v, _x, _y]) = p_system(&core, &mut out);
        let w = sys.store.alloc();
        sys.store
            .bind(u, Term::Tuple("f".into(), vec![Term::Ref(w)]))
            .unwrap();
        let proc = core.proc("p").unwrap();
        match sys.try_match(1, proc) {
            Decision::Commit { flat, .. } => assert_eq!(flat, 1),
            other => panic!("expected rule 1, got {other:?}"),
        }
    }

    #[test]
    fn does_not_wait_for_inputs_other_rules_need() {
        let core = compile(TWO_FUTURE_P);
        let mut out = Vec::new();
        let (mut sys, [_u, v, _x, _y]) = p_system(&core, &mut out);
        sys.store.bind(v, Term::Const("e".into())).unwrap();
        let proc = core.proc("p").unwrap();
        match sys.try_match(1, proc) {
            Decision::Commit { flat, .. } => assert_eq!(flat, 4),
            other => panic!("expected rule 4, got {other:?}"),
        }
    }

    #[test]
    fn suspends_on_exactly_the_frontier() {
        let core = compile(TWO_FUTURE_P);
        let mut out = Vec::new();
        let (mut sys, [u, v, _x, _y]) = p_system(&core, &mut out);
        sys.store.bind(v, Term::Const("a".into())).unwrap();
        let proc = core.proc("p").unwrap();
        match sys.try_match(1, proc) {
            // Rules 1-3 all hinge on u; rule 4 has definitively failed.
            Decision::Suspend(cells) => assert_eq!(cells, vec![u]),
            other => panic!("expected suspension, got {other:?}"),
        }
    }

    #[test]
    fn aliasing_makes_readers_of_one_future_read_the_other() {
        let core = compile(TWO_FUTURE_P);
        let mut out = Vec::new();
        let (mut sys, [u, v, x, _y]) = p_system(&core, &mut out);
        let w = sys.store.alloc();
        sys.store
            .bind(u, Term::Tuple("h".into(), vec![Term::Ref(w)]))
            .unwrap();
        sys.store.bind(v, Term::Const("a".into())).unwrap();
        assert!(sys.step().unwrap());
        // x <- w with w unbound: x must now track w.
        assert_eq!(sys.store.deref(&Term::Ref(x)), Term::Ref(w));
        sys.store.bind(w, Term::Num(5.into())).unwrap();
        assert_eq!(sys.store.deref(&Term::Ref(x)), Term::Num(5.into()));
        assert_eq!(sys.processes[0].status, Status::Reduced);
    }

    #[test]
    fn a_stream_translator_end_to_end() {
        let src = "#p (in) ->out { in.a | out.b; in.c | out.d; in$ | out$ }";
        let (outcome, printed) = run_src(src, "p", &["a", "c"], 7);
        assert_eq!(outcome, Outcome::Quiesced);
        assert_eq!(printed, "b\nd\n");
    }

    const MERGE: &str = "\
#merge (in1, in2) ->out
{
  in1?m | out^m;
  in2?m | out^m;
  in1$ || out<-in2;
  in2$ || out<-in1
}";

    #[test]
    fn merge_interleaves_but_never_reorders_an_input() {
        let src = format!(
            "#main (argv) ->out {{ argv.go || s1=1:2:$, s2=3:$, merge(s1, s2) ->out }}\n{MERGE}"
        );
        let mut seen = std::collections::HashSet::new();
        for seed in 0..60 {
            let (outcome, printed) = run_src(&src, "main", &["go"], seed);
            assert_eq!(outcome, Outcome::Quiesced);
            let digits: String = printed.split_whitespace().collect();
            assert!(
                ["123", "132", "312"].contains(&digits.as_str()),
                "impossible interleaving {digits}"
            );
            seen.insert(digits);
        }
        assert!(seen.len() >= 2, "only ever saw {seen:?}");
    }

    #[test]
    fn merge_with_one_closed_input_aliases_to_the_other() {
        let src = format!(
            "#main (argv) ->out {{ argv.go || s1=$, s2=7:8:$, merge(s1, s2) ->out }}\n{MERGE}"
        );
        let (outcome, printed) = run_src(&src, "main", &["go"], 3);
        assert_eq!(outcome, Outcome::Quiesced);
        assert_eq!(printed, "7\n8\n");
    }

    #[test]
    fn merge_of_two_empty_streams_is_empty() {
        let src = format!(
            "#main (argv) ->out {{ argv.go || s1=$, s2=$, merge(s1, s2) ->out }}\n{MERGE}"
        );
        let (outcome, printed) = run_src(&src, "main", &["go"], 0);
        assert_eq!(outcome, Outcome::Quiesced);
        assert_eq!(printed, "");
    }

    const MAX: &str = "#max (a, b) ->m { a>=b || m<-a : || m<-b }";

    #[test]
    fn the_otherwise_rule_fires_only_after_the_guard_fails() {
        let src = format!("#main (argv) ->out {{ argv.go || max(3, 5) ->m, out^m, out$ }}\n{MAX}");
        let (outcome, printed) = run_src(&src, "main", &["go"], 11);
        assert_eq!(outcome, Outcome::Quiesced);
        assert_eq!(printed, "5\n");
    }

    #[test]
    fn the_otherwise_rule_never_commits_while_the_guard_is_unknown() {
        let core = compile(MAX);
        let mut out = Vec::new();
        let mut sys = System::new(&core, 0, &mut out, None);
        let a = sys.store.alloc();
        let b = sys.store.alloc();
        let m = sys.store.alloc();
        sys.spawn("max", vec![Term::Ref(a), Term::Ref(b), Term::Ref(m)])
            .unwrap();
        sys.store.bind(b, Term::Num(5.into())).unwrap();
        assert!(sys.step().unwrap());
        // With a unbound the guard is unknown: the otherwise rule is
        // gated, even though it could match, and the process waits.
        assert_eq!(sys.processes[0].status, Status::Suspended);
        sys.store.bind(a, Term::Num(3.into())).unwrap();
        // Waking is the scheduler's job; here we poke directly.
        sys.processes[0].status = Status::Runnable;
        sys.runnables.push(1);
        while sys.step().unwrap() {}
        assert_eq!(sys.store.deref(&Term::Ref(m)), Term::Num(5.into()));
    }

    #[test]
    fn builtin_arithmetic_is_exact_and_truncates_division() {
        let src = "#main (argv) ->out { argv.go || add(2, 3)->a, sub(0, 7)->b, \
                   div(7, 2)->c, div(0-7, 2)->d, out^a, out^b, out^c, out^d, out$ }";
        let (outcome, printed) = run_src(src, "main", &["go"], 5);
        assert_eq!(outcome, Outcome::Quiesced);
        assert_eq!(printed, "5\n-7\n3\n-3\n");
    }

    #[test]
    fn division_by_zero_kills_only_that_process() {
        let src = "#main (argv) ->out { argv.go || div(1, 0)->a, add(1, 1)->b, out^b, out^a, out$ }";
        let core = compile(src);
        let mut out = Vec::new();
        let mut trace = Vec::new();
        let report = run_program(
            &core,
            "main",
            &["go".to_string()],
            0,
            1000,
            &mut out,
            Some(&mut trace),
        )
        .expect("run");
        // The add still happened; the division's output never arrives,
        // so printing stops after the 2 — but nothing is left waiting.
        assert_eq!(String::from_utf8(out).unwrap(), "2\n");
        assert_eq!(report.outcome, Outcome::Quiesced);
        // The fault is on the record.
        let trace = String::from_utf8(trace).unwrap();
        assert!(trace.lines().any(|l| l.contains("FAULT") && l.contains("division by zero")));
    }

    #[test]
    fn unwritten_futures_deadlock_the_processes_reading_them() {
        let core = compile("#p(x)->(y) { x=a || y=b }");
        let mut out = Vec::new();
        let mut sys = System::new(&core, 0, &mut out, None);
        let x = sys.store.alloc();
        let y = sys.store.alloc();
        sys.spawn("p", vec![Term::Ref(x), Term::Ref(y)]).unwrap();
        let report = sys.run_to_quiescence(1000).expect("run");
        assert_eq!(report.outcome, Outcome::Deadlocked(vec![1]));
    }

    #[test]
    fn circular_waiting_reports_every_stuck_process() {
        let src = "\
#main (argv) ->out { argv.go || p(a)->b, p(b)->a, out<-a }
#p (x) ->y { x=v || y<-x }";
        let core = compile(src);
        let mut out = Vec::new();
        let report = run_program(&core, "main", &["go".to_string()], 0, 1000, &mut out, None)
            .expect("run");
        // main reduced; the two p processes wait on each other.
        assert_eq!(report.outcome, Outcome::Deadlocked(vec![2, 3]));
    }

    #[test]
    fn a_self_feeding_producer_hits_the_step_limit() {
        let src = "#loop (in) ->out { in?m | out^m, in.go }";
        let core = compile(src);
        let mut out = Vec::new();
        let report = run_program(&core, "loop", &["go".to_string()], 0, 100, &mut out, None)
            .expect("run");
        assert_eq!(report.outcome, Outcome::StepLimit);
        assert_eq!(report.steps, 100);
    }

    #[test]
    fn the_same_seed_replays_the_same_run() {
        let src = format!(
            "#main (argv) ->out {{ argv.go || s1=1:2:$, s2=3:$, merge(s1, s2) ->out }}\n{MERGE}"
        );
        let core = compile(&src);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut out = Vec::new();
            let mut trace = Vec::new();
            run_program(
                &core,
                "main",
                &["go".to_string()],
                42,
                100_000,
                &mut out,
                Some(&mut trace),
            )
            .expect("run");
            runs.push((out, trace));
        }
        assert_eq!(runs[0], runs[1]);
    }

    #[test]
    fn a_cell_is_never_bound_twice() {
        let mut store = Store::default();
        let c = store.alloc();
        store.bind(c, Term::Num(1.into())).unwrap();
        assert!(store.bind(c, Term::Num(2.into())).is_err());
    }

    #[test]
    fn self_aliases_carry_no_information() {
        let mut store = Store::default();
        let a = store.alloc();
        let b = store.alloc();
        store.bind(a, Term::Ref(b)).unwrap();
        // b <- a would close a cycle; it must be dropped, leaving b free
        // for a real value.
        store.bind(b, Term::Ref(a)).unwrap();
        store.bind(b, Term::Num(9.into())).unwrap();
        assert_eq!(store.deref(&Term::Ref(a)), Term::Num(9.into()));
    }

    #[test]
    fn guards_compare_numbers_and_atoms() {
        assert_eq!(
            compare(RelOp::Ge, &GuardVal::Num(3.into()), &GuardVal::Num(3.into())),
            Tri::Yes
        );
        assert_eq!(
            compare(RelOp::Gt, &GuardVal::Unknown, &GuardVal::Num(1.into())),
            Tri::Maybe
        );
        assert_eq!(
            compare(
                RelOp::Eq,
                &GuardVal::Atom("stop".into()),
                &GuardVal::Atom("start".into())
            ),
            Tri::No
        );
    }

    #[test]
    fn the_trace_records_the_whole_lifecycle() {
        let src = "#p (in) ->out { in.a | out.b; in$ | out$ }";
        let core = compile(src);
        let mut out = Vec::new();
        let mut trace = Vec::new();
        run_program(&core, "p", &["a".to_string()], 1, 1000, &mut out, Some(&mut trace))
            .expect("run");
        let trace = String::from_utf8(trace).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines[0], "1 SPAWN 1 p");
        assert!(lines.iter().any(|l| l.contains("REDUCE 1 p/rule1")));
        assert!(lines.iter().any(|l| l.contains("BIND")));
        assert!(lines.last().unwrap().contains("QUIESCE"));
        // Sequence numbers count up from one.
        for (i, l) in lines.iter().enumerate() {
            assert!(l.starts_with(&format!("{} ", i + 1)));
        }
    }
}
