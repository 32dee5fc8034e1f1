//! The desugaring pipeline.
//!
//! Surface programs are rewritten by a fixed sequence of passes, each of
//! which removes one family of notation and leaves a program the next pass
//! understands.  The order matters and is:
//!
//! 1.  [`currying::expand_currying`] — bracketed parameter groups become
//!     chains of relay procedures.
//! 2.  [`init::apply_initialization`] — macro bodies are inlined, default
//!     and named arguments are materialized, initialization sections split
//!     into wrapper and worker procedures.
//! 3.  [`anonymous::expand_anonymous_forms`] — anonymous outputs and
//!     returns get generated names.
//! 4.  [`expressions::expand_expressions`] — operators and applications
//!     become calls and message sends (still nested).
//! 5.  [`embedded_calls::expand_embedded_calls`] — nested value-producing
//!     calls and sends are hoisted into statements with fresh variables.
//! 6.  [`channels::expand_channel_sugar`] — stream reads and writes become
//!     explicit list matches and list builds.
//! 7.  [`broadcast::broadcast_message_patterns`] — bare message patterns
//!     are replicated per output handle, and close rules are added.
//! 8.  [`lift::lift_embedded_blocks`] — embedded bodies, conditionals, and
//!     sequences become procedures of their own.
//! 9.  [`recursion::expand_implicit_recursion`] — the implicit recursion of
//!     single-bar rules becomes an explicit call.
//! 10. [`convert::convert_handles_to_streams`] — handles disappear; what is
//!     left is the core language.
//!
//! Mode checking sits between steps 9 and 10 (see [`crate::modecheck`]);
//! [`expand`] runs the whole pipeline including it.
//!
//! Generated names use `%`, which cannot appear in surface identifiers, so
//! passes can never capture a user name.  Every pass is idempotent: running
//! it on its own output changes nothing.

pub mod anonymous;
pub mod broadcast;
pub mod channels;
pub mod convert;
pub mod currying;
pub mod embedded_calls;
pub mod expressions;
pub mod init;
pub mod lift;
pub mod recursion;

use std::fmt;
use std::str::FromStr;

use crate::ast::*;
use crate::core::CoreProgram;
use crate::diag::Diagnostic;

/// The surface-to-surface stages, in order, plus the final conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Currying,
    Init,
    Anonymous,
    Expressions,
    EmbeddedCalls,
    ChannelSugar,
    Broadcast,
    Lift,
    Recursion,
    Convert,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Currying,
        Stage::Init,
        Stage::Anonymous,
        Stage::Expressions,
        Stage::EmbeddedCalls,
        Stage::ChannelSugar,
        Stage::Broadcast,
        Stage::Lift,
        Stage::Recursion,
        Stage::Convert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Currying => "currying",
            Stage::Init => "init",
            Stage::Anonymous => "anonymous",
            Stage::Expressions => "expressions",
            Stage::EmbeddedCalls => "embedded-calls",
            Stage::ChannelSugar => "channel-sugar",
            Stage::Broadcast => "broadcast",
            Stage::Lift => "lift",
            Stage::Recursion => "recursion",
            Stage::Convert => "convert",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
                format!("unknown stage `{s}`; stages are {}", names.join(", "))
            })
    }
}

/// Run one surface stage.  [`Stage::Convert`] is not a surface stage; use
/// [`convert::convert_handles_to_streams`] for it.
pub fn apply_stage(p: Program, stage: Stage, names: &mut NameGen) -> Result<Program, Diagnostic> {
    match stage {
        Stage::Currying => currying::expand_currying(p, names),
        Stage::Init => init::apply_initialization(p, names),
        Stage::Anonymous => anonymous::expand_anonymous_forms(p, names),
        Stage::Expressions => expressions::expand_expressions(p, names),
        Stage::EmbeddedCalls => embedded_calls::expand_embedded_calls(p, names),
        Stage::ChannelSugar => channels::expand_channel_sugar(p, names),
        Stage::Broadcast => broadcast::broadcast_message_patterns(p, names),
        Stage::Lift => lift::lift_embedded_blocks(p, names),
        Stage::Recursion => recursion::expand_implicit_recursion(p, names),
        Stage::Convert => unreachable!("conversion leaves the surface language"),
    }
}

/// Run the surface stages up to and including `last`.
pub fn expand_until(p: Program, last: Stage) -> Result<Program, Diagnostic> {
    let mut names = NameGen::for_program(&p);
    let mut p = p;
    for stage in Stage::ALL {
        if stage == Stage::Convert {
            break;
        }
        p = apply_stage(p, stage, &mut names)?;
        if stage == last {
            break;
        }
    }
    Ok(p)
}

/// Run every surface stage.
pub fn expand_surface(p: Program) -> Result<Program, Diagnostic> {
    expand_until(p, Stage::Recursion)
}

/// The whole pipeline: surface stages, mode checking, conversion.  Mode
/// errors abort; warnings are returned alongside the program.
pub fn expand(p: Program) -> Result<(CoreProgram, Vec<Diagnostic>), Vec<Diagnostic>> {
    let p = expand_surface(p).map_err(|e| vec![e])?;
    let diags = crate::modecheck::check_expanded(&p);
    if diags.iter().any(|d| d.severity == crate::diag::Severity::Error) {
        return Err(diags);
    }
    let mut names = NameGen::for_program(&p);
    let core = convert::convert_handles_to_streams(&p, &mut names).map_err(|e| {
        let mut v = diags.clone();
        v.push(e);
        v
    })?;
    Ok((core, diags))
}

// ───────────────────────────── fresh names ────────────────────────────────

/// Generates names of the form `base%N`.  `%` is not a surface identifier
/// character, so generated names cannot collide with user names; scanning
/// the program for the highest `N` already present keeps repeated passes
/// from colliding with each other.
pub struct NameGen {
    next: u64,
}

impl NameGen {
    pub fn for_program(p: &Program) -> Self {
        let mut max = 0u64;
        visit_names(p, &mut |name: &str| {
            if let Some(i) = name.rfind('%') {
                if let Ok(n) = name[i + 1..].parse::<u64>() {
                    max = max.max(n);
                }
            }
        });
        NameGen { next: max + 1 }
    }

    pub fn fresh_text(&mut self, base: &str) -> String {
        let base = match base.find('%') {
            Some(i) => &base[..i],
            None => base,
        };
        let n = self.next;
        self.next += 1;
        format!("{base}%{n}")
    }

    pub fn future(&mut self, base: &str) -> Name {
        Name::future(self.fresh_text(base), crate::span::Span::DUMMY)
    }

    pub fn handle(&mut self, base: &str) -> Name {
        Name::handle(self.fresh_text(base), crate::span::Span::DUMMY)
    }

    pub fn of_kind(&mut self, base: &str, kind: Kind) -> Name {
        match kind {
            Kind::Future => self.future(base),
            Kind::Handle => self.handle(base),
        }
    }
}

/// Visit every identifier in the program (procedure, parameter, variable,
/// message, and tag names alike).
pub fn visit_names(p: &Program, f: &mut impl FnMut(&str)) {
    for d in &p.decls {
        f(&d.name);
        for param in d.params.iter().chain(&d.curried) {
            f(&param.name.text);
            if let Some(e) = &param.default {
                visit_expr_names(e, f);
            }
        }
        for n in d.outspec.names() {
            f(&n.text);
        }
        for s in d.init.iter().chain(d.macro_body.iter().flatten()) {
            visit_stmt_names(s, f);
        }
        visit_groups_names(&d.body, f);
    }
}

fn visit_groups_names(gs: &[Group], f: &mut impl FnMut(&str)) {
    for g in gs {
        for r in &g.rules {
            for item in &r.lhs {
                visit_lhs_names(item, f);
            }
            for s in &r.rhs {
                visit_stmt_names(s, f);
            }
            if let Some(body) = &r.body {
                visit_groups_names(body, f);
            }
        }
    }
}

fn visit_lhs_names(item: &LhsItem, f: &mut impl FnMut(&str)) {
    match item {
        LhsItem::Equality { var, pat, .. } => {
            f(&var.text);
            visit_pat_names(pat, f);
        }
        LhsItem::ChannelGet { chan, items, .. } => {
            f(&chan.text);
            for it in items {
                match it {
                    GetItem::Got(p) => visit_pat_names(p, f),
                    GetItem::Captured(n) => f(&n.text),
                }
            }
        }
        LhsItem::Messages { target, items, .. } => {
            if let MsgTarget::Var(n) = target {
                f(&n.text);
            }
            for m in items {
                if let Some(n) = &m.name {
                    f(n);
                }
                for a in &m.args {
                    visit_pat_names(a, f);
                }
                for o in &m.outs {
                    f(&o.text);
                }
            }
        }
        LhsItem::RawCapture { target, var, .. } => {
            if let MsgTarget::Var(n) = target {
                f(&n.text);
            }
            f(&var.text);
        }
        LhsItem::Close { target, .. } => {
            if let MsgTarget::Var(n) = target {
                f(&n.text);
            }
        }
        LhsItem::Guard { lhs, rhs, .. } => {
            visit_expr_names(lhs, f);
            visit_expr_names(rhs, f);
        }
    }
}

fn visit_pat_names(p: &Pattern, f: &mut impl FnMut(&str)) {
    match p {
        Pattern::Const(c, _) => f(c),
        Pattern::Num(..) | Pattern::Nil(_) => {}
        Pattern::Var(n) | Pattern::ReplySlot(n) => f(&n.text),
        Pattern::Tuple { tag, args, .. } => {
            f(tag);
            for a in args {
                visit_pat_names(a, f);
            }
        }
        Pattern::Cons { head, tail, .. } => {
            visit_pat_names(head, f);
            visit_pat_names(tail, f);
        }
        Pattern::As { var, pat, .. } => {
            f(&var.text);
            visit_pat_names(pat, f);
        }
    }
}

fn visit_tuple_names(t: &TupleExpr, f: &mut impl FnMut(&str)) {
    match t {
        TupleExpr::Const(c, _) => f(c),
        TupleExpr::Num(..) | TupleExpr::Nil(_) => {}
        TupleExpr::Tuple { tag, args, .. } => {
            f(tag);
            for a in args {
                visit_expr_names(a, f);
            }
        }
        TupleExpr::Cons { head, tail, .. } => {
            visit_tuple_names(head, f);
            visit_tuple_names(tail, f);
        }
        TupleExpr::Var(n) => f(&n.text),
    }
}

fn visit_stmt_names(s: &Statement, f: &mut impl FnMut(&str)) {
    match s {
        Statement::Bind { var, term, .. } => {
            f(&var.text);
            visit_tuple_names(term, f);
        }
        Statement::Alias { var, expr, .. } => {
            f(&var.text);
            visit_expr_names(expr, f);
        }
        Statement::Call { proc, args, named, outs, .. } => {
            f(proc);
            for a in args {
                visit_expr_names(a, f);
            }
            for (n, e) in named {
                f(n);
                visit_expr_names(e, f);
            }
            for o in outs {
                f(&o.text);
            }
        }
        Statement::Send { target, msgs, .. } => {
            if let SendTarget::Var(n) = target {
                f(&n.text);
            }
            for m in msgs {
                if let Some(n) = &m.name {
                    f(n);
                }
                for a in &m.args {
                    visit_expr_names(a, f);
                }
                for o in &m.outs {
                    f(&o.text);
                }
            }
        }
        Statement::Relay { target, var, .. } => {
            f(&target.text);
            f(&var.text);
        }
        Statement::Put { chan, items, .. } => {
            f(&chan.text);
            for it in items {
                match it {
                    PutItem::Tup(t) => visit_tuple_names(t, f),
                    PutItem::Val(e) => visit_expr_names(e, f),
                }
            }
        }
        Statement::StreamClose { var, .. } => f(&var.text),
        Statement::LocalDecl { names, .. } => {
            for n in names {
                f(&n.text);
            }
        }
        Statement::Become { value, .. } => visit_expr_names(value, f),
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => visit_tuple_names(t, f),
            AnonValue::Expr(e) => visit_expr_names(e, f),
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            visit_expr_names(cond, f);
            for s in then_b.stmts.iter().chain(&else_b.stmts) {
                visit_stmt_names(s, f);
            }
        }
        Statement::Sequence { locals, first, second, .. } => {
            for n in locals {
                f(&n.text);
            }
            for s in first.iter().chain(second) {
                visit_stmt_names(s, f);
            }
        }
        Statement::ExprStmt { expr, outs, .. } => {
            visit_expr_names(expr, f);
            for o in outs {
                f(&o.text);
            }
        }
    }
}

fn visit_expr_names(e: &Expr, f: &mut impl FnMut(&str)) {
    match e {
        Expr::Var(n) => f(&n.text),
        Expr::Num(..) | Expr::SelfRef(_) | Expr::AnonRec(_) => {}
        Expr::Atom(s, _) => f(s),
        Expr::Call { proc, args, named, .. } => {
            f(proc);
            for a in args {
                visit_expr_names(a, f);
            }
            for (n, e) in named {
                f(n);
                visit_expr_names(e, f);
            }
        }
        Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
            visit_expr_names(base, f);
            for m in chain {
                if let Some(n) = &m.name {
                    f(n);
                }
                for a in &m.args {
                    visit_expr_names(a, f);
                }
            }
        }
        Expr::Juxt { func, arg, .. } => {
            visit_expr_names(func, f);
            visit_expr_names(arg, f);
        }
        Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
            visit_expr_names(lhs, f);
            visit_expr_names(rhs, f);
        }
    }
}

// ─────────────────────────── shared rewriting ─────────────────────────────

/// Apply `f` to every rule of every declaration, embedded bodies included.
pub fn for_each_rule_mut(p: &mut Program, f: &mut impl FnMut(&mut Rule)) {
    fn walk(gs: &mut [Group], f: &mut impl FnMut(&mut Rule)) {
        for g in gs {
            for r in &mut g.rules {
                f(r);
                if let Some(body) = &mut r.body {
                    walk(body, f);
                }
            }
        }
    }
    for d in &mut p.decls {
        walk(&mut d.body, f);
    }
}

/// Replace reads of variable `from` with expression `to` in an expression.
pub fn subst_var_expr(e: &mut Expr, from: &str, to: &Expr) {
    match e {
        Expr::Var(n) if n.text == from => *e = to.clone(),
        Expr::Var(_) | Expr::Num(..) | Expr::Atom(..) | Expr::SelfRef(_) | Expr::AnonRec(_) => {}
        Expr::Call { args, named, .. } => {
            for a in args {
                subst_var_expr(a, from, to);
            }
            for (_, v) in named {
                subst_var_expr(v, from, to);
            }
        }
        Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
            subst_var_expr(base, from, to);
            for m in chain {
                for a in &mut m.args {
                    subst_var_expr(a, from, to);
                }
            }
        }
        Expr::Juxt { func, arg, .. } => {
            subst_var_expr(func, from, to);
            subst_var_expr(arg, from, to);
        }
        Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
            subst_var_expr(lhs, from, to);
            subst_var_expr(rhs, from, to);
        }
    }
}

/// Replace reads of `from` with `to` in a constructed term.
pub fn subst_var_tuple(t: &mut TupleExpr, from: &str, to: &Expr) {
    match t {
        TupleExpr::Tuple { args, .. } => {
            for a in args {
                subst_var_expr(a, from, to);
            }
        }
        TupleExpr::Cons { head, tail, .. } => {
            subst_var_tuple(head, from, to);
            subst_var_tuple(tail, from, to);
        }
        TupleExpr::Var(n) if n.text == from => {
            if let Expr::Var(v) = to {
                *t = TupleExpr::Var(v.clone());
            }
        }
        _ => {}
    }
}

/// Replace reads of `from` with `to` in one statement (left-hand binders
/// are not reads and stay untouched).
pub fn subst_var_stmt(s: &mut Statement, from: &str, to: &Expr) {
    match s {
        Statement::Bind { term, .. } => subst_var_tuple(term, from, to),
        Statement::Alias { expr, .. } => subst_var_expr(expr, from, to),
        Statement::Call { args, named, .. } => {
            for a in args {
                subst_var_expr(a, from, to);
            }
            for (_, v) in named {
                subst_var_expr(v, from, to);
            }
        }
        Statement::Send { target, msgs, .. } => {
            if let SendTarget::Var(n) = target {
                if n.text == from {
                    if let Expr::Var(v) = to {
                        *n = v.clone();
                    }
                }
            }
            for m in msgs {
                for a in &mut m.args {
                    subst_var_expr(a, from, to);
                }
            }
        }
        Statement::Relay { target, var, .. } => {
            if let Expr::Var(v) = to {
                if target.text == from {
                    *target = v.clone();
                }
                if var.text == from {
                    *var = v.clone();
                }
            }
        }
        Statement::Put { items, .. } => {
            for it in items {
                match it {
                    PutItem::Tup(t) => subst_var_tuple(t, from, to),
                    PutItem::Val(e) => subst_var_expr(e, from, to),
                }
            }
        }
        Statement::StreamClose { .. } | Statement::LocalDecl { .. } => {}
        Statement::Become { value, .. } => subst_var_expr(value, from, to),
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => subst_var_tuple(t, from, to),
            AnonValue::Expr(e) => subst_var_expr(e, from, to),
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            subst_var_expr(cond, from, to);
            for s in then_b.stmts.iter_mut().chain(&mut else_b.stmts) {
                subst_var_stmt(s, from, to);
            }
        }
        Statement::Sequence { first, second, .. } => {
            for s in first.iter_mut().chain(second) {
                subst_var_stmt(s, from, to);
            }
        }
        Statement::ExprStmt { expr, .. } => subst_var_expr(expr, from, to),
    }
}
