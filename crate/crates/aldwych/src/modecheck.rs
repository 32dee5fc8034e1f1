//! The mode discipline: every variable has exactly one writer, futures
//! and handles never stand in for each other, and a relayed message is
//! passed on exactly once.
//!
//! Checking runs after the desugar passes, when every rule is explicit
//! about its continuation, so "the recursive call carries it" counts as
//! the one write it is.  Each variable in a rule falls into a class
//! fixed by where it first appears — header input, header output,
//! matched on the left, slot of a received message, raw capture, or
//! fresh on the right — and each class has its own obligations.
//!
//! Everything here is an error except two advisory cases: an input
//! nothing ever reads, and a call to a process nothing declares (which
//! may well live in another file).

use crate::ast::*;
use crate::diag::{Diagnostic, Diagnostics};
use crate::span::Span;

use crate::desugar::expressions::{arith_proc, rel_proc};

/// Check a program whose sugar has been fully expanded.
pub fn check_expanded(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Diagnostics::new();
    let declared: Vec<&Decl> = p.decls.iter().collect();
    for d in &p.decls {
        check_decl(d, &declared, &mut diags);
    }
    diags.items
}

/// What a variable is to the rule that mentions it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    /// Header input: the caller writes it.
    Param,
    /// Header future output: the rule writes it exactly once.
    OutFuture,
    /// Header handle output: received on; given away at most once.
    OutHandle,
    /// Matched on the left (including lookahead re-kinds): never written.
    Bound,
    /// Handle argument of a consumed receive: this rule owns its write
    /// end, and may give it away once.
    SlotHandle,
    /// Future reply slot of a consumed receive: exactly one write.
    ReplyFuture,
    /// Reply object of a consumed receive: its sender-built stream must
    /// be routed to exactly one server.
    ReplyHandle,
    /// Raw captured message: relayed exactly once, used nowhere else.
    Relay,
    /// First seen on the right.
    Fresh,
}

struct Row {
    name: String,
    kind: Kind,
    class: Class,
    span: Span,
    writes: Vec<Span>,
    reads: u32,
    relays: u32,
}

#[derive(Default)]
struct Table {
    rows: Vec<Row>,
}

impl Table {
    fn declare(&mut self, name: &str, kind: Kind, class: Class, span: Span) {
        if !self.rows.iter().any(|r| r.name == name) {
            self.rows.push(Row {
                name: name.to_string(),
                kind,
                class,
                span,
                writes: Vec::new(),
                reads: 0,
                relays: 0,
            });
        }
    }

    fn row_mut(&mut self, n: &Name) -> &mut Row {
        self.declare(&n.text, n.kind, Class::Fresh, n.span);
        self.rows.iter_mut().find(|r| r.name == n.text).unwrap()
    }

    fn read(&mut self, n: &Name) {
        self.row_mut(n).reads += 1;
    }

    fn write(&mut self, n: &Name) {
        let span = n.span;
        self.row_mut(n).writes.push(span);
    }

    fn relay(&mut self, n: &Name) {
        self.row_mut(n).relays += 1;
    }
}

fn check_decl(d: &Decl, declared: &[&Decl], diags: &mut Diagnostics) {
    let mut params_read = vec![false; d.params.len()];
    for g in &d.body {
        for r in &g.rules {
            let table = check_rule(d, r, declared, diags);
            for (i, p) in d.params.iter().enumerate() {
                if let Some(row) = table.rows.iter().find(|row| row.name == p.name.text) {
                    if row.reads > 0 {
                        params_read[i] = true;
                    }
                }
            }
        }
    }
    for (i, p) in d.params.iter().enumerate() {
        // An unused handle input converts to a closed stream, which the
        // conversion does quietly; an unused future input is suspect.
        if !params_read[i] && p.name.kind == Kind::Future && !d.body.is_empty() {
            diags.warning(
                "UnusedInput",
                p.name.span,
                format!("`{}` is never read by any rule of `{}`", p.name.text, d.name),
            );
        }
    }
}

fn check_rule(d: &Decl, rule: &Rule, declared: &[&Decl], diags: &mut Diagnostics) -> Table {
    let mut t = Table::default();
    for p in &d.params {
        t.declare(&p.name.text, p.name.kind, Class::Param, p.name.span);
    }
    for o in d.outspec.names() {
        let class = match o.kind {
            Kind::Future => Class::OutFuture,
            Kind::Handle => Class::OutHandle,
        };
        t.declare(&o.text, o.kind, class, o.span);
    }

    // ── left side ──
    let mut guard_vars: Vec<Name> = Vec::new();
    for item in &rule.lhs {
        match item {
            LhsItem::Equality { var, pat, .. } => {
                t.read(var);
                check_future_pattern(pat, diags);
                declare_pattern(pat, &mut t);
            }
            LhsItem::Messages { target, items, lookahead_at, .. } => {
                if let MsgTarget::Var(n) = target {
                    t.read(n);
                }
                for (i, m) in items.iter().enumerate() {
                    let consumed = lookahead_at.map_or(true, |la| i < la);
                    for a in &m.args {
                        match a {
                            Pattern::Var(n) if n.kind == Kind::Handle => {
                                let class =
                                    if consumed { Class::SlotHandle } else { Class::Bound };
                                t.declare(&n.text, n.kind, class, n.span);
                            }
                            other => {
                                check_message_argument(other, diags);
                                declare_pattern(other, &mut t);
                            }
                        }
                    }
                    for o in &m.outs {
                        let class = match (consumed, o.kind) {
                            (false, _) => Class::Bound,
                            (true, Kind::Future) => Class::ReplyFuture,
                            (true, Kind::Handle) => Class::ReplyHandle,
                        };
                        t.declare(&o.text, o.kind, class, o.span);
                    }
                }
            }
            LhsItem::RawCapture { target, var, .. } => {
                if let MsgTarget::Var(n) = target {
                    t.read(n);
                }
                t.declare(&var.text, var.kind, Class::Relay, var.span);
            }
            LhsItem::Close { target, .. } => {
                if let MsgTarget::Var(n) = target {
                    t.read(n);
                }
            }
            LhsItem::Guard { lhs, rhs, .. } => {
                collect_vars(lhs, &mut guard_vars);
                collect_vars(rhs, &mut guard_vars);
            }
            LhsItem::ChannelGet { span, .. } => {
                diags.error("E0232", *span, "this form should have been removed by an earlier stage");
            }
        }
    }
    for v in &guard_vars {
        t.read(v);
    }

    // ── right side ──
    for s in &rule.rhs {
        match s {
            Statement::Bind { var, term, .. } => {
                t.write(var);
                check_future_term(term, diags);
                read_term(term, &mut t);
            }
            Statement::Alias { var, expr, .. } => {
                t.write(var);
                read_expr(expr, &mut t);
                let rhs_kind = match expr {
                    Expr::Var(n) => Some(n.kind),
                    Expr::Num(..) | Expr::Atom(..) => Some(Kind::Future),
                    _ => None,
                };
                if let Some(k) = rhs_kind {
                    if k != var.kind {
                        diags.error(
                            "AliasKindMismatch",
                            var.span,
                            match var.kind {
                                Kind::Future => {
                                    format!("`{}` is a value, but it is given an object", var.text)
                                }
                                Kind::Handle => {
                                    format!("`{}` is an object, but it is given a value", var.text)
                                }
                            },
                        );
                    }
                }
            }
            Statement::Call { proc, args, outs, span, .. } => {
                // Reading a header input through the continuation is
                // plumbing, not a use.
                let passthrough = |i: usize, a: &Expr| {
                    proc == &d.name
                        && matches!(
                            (a, d.params.get(i)),
                            (Expr::Var(v), Some(p)) if v.text == p.name.text
                        )
                };
                for (i, a) in args.iter().enumerate() {
                    if !passthrough(i, a) {
                        read_expr(a, &mut t);
                    }
                }
                for o in outs {
                    t.write(o);
                }
                check_callee(proc, args.len(), outs.len(), *span, d, declared, diags);
            }
            Statement::Send { target, msgs, .. } => {
                if let SendTarget::Var(n) = target {
                    t.read(n);
                }
                for m in msgs {
                    for a in &m.args {
                        read_expr(a, &mut t);
                    }
                    for o in &m.outs {
                        t.write(o);
                    }
                }
            }
            Statement::Relay { target, var, .. } => {
                t.read(target);
                t.relay(var);
            }
            Statement::StreamClose { .. } => {}
            other => {
                diags.error(
                    "E0232",
                    other.span(),
                    "this form should have been removed by an earlier stage",
                );
            }
        }
    }

    // ── verdicts ──
    for row in &t.rows {
        let var = &row.name;
        let w = row.writes.len();
        let again = row.writes.get(1).copied().unwrap_or(row.span);
        match row.class {
            // Handles are different: putting one in an output position
            // hands a fresh write capability to the callee, and those
            // merge.  Only future positions have the one-writer rule.
            Class::Param if w > 0 && row.kind == Kind::Future => {
                diags.error(
                    "MultipleWriters",
                    row.writes[0],
                    format!("`{var}` is written here, but as an input its writer is the caller"),
                );
            }
            Class::OutFuture | Class::ReplyFuture if w == 0 => {
                diags.error(
                    "MissingWriter",
                    rule.span,
                    format!("this rule never writes `{var}`"),
                );
            }
            Class::Fresh if w == 0 => {
                diags.error(
                    "MissingWriter",
                    row.span,
                    format!("nothing writes `{var}`"),
                );
            }
            Class::Bound if w > 0 && row.kind == Kind::Future => {
                diags.error(
                    "MultipleWriters",
                    row.writes[0],
                    format!("`{var}` is written here, but matching it already gave it a value"),
                );
            }
            _ if w > 1 && row.kind == Kind::Future => {
                diags.error(
                    "MultipleWriters",
                    again,
                    format!("`{var}` is written more than once in this rule"),
                );
            }
            Class::Fresh
                if row.kind == Kind::Future && row.reads == 0 && !var.contains('%') =>
            {
                diags.error(
                    "UnreadValue",
                    row.span,
                    format!("`{var}` is written but nothing reads it"),
                );
            }
            Class::Relay => {
                if row.relays == 0 {
                    diags.error(
                        "RelayDropped",
                        row.span,
                        format!("the captured message `{var}` is never relayed"),
                    );
                } else if row.relays > 1 || row.reads > 0 || w > 0 {
                    diags.error(
                        "RelayDuplicated",
                        row.span,
                        format!("the captured message `{var}` must be relayed exactly once and used nowhere else"),
                    );
                }
            }
            _ => {}
        }
    }
    for v in &guard_vars {
        let Some(row) = t.rows.iter().find(|r| r.name == v.text) else { continue };
        let readable = matches!(row.class, Class::Param | Class::Bound) && row.kind == Kind::Future;
        if !readable {
            diags.error(
                "UnreadableGuard",
                v.span,
                format!("guards compare inputs, but `{}` is not one", v.text),
            );
        }
    }
    t
}

fn check_callee(
    proc: &str,
    args: usize,
    outs: usize,
    span: Span,
    host: &Decl,
    declared: &[&Decl],
    diags: &mut Diagnostics,
) {
    const ARITH: [&str; 4] =
        [arith_proc(ArithOp::Add), arith_proc(ArithOp::Sub), arith_proc(ArithOp::Mul), arith_proc(ArithOp::Div)];
    const REL: [&str; 6] = [
        rel_proc(RelOp::Lt),
        rel_proc(RelOp::Gt),
        rel_proc(RelOp::Le),
        rel_proc(RelOp::Ge),
        rel_proc(RelOp::Eq),
        rel_proc(RelOp::Ne),
    ];
    if ARITH.contains(&proc) || REL.contains(&proc) {
        return;
    }
    match declared.iter().find(|d| d.name == proc) {
        Some(callee) => {
            if args != callee.params.len() {
                diags.error(
                    "ArityMismatch",
                    span,
                    format!(
                        "`{proc}` takes {} input{}, not {args}",
                        callee.params.len(),
                        if callee.params.len() == 1 { "" } else { "s" },
                    ),
                );
            } else if outs > callee.outspec.names().len() {
                diags.error(
                    "ArityMismatch",
                    span,
                    format!(
                        "`{proc}` produces {} output{}, not {outs}",
                        callee.outspec.names().len(),
                        if callee.outspec.names().len() == 1 { "" } else { "s" },
                    ),
                );
            }
        }
        None if proc == host.name => {} // self, checked via its own header
        None => {
            diags.warning(
                "UnknownProcess",
                span,
                format!("nothing here declares `{proc}`"),
            );
        }
    }
}

/// Patterns matched against futures must not capture handles; doing so
/// would need communication back through a many-reader value.
fn check_future_pattern(p: &Pattern, diags: &mut Diagnostics) {
    visit_pattern_vars(p, &mut |n| {
        if n.kind == Kind::Handle {
            diags.error(
                "HandleInFutureTuple",
                n.span,
                format!("a value cannot carry the object `{}`", n.text),
            );
        }
    });
}

/// Message arguments may be handles, but only directly — not buried in
/// a tuple, which is a future carrying a handle again.
fn check_message_argument(p: &Pattern, diags: &mut Diagnostics) {
    match p {
        Pattern::Var(_) => {}
        other => check_future_pattern(other, diags),
    }
}

fn check_future_term(term: &TupleExpr, diags: &mut Diagnostics) {
    visit_term_vars(term, &mut |n| {
        if n.kind == Kind::Handle {
            diags.error(
                "HandleInFutureTuple",
                n.span,
                format!("a value cannot carry the object `{}`", n.text),
            );
        }
    });
}

fn declare_pattern(p: &Pattern, t: &mut Table) {
    visit_pattern_vars(p, &mut |n| t.declare(&n.text, n.kind, Class::Bound, n.span));
}

fn visit_pattern_vars(p: &Pattern, f: &mut impl FnMut(&Name)) {
    match p {
        Pattern::Var(n) | Pattern::ReplySlot(n) => f(n),
        Pattern::Tuple { args, .. } => args.iter().for_each(|a| visit_pattern_vars(a, f)),
        Pattern::Cons { head, tail, .. } => {
            visit_pattern_vars(head, f);
            visit_pattern_vars(tail, f);
        }
        Pattern::As { var, pat, .. } => {
            f(var);
            visit_pattern_vars(pat, f);
        }
        Pattern::Const(..) | Pattern::Num(..) | Pattern::Nil(_) => {}
    }
}

fn visit_term_vars(term: &TupleExpr, f: &mut impl FnMut(&Name)) {
    match term {
        TupleExpr::Var(n) => f(n),
        TupleExpr::Tuple { args, .. } => {
            for a in args {
                collect_vars_into(a, f);
            }
        }
        TupleExpr::Cons { head, tail, .. } => {
            visit_term_vars(head, f);
            visit_term_vars(tail, f);
        }
        TupleExpr::Const(..) | TupleExpr::Num(..) | TupleExpr::Nil(_) => {}
    }
}

fn read_term(term: &TupleExpr, t: &mut Table) {
    visit_term_vars(term, &mut |n| t.read(n));
}

fn read_expr(e: &Expr, t: &mut Table) {
    collect_vars_into(e, &mut |n| t.read(n));
}

fn collect_vars(e: &Expr, out: &mut Vec<Name>) {
    collect_vars_into(e, &mut |n| out.push(n.clone()));
}

fn collect_vars_into(e: &Expr, f: &mut impl FnMut(&Name)) {
    match e {
        Expr::Var(n) => f(n),
        Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
            collect_vars_into(lhs, f);
            collect_vars_into(rhs, f);
        }
        Expr::Call { args, named, .. } => {
            args.iter().for_each(|a| collect_vars_into(a, f));
            named.iter().for_each(|(_, a)| collect_vars_into(a, f));
        }
        Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
            collect_vars_into(base, f);
            for m in chain {
                m.args.iter().for_each(|a| collect_vars_into(a, f));
            }
        }
        Expr::Juxt { func, arg, .. } => {
            collect_vars_into(func, f);
            collect_vars_into(arg, f);
        }
        Expr::Num(..) | Expr::Atom(..) | Expr::SelfRef(_) | Expr::AnonRec(_) => {}
    }
}
