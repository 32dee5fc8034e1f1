//! Operators and applications.
//!
//! Arithmetic and comparison operators are ordinary processes here:
//! `a+b*c` stands for calls of `add` and `mul` wired by fresh variables,
//! and `x < y` for a `lt` call producing `true` or `false`.  Likewise an
//! application `Func H` is the nil-name message `(H)` sent to `Func`.
//!
//! This pass rewrites those operator forms into call and send *nodes*,
//! leaving them nested where they stand; the next pass hoists nested
//! value-producing nodes into statements.  Guards are left alone: they are
//! evaluated atomically as part of matching, not as processes.

use crate::ast::*;
use crate::diag::Diagnostic;

use super::NameGen;

/// The process a binary arithmetic operator stands for.
pub const fn arith_proc(op: ArithOp) -> &'static str {
    match op {
        ArithOp::Add => "add",
        ArithOp::Sub => "sub",
        ArithOp::Mul => "mul",
        ArithOp::Div => "div",
    }
}

/// The process a comparison operator stands for.
pub const fn rel_proc(op: RelOp) -> &'static str {
    match op {
        RelOp::Lt => "lt",
        RelOp::Le => "le",
        RelOp::Gt => "gt",
        RelOp::Ge => "ge",
        RelOp::Eq => "eq",
        RelOp::Ne => "ne",
    }
}

/// True for names this pipeline reserves for built-in processes.
pub fn is_builtin(name: &str) -> bool {
    matches!(
        name,
        "add" | "sub" | "mul" | "div" | "lt" | "le" | "gt" | "ge" | "eq" | "ne" | "merge"
    )
}

pub fn expand_expressions(p: Program, _names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut p = p;
    super::for_each_rule_mut(&mut p, &mut |rule| {
        for s in &mut rule.rhs {
            stmt(s);
        }
    });
    Ok(p)
}

fn stmt(s: &mut Statement) {
    match s {
        Statement::Bind { term, .. } => tuple(term),
        Statement::Alias { expr, .. } => rewrite(expr),
        Statement::Call { args, named, .. } => {
            args.iter_mut().for_each(rewrite);
            named.iter_mut().for_each(|(_, e)| rewrite(e));
        }
        Statement::Send { msgs, .. } => {
            for m in msgs {
                m.args.iter_mut().for_each(rewrite);
            }
        }
        Statement::Relay { .. } | Statement::StreamClose { .. } | Statement::LocalDecl { .. } => {}
        Statement::Put { items, .. } => {
            for it in items {
                match it {
                    PutItem::Tup(t) => tuple(t),
                    PutItem::Val(e) => rewrite(e),
                }
            }
        }
        Statement::Become { value, .. } => rewrite(value),
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => tuple(t),
            AnonValue::Expr(e) => rewrite(e),
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            rewrite(cond);
            then_b.stmts.iter_mut().for_each(stmt);
            else_b.stmts.iter_mut().for_each(stmt);
        }
        Statement::Sequence { first, second, .. } => {
            first.iter_mut().for_each(stmt);
            second.iter_mut().for_each(stmt);
        }
        Statement::ExprStmt { expr, .. } => rewrite(expr),
    }
}

fn tuple(t: &mut TupleExpr) {
    match t {
        TupleExpr::Tuple { args, .. } => args.iter_mut().for_each(rewrite),
        TupleExpr::Cons { head, tail, .. } => {
            tuple(head);
            tuple(tail);
        }
        _ => {}
    }
}

fn rewrite(e: &mut Expr) {
    // Children first so nested operators unfold inside out.
    match e {
        Expr::Var(_) | Expr::Num(..) | Expr::Atom(..) | Expr::SelfRef(_) | Expr::AnonRec(_) => {}
        Expr::Call { args, named, .. } => {
            args.iter_mut().for_each(rewrite);
            named.iter_mut().for_each(|(_, v)| rewrite(v));
        }
        Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
            rewrite(base);
            for m in chain {
                m.args.iter_mut().for_each(rewrite);
            }
        }
        Expr::Juxt { func, arg, .. } => {
            rewrite(func);
            rewrite(arg);
        }
        Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
            rewrite(lhs);
            rewrite(rhs);
        }
    }
    match e {
        Expr::Arith { op, lhs, rhs, span } => {
            *e = Expr::Call {
                proc: arith_proc(*op).to_string(),
                args: vec![(**lhs).clone(), (**rhs).clone()],
                named: Vec::new(),
                span: *span,
            };
        }
        Expr::Rel { op, lhs, rhs, span } => {
            *e = Expr::Call {
                proc: rel_proc(*op).to_string(),
                args: vec![(**lhs).clone(), (**rhs).clone()],
                named: Vec::new(),
                span: *span,
            };
        }
        Expr::Juxt { func, arg, span } => {
            *e = Expr::DotSend {
                base: Box::new((**func).clone()),
                chain: vec![MsgSendE { name: None, args: vec![(**arg).clone()], span: *span }],
                span: *span,
            };
        }
        _ => {}
    }
}
