//! Nested value-producing forms.
//!
//! After the expressions pass, calls and message sends can still sit in
//! argument positions: `filter1(InList.isempty, Func, InList)` or
//! `Elephant(Args)` as a default value.  This pass hoists every nested
//! call and send into a statement of its own, wired through a fresh
//! variable, so that afterwards every argument is a variable, a number, or
//! a constant:
//!
//! ```text
//! filter1(InList.isempty, Func, InList)
//!   ⇒  InList.isempty -> val%1, filter1(val%1, Func, InList)
//! ```
//!
//! An assignment whose right side is exactly one call or send writes its
//! target directly, with no intermediate variable.  The fresh variable for
//! a hoisted argument takes the kind (value or handle) of the parameter it
//! feeds, so a hoisted object reference stays a handle.
//!
//! `~` and `<` as values (the recursive continuation) are left in place
//! for the recursion pass, as are the outermost nodes of `<=` statements.

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::span::Span;

use super::NameGen;

pub fn expand_embedded_calls(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut out_kinds = HashMap::new();
    let mut param_kinds = HashMap::new();
    for d in &p.decls {
        let outs = match &d.outspec {
            OutSpec::AnonValue(_) => vec![Kind::Future],
            OutSpec::AnonHandle(_) => vec![Kind::Handle],
            other => other.names().iter().map(|n| n.kind).collect(),
        };
        out_kinds.insert(d.name.clone(), outs);
        param_kinds.insert(
            d.name.clone(),
            d.params.iter().map(|p| p.name.kind).collect::<Vec<_>>(),
        );
    }
    let mut h = Hoist { names, out_kinds, param_kinds };
    let mut p = p;
    let mut err = None;
    super::for_each_rule_mut(&mut p, &mut |rule| {
        if err.is_some() {
            return;
        }
        match h.stmts(std::mem::take(&mut rule.rhs)) {
            Ok(rhs) => rule.rhs = rhs,
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(p),
    }
}

struct Hoist<'a> {
    names: &'a mut NameGen,
    out_kinds: HashMap<String, Vec<Kind>>,
    param_kinds: HashMap<String, Vec<Kind>>,
}

impl Hoist<'_> {
    fn stmts(&mut self, list: Vec<Statement>) -> Result<Vec<Statement>, Diagnostic> {
        let mut out = Vec::with_capacity(list.len());
        for s in list {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn stmt(&mut self, mut s: Statement, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match &mut s {
            // `y <- call/send` writes y directly.
            Statement::Alias { var, expr, span } if produces_value(expr) => {
                let var = var.clone();
                let span = *span;
                let expr = std::mem::replace(expr, Expr::SelfRef(span));
                self.emit_into(expr, vec![var], span, out)?;
                return Ok(());
            }
            Statement::Bind { term, .. } => self.tuple(term, out)?,
            Statement::Alias { expr, .. } => self.keep_inner(expr, out)?,
            Statement::Call { proc, args, named, .. } => {
                let kinds = self.param_kinds.get(proc.as_str()).cloned();
                for (i, a) in args.iter_mut().enumerate() {
                    let want = kinds
                        .as_ref()
                        .and_then(|k| k.get(i).copied())
                        .unwrap_or(Kind::Future);
                    self.atomic(a, want, out)?;
                }
                for (_, e) in named.iter_mut() {
                    self.atomic(e, Kind::Future, out)?;
                }
            }
            Statement::Send { msgs, .. } => {
                for m in msgs.iter_mut() {
                    for a in &mut m.args {
                        self.atomic(a, Kind::Future, out)?;
                    }
                }
            }
            Statement::Relay { .. }
            | Statement::StreamClose { .. }
            | Statement::LocalDecl { .. } => {}
            Statement::Put { items, .. } => {
                for it in items {
                    match it {
                        PutItem::Tup(t) => self.tuple(t, out)?,
                        PutItem::Val(e) => self.atomic(e, Kind::Future, out)?,
                    }
                }
            }
            // `<=` keeps its outermost node for the recursion pass; only
            // the arguments inside are flattened.
            Statement::Become { value, .. } => self.keep_inner(value, out)?,
            Statement::AnonWrite { value, .. } => match value {
                AnonValue::Bind(t) => self.tuple(t, out)?,
                AnonValue::Expr(e) => self.keep_inner(e, out)?,
            },
            Statement::IfThenElse { cond, then_b, else_b, .. } => {
                self.atomic(cond, Kind::Future, out)?;
                then_b.stmts = self.stmts(std::mem::take(&mut then_b.stmts))?;
                else_b.stmts = self.stmts(std::mem::take(&mut else_b.stmts))?;
            }
            Statement::Sequence { first, second, .. } => {
                *first = self.stmts(std::mem::take(first))?;
                *second = self.stmts(std::mem::take(second))?;
            }
            Statement::ExprStmt { expr, outs, span } => {
                if produces_value(expr) {
                    let outs = std::mem::take(outs);
                    let span = *span;
                    let expr = std::mem::replace(expr, Expr::SelfRef(span));
                    self.emit_into(expr, outs, span, out)?;
                    return Ok(());
                }
                self.keep_inner(expr, out)?;
            }
        }
        out.push(s);
        Ok(())
    }

    fn tuple(&mut self, t: &mut TupleExpr, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match t {
            TupleExpr::Tuple { args, .. } => {
                for a in args {
                    self.atomic(a, Kind::Future, out)?;
                }
            }
            TupleExpr::Cons { head, tail, .. } => {
                self.tuple(head, out)?;
                self.tuple(tail, out)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Flatten the arguments of `e` but keep its outermost node.
    fn keep_inner(&mut self, e: &mut Expr, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match e {
            Expr::Call { proc, args, .. } => {
                let kinds = self.param_kinds.get(proc.as_str()).cloned();
                for (i, a) in args.iter_mut().enumerate() {
                    let want = kinds
                        .as_ref()
                        .and_then(|k| k.get(i).copied())
                        .unwrap_or(Kind::Future);
                    self.atomic(a, want, out)?;
                }
            }
            Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
                if !matches!(**base, Expr::SelfRef(_) | Expr::AnonRec(_)) {
                    self.atomic(base, Kind::Handle, out)?;
                }
                for m in chain {
                    for a in &mut m.args {
                        self.atomic(a, Kind::Future, out)?;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Make `e` a variable, number, or constant, hoisting as needed.
    fn atomic(
        &mut self,
        e: &mut Expr,
        want: Kind,
        out: &mut Vec<Statement>,
    ) -> Result<(), Diagnostic> {
        if !produces_value(e) {
            return Ok(());
        }
        let span = e.span();
        let fresh = match e {
            // A hoisted call is named by what it produces.
            Expr::Call { proc, .. } => {
                let kind = match self.out_kinds.get(proc.as_str()).map(Vec::as_slice) {
                    Some([one]) => *one,
                    None => want,
                    Some(outs) => {
                        return Err(Diagnostic::error(
                            "E0215",
                            span,
                            format!(
                                "`{proc}` produces {} outputs and cannot be used as a value",
                                outs.len()
                            ),
                        ));
                    }
                };
                self.names.of_kind("val", kind)
            }
            _ => self.names.of_kind("val", want),
        };
        let expr = std::mem::replace(e, Expr::Var(fresh.clone()));
        self.emit_into(expr, vec![fresh], span, out)?;
        Ok(())
    }

    /// Turn a value-producing expression into statements writing `outs`.
    fn emit_into(
        &mut self,
        e: Expr,
        outs: Vec<Name>,
        span: Span,
        out: &mut Vec<Statement>,
    ) -> Result<(), Diagnostic> {
        match e {
            Expr::Call { proc, mut args, named, .. } => {
                let kinds = self.param_kinds.get(proc.as_str()).cloned();
                for (i, a) in args.iter_mut().enumerate() {
                    let want = kinds
                        .as_ref()
                        .and_then(|k| k.get(i).copied())
                        .unwrap_or(Kind::Future);
                    self.atomic(a, want, out)?;
                }
                out.push(Statement::Call { proc, args, named, outs, span });
            }
            Expr::DotSend { base, chain, .. } => {
                // One target, several messages; the reply comes from the
                // last of them.
                let mut base = *base;
                self.atomic(&mut base, Kind::Handle, out)?;
                let target = self.send_target(base, span)?;
                let n = chain.len();
                let mut msgs = Vec::with_capacity(n);
                for (i, m) in chain.into_iter().enumerate() {
                    let mut args = m.args;
                    for a in &mut args {
                        self.atomic(a, Kind::Future, out)?;
                    }
                    let outs = if i + 1 == n { outs.clone() } else { Vec::new() };
                    msgs.push(MsgSend { name: m.name, args, outs, span: m.span });
                }
                out.push(Statement::Send { target, msgs, span });
            }
            Expr::TildeSend { base, chain, .. } => {
                // Each reply becomes the target of the next message.
                let mut base = *base;
                self.atomic(&mut base, Kind::Handle, out)?;
                let mut target = self.send_target(base, span)?;
                let n = chain.len();
                for (i, m) in chain.into_iter().enumerate() {
                    let mut args = m.args;
                    for a in &mut args {
                        self.atomic(a, Kind::Future, out)?;
                    }
                    let next = if i + 1 == n {
                        outs.clone()
                    } else {
                        vec![self.names.handle("val")]
                    };
                    out.push(Statement::Send {
                        target,
                        msgs: vec![MsgSend { name: m.name, args, outs: next.clone(), span: m.span }],
                        span,
                    });
                    target = SendTarget::Var(next[0].clone());
                }
            }
            other => {
                // A plain value: a one-output alias keeps it.
                match outs.as_slice() {
                    [one] => out.push(Statement::Alias { var: one.clone(), expr: other, span }),
                    _ => {
                        return Err(Diagnostic::error(
                            "E0216",
                            span,
                            "this expression produces one value",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn send_target(&mut self, base: Expr, span: Span) -> Result<SendTarget, Diagnostic> {
        match base {
            Expr::Var(n) => Ok(SendTarget::Var(n)),
            Expr::SelfRef(s) => Ok(SendTarget::SelfRef(s)),
            _ => Err(Diagnostic::error(
                "E0217",
                span,
                "messages need a variable or `~` as their target",
            )),
        }
    }
}

/// Calls and sends produce values through processes; everything else is
/// already a value.
fn produces_value(e: &Expr) -> bool {
    matches!(e, Expr::Call { .. } | Expr::DotSend { .. } | Expr::TildeSend { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        let p = crate::desugar::expressions::expand_expressions(p, &mut names).expect("expressions");
        expand_embedded_calls(p, &mut names).expect("hoist")
    }

    fn rhs(p: &Program) -> &[Statement] {
        &p.decls[0].body[0].rules[0].rhs
    }

    #[test]
    fn call_argument_hoists_to_fresh_variable() {
        let p = run(
            "#f(InList, Func)->y { go=1 || filter1(InList.isempty, Func, InList)->y }\n\
             #filter1(t, Func, InList)->o { t=true || o<-done }",
        );
        let rhs = rhs(&p);
        assert_eq!(rhs.len(), 2);
        match (&rhs[0], &rhs[1]) {
            (Statement::Send { target, msgs, .. }, Statement::Call { proc, args, .. }) => {
                assert!(matches!(target, SendTarget::Var(n) if n.text == "InList"));
                assert_eq!(msgs[0].name.as_deref(), Some("isempty"));
                assert_eq!(msgs[0].outs.len(), 1);
                assert_eq!(proc, "filter1");
                assert!(matches!(&args[0], Expr::Var(n) if n.text == msgs[0].outs[0].text));
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn alias_of_call_writes_target_directly() {
        let p = run("#f(x)->y { x=go || y <- double(x) }");
        match &rhs(&p)[0] {
            Statement::Call { proc, outs, .. } => {
                assert_eq!(proc, "double");
                assert_eq!(outs[0].text, "y");
            }
            other => panic!("expected call into y, got {other:?}"),
        }
    }

    #[test]
    fn arithmetic_flattens_into_builtin_calls() {
        let p = run("#f(a, b)->y { a=go || y <- a+b*2 }");
        let rhs = rhs(&p);
        assert_eq!(rhs.len(), 2);
        match (&rhs[0], &rhs[1]) {
            (
                Statement::Call { proc: mul, outs: o1, .. },
                Statement::Call { proc: add, args, outs: o2, .. },
            ) => {
                assert_eq!(mul, "mul");
                assert_eq!(add, "add");
                assert!(matches!(&args[1], Expr::Var(n) if n.text == o1[0].text));
                assert_eq!(o2[0].text, "y");
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn hoisted_object_keeps_handle_kind() {
        let p = run(
            "#make(x)~ { go=1 | ~note(x) }\n\
             #use(x)->y { x=go || attach(make(x))->y }\n\
             #attach(Obj)->y { Obj$ || y<-done }",
        );
        let rhs = &p.decls[1].body[0].rules[0].rhs;
        match &rhs[0] {
            Statement::Call { proc, outs, .. } => {
                assert_eq!(proc, "make");
                assert_eq!(outs[0].kind, Kind::Handle);
            }
            other => panic!("expected hoisted make call, got {other:?}"),
        }
    }

    #[test]
    fn dot_chain_replies_from_last_message() {
        let p = run("#f(L)->y { go=1 || y <- L.f(1).g(2) }");
        match &rhs(&p)[0] {
            Statement::Send { msgs, .. } => {
                assert_eq!(msgs.len(), 2);
                assert!(msgs[0].outs.is_empty());
                assert_eq!(msgs[1].outs[0].text, "y");
            }
            other => panic!("expected send, got {other:?}"),
        }
    }

    #[test]
    fn tilde_chain_retargets_through_replies() {
        let p = run("#f(L)->y { go=1 || y <- L~tail~head }");
        let rhs = rhs(&p);
        assert_eq!(rhs.len(), 2);
        match (&rhs[0], &rhs[1]) {
            (Statement::Send { target: t1, msgs: m1, .. }, Statement::Send { target: t2, msgs: m2, .. }) => {
                assert!(matches!(t1, SendTarget::Var(n) if n.text == "L"));
                let mid = &m1[0].outs[0];
                assert_eq!(mid.kind, Kind::Handle);
                assert!(matches!(t2, SendTarget::Var(n) if n.text == mid.text));
                assert_eq!(m2[0].outs[0].text, "y");
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn become_keeps_outermost_node() {
        let p = run("#f(Func, InList)< { go=1 || <=filter1(InList.isempty, Func, InList) }\n\
                     #filter1(t, Func, InList)->o { t=true || o<-done }");
        let rhs = rhs(&p);
        assert_eq!(rhs.len(), 2);
        assert!(matches!(&rhs[0], Statement::Send { .. }));
        match &rhs[1] {
            Statement::Become { value: Expr::Call { proc, args, .. }, .. } => {
                assert_eq!(proc, "filter1");
                assert!(args.iter().all(Expr::is_atomic));
            }
            other => panic!("expected become of flattened call, got {other:?}"),
        }
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#f(a, b)->y { a=go || y <- a+b*2 }");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = expand_embedded_calls(p, &mut names).expect("hoist");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
