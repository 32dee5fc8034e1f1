//! Anonymous outputs and returns.
//!
//! A header may end in `<` (anonymous value output) or `~` (anonymous
//! handle output), message patterns may end in `-` (anonymous return), and
//! `>` statements write "the pending anonymous thing".  This pass gives
//! every such output a generated name so later passes deal only with named
//! outputs:
//!
//! * `#p(x) <` becomes `#p(x) -> val%N`, and `#p(x) ~` becomes
//!   `#p(x) -> Self%N`.
//! * A pattern `colour-` becomes `colour -> ret%N`, and the rule's `>`
//!   writes target `ret%N` — or, when the rule received no anonymous
//!   return, the procedure's anonymous value output.
//! * Sends and receives aimed at `~` are pointed at the procedure's one
//!   handle output.
//!
//! `~` and `<` used as *values* concern the recursive continuation and are
//! resolved by the recursion pass, not here.

use crate::ast::*;
use crate::diag::Diagnostic;

use super::NameGen;

pub fn expand_anonymous_forms(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut decls = Vec::with_capacity(p.decls.len());
    for mut d in p.decls {
        let anon_value = match &d.outspec {
            OutSpec::AnonValue(span) => {
                let n = names.future("val");
                d.outspec = OutSpec::Named(vec![Name { span: *span, ..n.clone() }]);
                Some(n.text)
            }
            _ => None,
        };
        if let OutSpec::AnonHandle(span) = &d.outspec {
            let n = names.handle("Self");
            d.outspec = OutSpec::Named(vec![Name { span: *span, ..n }]);
        }
        // The one handle-kind output, if any: the target `~` refers to.
        let handle_outs: Vec<Name> = d
            .outspec
            .names()
            .into_iter()
            .filter(|n| n.kind == Kind::Handle)
            .cloned()
            .collect();
        let self_handle = match handle_outs.as_slice() {
            [one] => Some(one.clone()),
            _ => None,
        };
        let value_out = anon_value
            .as_ref()
            .map(|v| Name::future(v.clone(), crate::span::Span::DUMMY));

        let mut err = None;
        walk_groups(&mut d.body, &mut |rule| {
            if let Err(e) = rewrite_rule(rule, self_handle.as_ref(), value_out.as_ref(), names) {
                err.get_or_insert(e);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        decls.push(d);
    }
    Ok(Program { decls })
}

fn walk_groups(gs: &mut [Group], f: &mut impl FnMut(&mut Rule)) {
    for g in gs {
        for r in &mut g.rules {
            f(r);
            if let Some(body) = &mut r.body {
                walk_groups(body, f);
            }
        }
    }
}

fn rewrite_rule(
    rule: &mut Rule,
    self_handle: Option<&Name>,
    value_out: Option<&Name>,
    names: &mut NameGen,
) -> Result<(), Diagnostic> {
    // Name the anonymous returns of received messages, remembering the
    // last one: that is what this rule's `>` statements write.
    let mut pending: Option<Name> = None;
    for item in &mut rule.lhs {
        match item {
            LhsItem::Messages { target, items, .. } => {
                if let MsgTarget::SelfRef(span) = target {
                    let Some(h) = self_handle else {
                        return Err(Diagnostic::error(
                            "E0214",
                            *span,
                            "`~` needs the procedure to have exactly one handle output",
                        ));
                    };
                    *target = MsgTarget::Var(Name { span: *span, ..h.clone() });
                }
                for m in items.iter_mut() {
                    if let Some(span) = m.anon_return.take() {
                        let ret = Name { span, ..names.future("ret") };
                        m.outs.push(ret.clone());
                        pending = Some(ret);
                    }
                }
            }
            LhsItem::RawCapture { target, .. } | LhsItem::Close { target, .. } => {
                if let MsgTarget::SelfRef(span) = target {
                    let Some(h) = self_handle else {
                        return Err(Diagnostic::error(
                            "E0214",
                            *span,
                            "`~` needs the procedure to have exactly one handle output",
                        ));
                    };
                    *target = MsgTarget::Var(Name { span: *span, ..h.clone() });
                }
            }
            _ => {}
        }
    }

    let target = pending.or_else(|| value_out.cloned());
    for s in &mut rule.rhs {
        rewrite_stmt(s, target.as_ref(), self_handle)?;
    }
    Ok(())
}

fn rewrite_stmt(
    s: &mut Statement,
    target: Option<&Name>,
    self_handle: Option<&Name>,
) -> Result<(), Diagnostic> {
    match s {
        Statement::AnonWrite { value, span } => {
            let Some(t) = target else {
                return Err(Diagnostic::error(
                    "E0213",
                    *span,
                    "`>` has no anonymous output to write: the rule received no \
                     anonymous return and the procedure has no anonymous value output",
                ));
            };
            *s = match std::mem::replace(value, AnonValue::Expr(Expr::SelfRef(*span))) {
                AnonValue::Bind(term) => {
                    Statement::Bind { var: t.clone(), term, span: *span }
                }
                AnonValue::Expr(expr) => {
                    Statement::Alias { var: t.clone(), expr, span: *span }
                }
            };
        }
        Statement::Send { target: st, span, .. } => {
            if let SendTarget::SelfRef(_) = st {
                let Some(h) = self_handle else {
                    return Err(Diagnostic::error(
                        "E0214",
                        *span,
                        "`~` needs the procedure to have exactly one handle output",
                    ));
                };
                *st = SendTarget::Var(h.clone());
            }
        }
        Statement::IfThenElse { then_b, else_b, .. } => {
            for s in then_b.stmts.iter_mut().chain(&mut else_b.stmts) {
                rewrite_stmt(s, target, self_handle)?;
            }
        }
        Statement::Sequence { first, second, .. } => {
            for s in first.iter_mut().chain(second.iter_mut()) {
                rewrite_stmt(s, target, self_handle)?;
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        expand_anonymous_forms(p, &mut names).expect("expand")
    }

    #[test]
    fn anonymous_value_output_named() {
        let p = run("#max(a, b)< { a<b |> b; a>=b |> a }");
        let d = &p.decls[0];
        let outs = d.outspec.names();
        assert_eq!(outs.len(), 1);
        assert!(outs[0].text.starts_with("val%"));
        assert_eq!(outs[0].kind, Kind::Future);
        // Both `>` writes now alias the named output.
        for g in &d.body {
            for r in &g.rules {
                match &r.rhs[0] {
                    Statement::Alias { var, .. } => assert_eq!(var.text, outs[0].text),
                    other => panic!("expected alias, got {other:?}"),
                }
            }
        }
    }

    #[test]
    fn anonymous_handle_output_named() {
        let p = run("#RoyalElephant(Proxy)~ {\n  colour-|>=white;\n:\n  ?m | Proxy^m\n}");
        let d = &p.decls[0];
        let outs = d.outspec.names();
        assert!(outs[0].text.starts_with("Self%"));
        assert_eq!(outs[0].kind, Kind::Handle);
        // The `colour-` return is a named reply the rule binds.
        let rule = &d.body[0].rules[0];
        match &rule.lhs[0] {
            LhsItem::Messages { items, .. } => {
                assert!(items[0].anon_return.is_none());
                assert_eq!(items[0].outs.len(), 1);
                assert!(items[0].outs[0].text.starts_with("ret%"));
            }
            other => panic!("expected message pattern, got {other:?}"),
        }
        // `>=white` binds the constant to that reply.
        match &rule.rhs[0] {
            Statement::Bind { var, term, .. } => {
                assert!(var.text.starts_with("ret%"));
                assert!(matches!(term, TupleExpr::Const(c, _) if c == "white"));
            }
            other => panic!("expected bind, got {other:?}"),
        }
    }

    #[test]
    fn message_return_takes_priority_over_value_output() {
        let p = run("#cell(x)< { get-|>x }");
        let rule = &p.decls[0].body[0].rules[0];
        match &rule.rhs[0] {
            Statement::Alias { var, .. } => assert!(var.text.starts_with("ret%")),
            other => panic!("expected alias, got {other:?}"),
        }
    }

    #[test]
    fn self_send_points_at_handle_output() {
        let p = run("#obj(x)~ { go=y | ~note(y) }");
        let d = &p.decls[0];
        let self_name = d.outspec.names()[0].text.clone();
        match &d.body[0].rules[0].rhs[0] {
            Statement::Send { target: SendTarget::Var(n), .. } => {
                assert_eq!(n.text, self_name);
            }
            other => panic!("expected send, got {other:?}"),
        }
    }

    #[test]
    fn stray_anon_write_rejected() {
        let src = "#p(x)->y { x=go |> 5 }";
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        let err = expand_anonymous_forms(p, &mut names).expect_err("should fail");
        assert_eq!(err.code, "E0213");
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#RoyalElephant(Proxy)~ {\n  colour-|>=white;\n:\n  ?m | Proxy^m\n}");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = expand_anonymous_forms(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
