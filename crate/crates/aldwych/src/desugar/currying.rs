//! Bracketed parameter groups.
//!
//! A declaration `#p(a)[b][c] -> out` is shorthand for a chain of
//! procedures: calling `p(a)` yields a function object which, applied to a
//! value `b`, yields another, and so on until the last application produces
//! the declared outputs.  This pass rewrites the declaration into that
//! chain.  Each link is a relay procedure with an anonymous handle output
//! whose single rule accepts one application message and forwards the
//! accumulated arguments:
//!
//! ```text
//! #p(a)~        { (b)- |> p%1(a, b) }
//! #p%1(a, b)~   { (c)- |> p%2(a, b, c) }
//! #p%2(a, b, c) -> out { ...original body... }
//! ```
//!
//! The application message captures the next bracketed parameter under its
//! declared name, so a capitalized bracketed parameter receives a handle.

use crate::ast::*;
use crate::diag::Diagnostic;

use super::NameGen;

pub fn expand_currying(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut decls = Vec::with_capacity(p.decls.len());
    for d in p.decls {
        if d.curried.is_empty() {
            decls.push(d);
            continue;
        }
        if let Some(bad) = d.curried.iter().find(|c| c.default.is_some()) {
            return Err(Diagnostic::error(
                "E0201",
                bad.span,
                "a bracketed parameter cannot have a default value",
            ));
        }
        expand_decl(d, names, &mut decls);
    }
    Ok(Program { decls })
}

fn expand_decl(d: Decl, names: &mut NameGen, out: &mut Vec<Decl>) {
    let span = d.span;
    let mut taken: Vec<Param> = d.params.clone();
    let mut proc_name = d.name.clone();
    for (i, step) in d.curried.iter().enumerate() {
        let last = i == d.curried.len() - 1;
        let next_name = names.fresh_text(&d.name);
        // The relay rule: accept one application message carrying the next
        // argument plus the reply to produce, and answer with the next link
        // (or, from the last relay, whatever the worker produces).
        let capture = Pattern::Var(step.name.clone());
        let lhs = vec![LhsItem::Messages {
            target: MsgTarget::Bare(span),
            items: vec![MsgPat {
                name: None,
                args: vec![capture],
                outs: Vec::new(),
                anon_return: Some(span),
                span,
            }],
            lookahead_at: None,
            span,
        }];
        let mut args: Vec<Expr> =
            taken.iter().map(|p| Expr::Var(p.name.clone())).collect();
        args.push(Expr::Var(step.name.clone()));
        let rhs = vec![Statement::AnonWrite {
            value: AnonValue::Expr(Expr::Call {
                proc: next_name.clone(),
                args,
                named: Vec::new(),
                span,
            }),
            span,
        }];
        out.push(Decl {
            name: proc_name,
            params: taken.clone(),
            curried: Vec::new(),
            outspec: OutSpec::AnonHandle(span),
            init: Vec::new(),
            macro_body: None,
            body: vec![Group {
                rules: vec![Rule { lhs, bars: 1, rhs, body: None, span }],
            }],
            span,
        });
        taken.push(Param { name: step.name.clone(), default: None, span: step.span });
        proc_name = next_name;
        if last {
            // The worker holds the original outputs and body.
            out.push(Decl {
                name: proc_name.clone(),
                params: taken.clone(),
                curried: Vec::new(),
                outspec: d.outspec.clone(),
                init: d.init.clone(),
                macro_body: d.macro_body.clone(),
                body: d.body.clone(),
                span,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        expand_currying(p, &mut names).expect("expand")
    }

    #[test]
    fn single_bracket_becomes_relay_and_worker() {
        let p = run("#atleast(n)[InList]< { n == 0 |> true }");
        assert_eq!(p.decls.len(), 2);
        assert_eq!(p.decls[0].name, "atleast");
        assert!(matches!(p.decls[0].outspec, OutSpec::AnonHandle(_)));
        assert_eq!(p.decls[0].params.len(), 1);
        let worker = &p.decls[1];
        assert!(worker.name.starts_with("atleast%"));
        assert_eq!(worker.params.len(), 2);
        assert_eq!(worker.params[1].name.text, "InList");
        assert_eq!(worker.params[1].name.kind, Kind::Handle);
        assert!(matches!(worker.outspec, OutSpec::AnonValue(_)));
        assert_eq!(worker.body.len(), 1);

        // The relay's one rule applies the object and forwards.
        let rule = &p.decls[0].body[0].rules[0];
        assert_eq!(rule.bars, 1);
        match &rule.lhs[0] {
            LhsItem::Messages { target: MsgTarget::Bare(_), items, .. } => {
                assert_eq!(items[0].name, None);
                assert!(items[0].anon_return.is_some());
                match &items[0].args[0] {
                    Pattern::Var(n) => assert_eq!(n.kind, Kind::Handle),
                    other => panic!("expected capture, got {other:?}"),
                }
            }
            other => panic!("expected message pattern, got {other:?}"),
        }
        match &rule.rhs[0] {
            Statement::AnonWrite { value: AnonValue::Expr(Expr::Call { proc, args, .. }), .. } => {
                assert_eq!(proc, &worker.name);
                assert_eq!(args.len(), 2);
            }
            other => panic!("expected reply write, got {other:?}"),
        }
    }

    #[test]
    fn two_brackets_chain_three_decls() {
        let p = run("#f(a)[b][c]->out { a=go || out<-c }");
        assert_eq!(p.decls.len(), 3);
        assert_eq!(p.decls[0].name, "f");
        assert_eq!(p.decls[0].params.len(), 1);
        assert_eq!(p.decls[1].params.len(), 2);
        assert_eq!(p.decls[2].params.len(), 3);
        assert!(matches!(p.decls[2].outspec, OutSpec::Named(_)));
        // Middle relay forwards to the worker.
        match &p.decls[1].body[0].rules[0].rhs[0] {
            Statement::AnonWrite { value: AnonValue::Expr(Expr::Call { proc, .. }), .. } => {
                assert_eq!(proc, &p.decls[2].name);
            }
            other => panic!("expected reply write, got {other:?}"),
        }
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#atleast(n)[InList]< { n == 0 |> true }");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = expand_currying(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }

    #[test]
    fn plain_decls_untouched() {
        let src = "#merge(in1, in2) -> out {\n  in1 ? m | out ^ m;\n  in1 $ || out <- in2;\n}\n";
        let p = run(src);
        assert_eq!(p.decls.len(), 1);
        assert!(p.decls[0].curried.is_empty());
    }
}
