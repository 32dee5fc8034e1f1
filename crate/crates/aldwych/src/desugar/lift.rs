//! Lifting embedded rules, conditionals, and sequences into procedures.
//!
//! A rule may end in a block of further rules.  The block becomes a
//! procedure of its own: it takes the embedding procedure's arguments —
//! continued to wherever the rule left them — plus any declared locals,
//! and is called where the rule's recursion would have been.  Bars inside
//! the block count exits: one bar recurses the block itself, two return to
//! the embedding procedure (an explicit call), three leave both behind,
//! and in general each extra bar exits one more level.
//!
//! `?cond : then : else` at the end of a rule becomes a procedure holding
//! the condition's result as an extra first argument and one final rule
//! per branch.  A branch that does not write the output with `<=` carries
//! on as the procedure hosting the conditional, so the chain of lifted
//! procedures is administrative: the hosting procedure's recursion
//! threads through it unchanged.  `+ first ; second` likewise moves
//! `second` into a procedure with a single unconditional rule, called
//! alongside `first`.
//!
//! After this pass no rule has an embedded body and no right side holds a
//! conditional or sequence; every continuation is an explicit call or the
//! plain single-bar recursion the next pass expands.

use crate::ast::*;
use crate::diag::Diagnostic;

use super::recursion::{compute_slots, refs_continuation, subst_continuation_refs};
use super::NameGen;

pub fn lift_embedded_blocks(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut decls = Vec::with_capacity(p.decls.len());
    for mut d in p.decls {
        let me = Sig {
            name: d.name.clone(),
            params: d.params.iter().map(|p| p.name.clone()).collect(),
            outs: d.outspec.names().to_vec(),
        };
        let mut lifted = Vec::new();
        process_rules(&mut d.body, &me, &[], &mut lifted, names)?;
        decls.push(d);
        decls.append(&mut lifted);
    }
    Ok(Program { decls })
}

/// A procedure's calling shape, as the lifted code needs to know it.
#[derive(Clone)]
struct Sig {
    name: String,
    params: Vec<Name>,
    outs: Vec<Name>,
}

impl Sig {
    fn to_decl(&self, body: Vec<Group>, span: crate::span::Span) -> Decl {
        Decl {
            name: self.name.clone(),
            params: self
                .params
                .iter()
                .map(|n| Param { name: n.clone(), default: None, span: n.span })
                .collect(),
            curried: Vec::new(),
            outspec: OutSpec::Named(self.outs.clone()),
            init: Vec::new(),
            macro_body: None,
            body,
            span,
        }
    }
}

/// Rewrite every rule of a procedure whose enclosing procedures, outermost
/// first, are `outer`.
fn process_rules(
    groups: &mut Vec<Group>,
    me: &Sig,
    outer: &[Sig],
    lifted: &mut Vec<Decl>,
    names: &mut NameGen,
) -> Result<(), Diagnostic> {
    for g in groups.iter_mut() {
        for r in &mut g.rules {
            process_rule(r, me, outer, lifted, names)?;
        }
    }
    Ok(())
}

fn process_rule(
    r: &mut Rule,
    me: &Sig,
    outer: &[Sig],
    lifted: &mut Vec<Decl>,
    names: &mut NameGen,
) -> Result<(), Diagnostic> {
    let original_bars = r.bars;

    // A conditional or sequence ending the right side.
    let cont = if original_bars == 1 { Some(me) } else { None };
    let tail_lifted = lift_tail(
        &mut r.rhs,
        &r.lhs,
        &me.params,
        &me.outs,
        cont,
        &me.name,
        lifted,
        names,
    )?;
    let mut continued = tail_lifted && original_bars == 1;
    if continued {
        r.bars = 2;
    }

    // An embedded body.
    if let Some(mut body) = r.body.take() {
        if tail_lifted {
            return Err(Diagnostic::error(
                "E0228",
                r.span,
                "a rule cannot both end in a conditional or sequence and carry an embedded body",
            ));
        }
        if original_bars != 1 {
            return Err(Diagnostic::error(
                "E0223",
                r.span,
                "an embedded body replaces the rule's recursion, so the rule must have one bar",
            ));
        }
        let (locals, local_args) = extract_locals(&mut r.rhs);
        let q = Sig {
            name: names.fresh_text(&me.name),
            params: me.params.iter().chain(&locals).cloned().collect(),
            outs: me.outs.clone(),
        };
        let slots = compute_slots(&r.lhs, &me.params, &me.outs, &mut r.rhs, names);
        let mut args = slots.ins;
        args.extend(local_args);
        r.rhs.push(Statement::Call {
            proc: q.name.clone(),
            args,
            named: Vec::new(),
            outs: slots.outs.clone(),
            span: r.span,
        });
        if refs_continuation(&r.rhs) {
            subst_continuation_refs(&mut r.rhs, &me.outs, &slots.outs, r.span)?;
        }
        r.bars = 2;
        continued = true;

        // Outer procedures come before the ones their rules create.
        let at = lifted.len();
        let inner: Vec<Sig> = outer.iter().chain([me]).cloned().collect();
        process_rules(&mut body, &q, &inner, lifted, names)?;
        lifted.insert(at, q.to_decl(body, r.span));
    }

    // Extra bars exit enclosing procedures.
    if !continued {
        let exits = r.bars - 1;
        let depth = outer.len() as u32;
        if exits == 0 || exits == depth + 1 {
            // Recurse here (a later pass), or leave every level behind.
            if exits != 0 {
                r.bars = 2;
            }
        } else if exits <= depth {
            let target = &outer[(depth - exits) as usize];
            let slots = compute_slots(&r.lhs, &target.params, &target.outs, &mut r.rhs, names);
            r.rhs.push(Statement::Call {
                proc: target.name.clone(),
                args: slots.ins,
                named: Vec::new(),
                outs: slots.outs.clone(),
                span: r.span,
            });
            if refs_continuation(&r.rhs) {
                subst_continuation_refs(&mut r.rhs, &target.outs, &slots.outs, r.span)?;
            }
            r.bars = 2;
        } else {
            return Err(Diagnostic::error(
                "E0224",
                r.span,
                format!(
                    "{} bars would exit {exits} levels, but only {} enclose this rule",
                    r.bars,
                    depth + 1,
                ),
            ));
        }
    }
    Ok(())
}

/// Pull local declarations out of a statement list.  A local whose value
/// is a plain assignment collapses into the call argument directly.
fn extract_locals(stmts: &mut Vec<Statement>) -> (Vec<Name>, Vec<Expr>) {
    let mut locals = Vec::new();
    stmts.retain(|s| match s {
        Statement::LocalDecl { names, .. } => {
            locals.extend(names.iter().cloned());
            false
        }
        _ => true,
    });
    let args = locals
        .iter()
        .map(|l| {
            let simple = stmts.iter().position(|s| {
                matches!(s, Statement::Alias { var, expr, .. }
                    if var.text == l.text
                        && matches!(expr, Expr::Var(_) | Expr::Num(..) | Expr::Atom(..)))
            });
            match simple {
                Some(i) => match stmts.remove(i) {
                    Statement::Alias { expr, .. } => expr,
                    _ => unreachable!(),
                },
                None => Expr::Var(l.clone()),
            }
        })
        .collect();
    (locals, args)
}

/// Lift a conditional or sequence ending `stmts`, if there is one.
/// `env` names the variables in scope that the lifted procedure must
/// receive; `cont` is the procedure a branch carries on as, if any.
#[allow(clippy::too_many_arguments)]
fn lift_tail(
    stmts: &mut Vec<Statement>,
    lhs: &[LhsItem],
    env: &[Name],
    outs: &[Name],
    cont: Option<&Sig>,
    host_name: &str,
    lifted: &mut Vec<Decl>,
    names: &mut NameGen,
) -> Result<bool, Diagnostic> {
    if let Some(mis) = stmts
        .iter()
        .position(|s| matches!(s, Statement::IfThenElse { .. } | Statement::Sequence { .. }))
    {
        if mis + 1 != stmts.len() {
            return Err(Diagnostic::error(
                "E0222",
                stmts[mis].span(),
                "a conditional or sequence must end its rule; later statements would not know \
                 whether the rule carried on",
            ));
        }
    }
    match stmts.last() {
        Some(Statement::IfThenElse { .. }) => {
            let Some(Statement::IfThenElse { cond, then_b, else_b, span }) = stmts.pop() else {
                unreachable!()
            };
            let (locals, local_args) = extract_locals(stmts);
            let t = names.future("t");
            let q = Sig {
                name: names.fresh_text(host_name),
                params: [t.clone()]
                    .into_iter()
                    .chain(locals.iter().cloned())
                    .chain(env.iter().cloned())
                    .collect(),
                outs: outs.to_vec(),
            };
            let slots = compute_slots(lhs, env, outs, stmts, names);
            let mut args = vec![cond];
            args.extend(local_args);
            args.extend(slots.ins);
            stmts.push(Statement::Call {
                proc: q.name.clone(),
                args,
                named: Vec::new(),
                outs: slots.outs.clone(),
                span,
            });
            if refs_continuation(stmts) {
                subst_continuation_refs(stmts, outs, &slots.outs, span)?;
            }

            let env2: Vec<Name> = locals.into_iter().chain(env.iter().cloned()).collect();
            let at = lifted.len();
            let mut rules = Vec::new();
            for (value, branch) in [("true", then_b), ("false", else_b)] {
                let mut body = branch.stmts;
                let bcont = match branch.bars {
                    Some(b) if b >= 2 => None,
                    _ => cont,
                };
                finalize_branch(&mut body, &env2, outs, bcont, host_name, lifted, names)?;
                rules.push(Rule {
                    lhs: vec![LhsItem::Equality {
                        var: t.clone(),
                        pat: Pattern::Const(value.to_string(), branch.span),
                        span: branch.span,
                    }],
                    bars: 2,
                    rhs: body,
                    body: None,
                    span: branch.span,
                });
            }
            lifted.insert(at, q.to_decl(vec![Group { rules }], span));
            Ok(true)
        }
        Some(Statement::Sequence { .. }) => {
            let Some(Statement::Sequence { locals: decl_locals, first, mut second, span }) =
                stmts.pop()
            else {
                unreachable!()
            };
            stmts.extend(first);
            let (mut locals, mut local_args) = extract_locals(stmts);
            for l in decl_locals {
                if !locals.iter().any(|have| have.text == l.text) {
                    local_args.push(Expr::Var(l.clone()));
                    locals.push(l);
                }
            }
            let q = Sig {
                name: names.fresh_text(host_name),
                params: env.iter().cloned().chain(locals.iter().cloned()).collect(),
                outs: outs.to_vec(),
            };
            let slots = compute_slots(lhs, env, outs, stmts, names);
            let mut args = slots.ins;
            args.extend(local_args);
            stmts.push(Statement::Call {
                proc: q.name.clone(),
                args,
                named: Vec::new(),
                outs: slots.outs.clone(),
                span,
            });
            if refs_continuation(stmts) {
                subst_continuation_refs(stmts, outs, &slots.outs, span)?;
            }

            let env2: Vec<Name> = env.iter().cloned().chain(locals).collect();
            let at = lifted.len();
            finalize_branch(&mut second, &env2, outs, cont, host_name, lifted, names)?;
            let rule = Rule { lhs: Vec::new(), bars: 2, rhs: second, body: None, span };
            lifted.insert(at, q.to_decl(vec![Group { rules: vec![rule] }], span));
            Ok(true)
        }
        _ => Ok(false),
    }
}

/// Finish the body of a lifted rule: lift anything it ends with itself,
/// then either let a `<=` speak for the output or carry on as `cont`.
fn finalize_branch(
    stmts: &mut Vec<Statement>,
    env: &[Name],
    outs: &[Name],
    cont: Option<&Sig>,
    host_name: &str,
    lifted: &mut Vec<Decl>,
    names: &mut NameGen,
) -> Result<(), Diagnostic> {
    if lift_tail(stmts, &[], env, outs, cont, host_name, lifted, names)? {
        return Ok(());
    }
    let has_ref = refs_continuation(stmts);
    let becomes = stmts.iter().any(|s| matches!(s, Statement::Become { .. }));
    match cont {
        Some(c) if has_ref || !becomes => {
            let slots = compute_slots(&[], &c.params, &c.outs, stmts, names);
            stmts.push(Statement::Call {
                proc: c.name.clone(),
                args: slots.ins,
                named: Vec::new(),
                outs: slots.outs.clone(),
                span: c.outs.first().map(|n| n.span).unwrap_or(crate::span::Span::DUMMY),
            });
            if has_ref {
                subst_continuation_refs(stmts, &c.outs, &slots.outs, crate::span::Span::DUMMY)?;
            }
        }
        _ => {
            if has_ref {
                return Err(Diagnostic::error(
                    "E0226",
                    stmts.first().map(|s| s.span()).unwrap_or(crate::span::Span::DUMMY),
                    "`~` and `<` name a continuation, but this rule does not carry on",
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desugar::Stage;
    use crate::parser::parse;

    fn lift(src: &str) -> Program {
        let p = parse(src).expect("parse");
        crate::desugar::expand_until(p, Stage::Lift).expect("expand")
    }

    fn full(src: &str) -> Program {
        let p = parse(src).expect("parse");
        crate::desugar::expand_surface(p).expect("expand")
    }

    fn rules(d: &Decl) -> Vec<&Rule> {
        d.body.iter().flat_map(|g| &g.rules).collect()
    }

    fn call_to<'a>(r: &'a Rule, proc: &str) -> &'a Statement {
        r.rhs
            .iter()
            .find(|s| matches!(s, Statement::Call { proc: p, .. } if p == proc))
            .unwrap_or_else(|| panic!("no call to {proc} in {r:?}"))
    }

    #[test]
    fn embedded_body_becomes_its_own_procedure() {
        // Delete everything between stop and start on a stream.
        let p = full(
            "#delbetween (in) ->out\n\
             { in.stop | { in.start || ; in?m | ; in$ ||| out$ };\n\
               in?m | out^m;\n\
               in$ || out$\n\
             }",
        );
        assert_eq!(p.decls.len(), 2);
        let host = &p.decls[0];
        let q = &p.decls[1];
        assert!(q.name.starts_with("delbetween%"));
        assert_eq!(q.params.len(), 1);

        // The stop rule hands its remainder to the block's procedure.
        let r = rules(host)[0];
        match call_to(r, &q.name) {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[0], Expr::Var(n) if n.text.starts_with("in%")));
                assert_eq!(outs[0].text, "out");
            }
            _ => unreachable!(),
        }

        // Inside the block: start returns to the host, a plain element
        // self-recurses, and a closed stream ends both levels.
        let qs = rules(q);
        assert!(matches!(call_to(qs[0], "delbetween"), Statement::Call { .. }));
        assert!(matches!(call_to(qs[1], &q.name), Statement::Call { .. }));
        assert_eq!(qs[2].bars, 2);
        assert!(matches!(&qs[2].rhs[0], Statement::Bind { var, term: TupleExpr::Nil(_), .. }
            if var.text == "out"));
        assert!(!qs[2].rhs.iter().any(|s| matches!(s, Statement::Call { .. })));
    }

    #[test]
    fn block_locals_join_the_parameters_and_plain_values_collapse() {
        // Count what is deleted: the local starts at 0 and rides along.
        let p = full(
            "#delcountbetween (in) ->(out, count)\n\
             { in.stop | num<-0, <(num)\n\
               { in.start || count^num;\n\
                 in?m | num<-num+1;\n\
                 in$ ||| count^num$, out$\n\
               };\n\
               in?m | out^m;\n\
               in$ || count$, out$\n\
             }",
        );
        let q = &p.decls[1];
        assert_eq!(q.params.len(), 2);
        assert_eq!(q.params[1].name.text, "num");

        // The initial value is passed directly, not through a variable.
        let host_call = call_to(rules(&p.decls[0])[0], &q.name);
        match host_call {
            Statement::Call { args, .. } => {
                assert!(matches!(&args[1], Expr::Num(n, _) if *n == 0.into()));
            }
            _ => unreachable!(),
        }

        // Leaving the block reports the count so far and returns to the
        // host with the remainder; the local is dropped.
        let exit = rules(q)[0];
        match call_to(exit, "delcountbetween") {
            Statement::Call { args, outs, .. } => {
                assert_eq!(args.len(), 1);
                assert_eq!(outs[0].text, "out");
                assert!(outs[1].text.starts_with("count%"));
            }
            _ => unreachable!(),
        }
        assert!(matches!(&exit.rhs[0], Statement::Bind { var, .. } if var.text == "count"));

        // Counting up feeds the block's own recursion.
        let count = rules(q)[1];
        match call_to(count, &q.name) {
            Statement::Call { args, .. } => {
                assert!(matches!(&args[1], Expr::Var(n) if n.text.starts_with("num%")));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn conditional_chain_matches_by_hand_expansion() {
        // Filter a list object through a predicate.
        let p = full(
            "#filter(Func, InList)~\n\
             { | ? InList.isempty\n\
               : <=empty();\n\
               : InList.head->H.tail->InList, <(H)\n\
                 ? Func H\n\
                 : <=~cons(H);\n\
                 :\n\
             }",
        );
        assert_eq!(p.decls.len(), 3);
        let (f, q1, q2) = (&p.decls[0], &p.decls[1], &p.decls[2]);

        // filter: ask, then hand everything to the first lifted procedure.
        let fr = rules(f)[0];
        assert_eq!(fr.bars, 2);
        let t1 = match &fr.rhs[0] {
            Statement::Send { target: SendTarget::Var(h), msgs, .. } => {
                assert_eq!(h.text, "InList");
                assert_eq!(msgs[0].name.as_deref(), Some("isempty"));
                msgs[0].outs[0].text.clone()
            }
            other => panic!("expected the question, got {other:?}"),
        };
        match call_to(fr, &q1.name) {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[0], Expr::Var(n) if n.text == t1));
                assert!(matches!(&args[1], Expr::Var(n) if n.text == "Func"));
                assert!(matches!(&args[2], Expr::Var(n) if n.text == "InList"));
                assert!(outs[0].text.starts_with("Self%"));
            }
            _ => unreachable!(),
        }

        // q1 true: the answer is the empty list.
        let q1r = rules(q1);
        assert!(matches!(&q1r[0].lhs[0],
            LhsItem::Equality { pat: Pattern::Const(c, _), .. } if c == "true"));
        match &q1r[0].rhs[0] {
            Statement::Call { proc, outs, .. } => {
                assert_eq!(proc, "empty");
                assert!(outs[0].text.starts_with("Self%"));
            }
            other => panic!("expected empty(), got {other:?}"),
        }

        // q1 false: take the head, ask the predicate, go one level deeper
        // with the local and the tail.
        match call_to(q1r[1], &q2.name) {
            Statement::Call { args, .. } => {
                assert_eq!(args.len(), 4);
                assert!(matches!(&args[1], Expr::Var(n) if n.text == "H"));
                assert!(matches!(&args[3], Expr::Var(n) if n.text.starts_with("InList%")));
            }
            _ => unreachable!(),
        }

        // q2 true: keep the head in front of the filtered rest.
        let q2r = rules(q2);
        let rest = match call_to(q2r[0], "filter") {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[1], Expr::Var(n) if n.text == "InList"));
                outs[0].text.clone()
            }
            _ => unreachable!(),
        };
        match q2r[0]
            .rhs
            .iter()
            .find(|s| matches!(s, Statement::Send { .. }))
            .expect("the cons send")
        {
            Statement::Send { target: SendTarget::Var(h), msgs, .. } => {
                assert_eq!(h.text, rest);
                assert_eq!(msgs[0].name.as_deref(), Some("cons"));
                assert!(msgs[0].outs[0].text.starts_with("Self%"));
            }
            _ => unreachable!(),
        }

        // q2 false: drop the head, the filtered rest is the whole answer.
        match call_to(q2r[1], "filter") {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[0], Expr::Var(n) if n.text == "Func"));
                assert!(outs[0].text.starts_with("Self%"));
            }
            _ => unreachable!(),
        }
        assert_eq!(q2r[1].rhs.len(), 1);
    }

    #[test]
    fn sequence_second_step_runs_after_the_first() {
        let p = full("#relay(in)->out { in?m | +<(t) prep(m)->t; out^t }");
        assert_eq!(p.decls.len(), 2);
        let q = &p.decls[1];
        // First step stays; the call passes the remainder and the local.
        let host = rules(&p.decls[0])[0];
        assert!(matches!(&host.rhs[0], Statement::Call { proc, .. } if proc == "prep"));
        match call_to(host, &q.name) {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[0], Expr::Var(n) if n.text.starts_with("in%")));
                assert!(matches!(&args[1], Expr::Var(n) if n.text == "t"));
                assert_eq!(outs[0].text, "out");
            }
            _ => unreachable!(),
        }
        // Second step: unconditional, writes, and returns to the host.
        let qr = rules(q)[0];
        assert!(qr.lhs.is_empty());
        assert!(matches!(&qr.rhs[0], Statement::Bind { var, .. } if var.text == "out"));
        match call_to(qr, "relay") {
            Statement::Call { args, outs, .. } => {
                assert!(matches!(&args[0], Expr::Var(n) if n.text == "in"));
                assert!(outs[0].text.starts_with("out%"));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn too_many_bars_is_an_error() {
        let p = parse("#f(in)->out { in?m ||| out$ }").expect("parse");
        let err = crate::desugar::expand_surface(p).expect_err("should fail");
        assert_eq!(err.code, "E0224");
    }

    #[test]
    fn branch_bars_control_the_continuation() {
        // A single leading bar keeps the default continuation; a double
        // bar makes the branch final.
        let p = full("#gate(in)->out { in?m | ? m : | out^m; : || out$ }");
        let q = &p.decls[1];
        let qr = rules(q);
        assert!(matches!(qr[0].rhs.last().unwrap(),
            Statement::Call { proc, .. } if proc == "gate"));
        assert!(!qr[1].rhs.iter().any(|s| matches!(s, Statement::Call { .. })));
    }

    #[test]
    fn pass_is_idempotent() {
        let src = "#delbetween (in) ->out\n\
                   { in.stop | { in.start || ; in?m | ; in$ ||| out$ };\n\
                     in?m | out^m;\n\
                     in$ || out$\n\
                   }";
        let p = lift(src);
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = lift_embedded_blocks(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
