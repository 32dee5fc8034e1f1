//! Implicit recursion.
//!
//! A single-bar rule carries on: after its right side runs, the procedure
//! tail-calls itself.  The interesting part is which values that call
//! passes — each argument continues from where the rule left it:
//!
//! * A stream the rule read continues at the remainder (the channel pass
//!   records this with a leading assignment, consumed here).
//! * An assignment to an input names the value the next round receives;
//!   the statement itself disappears.
//! * A reply bound to an input's name rebinds it: the binder is renamed
//!   fresh, later reads use the fresh name, and the call passes it.  The
//!   same happens to an input rebuilt with `=`.
//! * A written output hands the call its remainder (for stream writes) or
//!   a dangling fresh name (for complete writes); an untouched output is
//!   passed through for the continuation to produce.
//!
//! A rule that consumes nothing and completes all its outputs would
//! re-fire identically forever, so its recursion is dropped.  `<=` writes
//! the output and ends the recursion instead.  `~` and `<` as values name
//! the continuation's handle or value output and force the call into
//! existence.  After this pass every rule is final: what recursion remains
//! is an ordinary call.

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::span::Span;

use super::NameGen;

pub fn expand_implicit_recursion(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut p = p;
    let mut err = None;
    for d in &mut p.decls {
        let ins: Vec<Name> = d.params.iter().map(|p| p.name.clone()).collect();
        let outs: Vec<Name> = d.outspec.names().into_iter().cloned().collect();
        for g in &mut d.body {
            for r in &mut g.rules {
                if err.is_none() {
                    if let Err(e) = process_rule(&d.name, &ins, &outs, r, names) {
                        err = Some(e);
                    }
                }
            }
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(p),
    }
}

fn process_rule(
    proc: &str,
    ins: &[Name],
    outs: &[Name],
    rule: &mut Rule,
    names: &mut NameGen,
) -> Result<(), Diagnostic> {
    if rule.body.is_some() {
        return Err(Diagnostic::error(
            "E0223",
            rule.span,
            "embedded rules should have been lifted before recursion is expanded",
        ));
    }
    rule.rhs.retain(|s| !matches!(s, Statement::LocalDecl { .. }));

    let slots = compute_slots(&rule.lhs, ins, outs, &mut rule.rhs, names);
    let has_ref = refs_continuation(&rule.rhs);
    let becomes = rule
        .rhs
        .iter()
        .any(|s| matches!(s, Statement::Become { .. }));

    let recurse = rule.bars == 1
        && (has_ref || (!becomes && !(!slots.in_changed && slots.outs_all_full)));

    if has_ref && !recurse {
        return Err(Diagnostic::error(
            "E0226",
            rule.span,
            "`~` and `<` name the recursive continuation, which a final rule does not have",
        ));
    }

    if recurse {
        rule.rhs.push(Statement::Call {
            proc: proc.to_string(),
            args: slots.ins.clone(),
            named: Vec::new(),
            outs: slots.outs.clone(),
            span: rule.span,
        });
    }
    if has_ref {
        subst_continuation_refs(&mut rule.rhs, outs, &slots.outs, rule.span)?;
    }

    // `<=` statements become writes of the output.
    if becomes {
        let [out] = outs else {
            return Err(Diagnostic::error(
                "E0225",
                rule.span,
                format!("`<=` writes the output, but `{proc}` has {}", outs.len()),
            ));
        };
        let stmts = std::mem::take(&mut rule.rhs);
        let mut rhs = Vec::with_capacity(stmts.len());
        for s in stmts {
            match s {
                Statement::Become { value, span } => {
                    lower_become(value, out.clone(), span, &mut rhs)?;
                }
                other => rhs.push(other),
            }
        }
        rule.rhs = rhs;
    }

    // Every rule is now explicit about its continuation.
    rule.bars = 2;
    Ok(())
}

/// Where each argument stands once a rule's right side has run.
pub(crate) struct Slots {
    pub ins: Vec<Expr>,
    pub outs: Vec<Name>,
    /// Some input was consumed or renewed; firing again would see
    /// different values.
    pub in_changed: bool,
    /// Every output was written completely.
    pub outs_all_full: bool,
}

enum OutWrite {
    Stream(String),
    Full,
}

/// Work out the continuation's arguments, consuming the override
/// assignments and renaming rebinding occurrences as it goes.
pub(crate) fn compute_slots(
    lhs: &[LhsItem],
    ins: &[Name],
    outs: &[Name],
    rhs: &mut Vec<Statement>,
    names: &mut NameGen,
) -> Slots {
    let in_names: Vec<&str> = ins.iter().map(|n| n.text.as_str()).collect();
    let out_names: Vec<&str> = outs.iter().map(|n| n.text.as_str()).collect();

    // Receives on handles consume from their streams.
    let mut in_changed = lhs
        .iter()
        .any(|i| matches!(i, LhsItem::Messages { .. } | LhsItem::RawCapture { .. }));

    let mut cur_in: HashMap<String, Expr> = HashMap::new();
    let mut out_writes: HashMap<String, OutWrite> = HashMap::new();

    // A closed output handle is spent: the last reference is gone, so
    // there is nothing left for a continuation to serve.
    for item in lhs {
        if let LhsItem::Close { target: MsgTarget::Var(n), .. } = item {
            if out_names.contains(&n.text.as_str()) {
                out_writes.insert(n.text.clone(), OutWrite::Full);
            }
        }
    }

    let mut i = 0;
    while i < rhs.len() {
        let mut remove = false;
        let mut renames: Vec<(String, Name)> = Vec::new();
        let rebind = |o: &mut Name,
                          cur_in: &mut HashMap<String, Expr>,
                          out_writes: &mut HashMap<String, OutWrite>,
                          renames: &mut Vec<(String, Name)>,
                          in_changed: &mut bool,
                          names: &mut NameGen| {
            if in_names.contains(&o.text.as_str()) {
                let fresh = names.of_kind(&o.text, o.kind);
                let old = std::mem::replace(&mut o.text, fresh.text.clone());
                cur_in.insert(old.clone(), Expr::Var(fresh.clone()));
                *in_changed = true;
                renames.push((old, fresh));
            } else if out_names.contains(&o.text.as_str()) {
                out_writes.insert(o.text.clone(), OutWrite::Full);
            }
        };
        match &mut rhs[i] {
            // An assignment to an input is the override itself.
            Statement::Alias { var, expr, .. } if in_names.contains(&var.text.as_str()) => {
                cur_in.insert(var.text.clone(), expr.clone());
                in_changed = true;
                remove = true;
            }
            Statement::Alias { var, .. } if out_names.contains(&var.text.as_str()) => {
                out_writes.insert(var.text.clone(), OutWrite::Full);
            }
            // An input rebuilt with `=` feeds the continuation under a
            // fresh name; an output built with `=` continues at the tail.
            Statement::Bind { var, term, .. } => {
                if in_names.contains(&var.text.as_str()) {
                    rebind(var, &mut cur_in, &mut out_writes, &mut renames, &mut in_changed, names);
                } else if out_names.contains(&var.text.as_str())
                    || out_writes.values().any(|w| matches!(w, OutWrite::Stream(t) if t == &var.text))
                {
                    let write = match cons_tail(term) {
                        Some(t) => OutWrite::Stream(t),
                        None => OutWrite::Full,
                    };
                    out_writes.insert(var.text.clone(), write);
                }
            }
            Statement::Call { outs: call_outs, .. } => {
                for o in call_outs.iter_mut() {
                    rebind(o, &mut cur_in, &mut out_writes, &mut renames, &mut in_changed, names);
                }
            }
            Statement::Send { msgs, .. } => {
                for o in msgs.iter_mut().flat_map(|m| m.outs.iter_mut()) {
                    rebind(o, &mut cur_in, &mut out_writes, &mut renames, &mut in_changed, names);
                }
            }
            // `<=` completes the single output.
            Statement::Become { .. } => {
                if let [o] = outs {
                    out_writes.insert(o.text.clone(), OutWrite::Full);
                }
            }
            _ => {}
        }
        if remove {
            rhs.remove(i);
        } else {
            for (old, fresh) in &renames {
                rename_reads_after(rhs, i + 1, old, fresh);
            }
            i += 1;
        }
    }

    let in_slots = ins
        .iter()
        .map(|n| cur_in.remove(&n.text).unwrap_or_else(|| Expr::Var(n.clone())))
        .collect();

    let mut outs_all_full = true;
    let out_slots = outs
        .iter()
        .map(|n| {
            // Follow the chain of stream writes to the last remainder.
            let mut at = n.text.clone();
            loop {
                match out_writes.get(&at) {
                    None => {
                        if at == n.text {
                            // Untouched: the continuation produces it.
                            outs_all_full = false;
                            return n.clone();
                        }
                        outs_all_full = false;
                        return Name { text: at, ..n.clone() };
                    }
                    Some(OutWrite::Stream(t)) => at = t.clone(),
                    Some(OutWrite::Full) => {
                        // Completed: give the continuation a dangling name.
                        return names.of_kind(&n.text, n.kind);
                    }
                }
            }
        })
        .collect();

    Slots { ins: in_slots, outs: out_slots, in_changed, outs_all_full }
}

/// The final tail variable of a list build, if it is a plain name.
fn cons_tail(term: &TupleExpr) -> Option<String> {
    match term {
        TupleExpr::Cons { tail, .. } => match &**tail {
            TupleExpr::Var(n) => Some(n.text.clone()),
            t @ TupleExpr::Cons { .. } => cons_tail(t),
            _ => None,
        },
        _ => None,
    }
}

fn rename_reads_after(rhs: &mut [Statement], from_idx: usize, old: &str, fresh: &Name) {
    let to = Expr::Var(fresh.clone());
    for s in rhs[from_idx..].iter_mut() {
        super::subst_var_stmt(s, old, &to);
    }
}

/// Does the rule mention `~` or `<` as a value?
pub(crate) fn refs_continuation(rhs: &[Statement]) -> bool {
    let mut found = false;
    for s in rhs {
        visit_exprs(s, &mut |e| {
            if matches!(e, Expr::SelfRef(_) | Expr::AnonRec(_)) {
                found = true;
            }
        });
    }
    found
}

/// Point `~` and `<` at the continuation's handle and value outputs.
pub(crate) fn subst_continuation_refs(
    rhs: &mut [Statement],
    outs: &[Name],
    out_slots: &[Name],
    span: Span,
) -> Result<(), Diagnostic> {
    let pick = |kind: Kind| {
        let mut it = outs
            .iter()
            .zip(out_slots)
            .filter(|(o, _)| o.kind == kind)
            .map(|(_, s)| s.clone());
        let first = it.next();
        match (first, it.next()) {
            (Some(n), None) => Some(n),
            _ => None,
        }
    };
    let handle = pick(Kind::Handle);
    let value = pick(Kind::Future);
    for s in rhs.iter_mut() {
        let mut err = None;
        map_exprs(s, &mut |e| {
            let (slot, what) = match e {
                Expr::SelfRef(_) => (&handle, "handle"),
                Expr::AnonRec(_) => (&value, "value"),
                _ => return,
            };
            match slot {
                Some(n) => *e = Expr::Var(n.clone()),
                None => {
                    err.get_or_insert(Diagnostic::error(
                        "E0227",
                        span,
                        format!("the continuation has no single {what} output to refer to"),
                    ));
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(())
}

/// Rewrite a `<=` into statements writing `out`.
pub(crate) fn lower_become(
    value: Expr,
    out: Name,
    span: Span,
    into: &mut Vec<Statement>,
) -> Result<(), Diagnostic> {
    match value {
        Expr::Call { proc, args, named, .. } => {
            into.push(Statement::Call { proc, args, named, outs: vec![out], span });
        }
        Expr::DotSend { base, chain, .. } => {
            let target = become_target(*base, span)?;
            let n = chain.len();
            let msgs = chain
                .into_iter()
                .enumerate()
                .map(|(i, m)| MsgSend {
                    name: m.name,
                    args: m.args,
                    outs: if i + 1 == n { vec![out.clone()] } else { Vec::new() },
                    span: m.span,
                })
                .collect();
            into.push(Statement::Send { target, msgs, span });
        }
        Expr::TildeSend { base, chain, .. } => {
            // Retarget through each reply; the last reply is the output.
            let mut target = become_target(*base, span)?;
            let n = chain.len();
            for (i, m) in chain.into_iter().enumerate() {
                let reply = if i + 1 == n {
                    out.clone()
                } else {
                    Name::handle(format!("{}%b{i}", out.text), span)
                };
                into.push(Statement::Send {
                    target,
                    msgs: vec![MsgSend {
                        name: m.name,
                        args: m.args,
                        outs: vec![reply.clone()],
                        span: m.span,
                    }],
                    span,
                });
                target = SendTarget::Var(reply);
            }
        }
        simple => into.push(Statement::Alias { var: out, expr: simple, span }),
    }
    Ok(())
}

fn become_target(base: Expr, span: Span) -> Result<SendTarget, Diagnostic> {
    match base {
        Expr::Var(n) => Ok(SendTarget::Var(n)),
        _ => Err(Diagnostic::error(
            "E0217",
            span,
            "messages need a variable target here",
        )),
    }
}

fn visit_exprs(s: &Statement, f: &mut impl FnMut(&Expr)) {
    fn expr(e: &Expr, f: &mut impl FnMut(&Expr)) {
        f(e);
        match e {
            Expr::Call { args, named, .. } => {
                args.iter().for_each(|a| expr(a, f));
                named.iter().for_each(|(_, v)| expr(v, f));
            }
            Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
                expr(base, f);
                chain.iter().flat_map(|m| &m.args).for_each(|a| expr(a, f));
            }
            Expr::Juxt { func, arg, .. } => {
                expr(func, f);
                expr(arg, f);
            }
            Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
                expr(lhs, f);
                expr(rhs, f);
            }
            _ => {}
        }
    }
    each_stmt_expr(s, &mut |e| expr(e, f));
}

fn map_exprs(s: &mut Statement, f: &mut impl FnMut(&mut Expr)) {
    fn expr(e: &mut Expr, f: &mut impl FnMut(&mut Expr)) {
        match e {
            Expr::Call { args, named, .. } => {
                args.iter_mut().for_each(|a| expr(a, f));
                named.iter_mut().for_each(|(_, v)| expr(v, f));
            }
            Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
                expr(base, f);
                chain.iter_mut().flat_map(|m| &mut m.args).for_each(|a| expr(a, f));
            }
            Expr::Juxt { func, arg, .. } => {
                expr(func, f);
                expr(arg, f);
            }
            Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
                expr(lhs, f);
                expr(rhs, f);
            }
            _ => {}
        }
        f(e);
    }
    each_stmt_expr_mut(s, &mut |e| expr(e, f));
}

fn each_stmt_expr(s: &Statement, f: &mut impl FnMut(&Expr)) {
    match s {
        Statement::Bind { term, .. } => tuple_exprs(term, f),
        Statement::Alias { expr, .. } => f(expr),
        Statement::Call { args, named, .. } => {
            args.iter().for_each(&mut *f);
            named.iter().for_each(|(_, v)| f(v));
        }
        Statement::Send { msgs, .. } => msgs.iter().flat_map(|m| &m.args).for_each(f),
        Statement::Put { items, .. } => {
            for it in items {
                match it {
                    PutItem::Tup(t) => tuple_exprs(t, f),
                    PutItem::Val(e) => f(e),
                }
            }
        }
        Statement::Become { value, .. } => f(value),
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => tuple_exprs(t, f),
            AnonValue::Expr(e) => f(e),
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            f(cond);
            then_b.stmts.iter().for_each(|s| each_stmt_expr(s, f));
            else_b.stmts.iter().for_each(|s| each_stmt_expr(s, f));
        }
        Statement::Sequence { first, second, .. } => {
            first.iter().chain(second).for_each(|s| each_stmt_expr(s, f));
        }
        Statement::ExprStmt { expr, .. } => f(expr),
        _ => {}
    }
}

fn each_stmt_expr_mut(s: &mut Statement, f: &mut impl FnMut(&mut Expr)) {
    match s {
        Statement::Bind { term, .. } => tuple_exprs_mut(term, f),
        Statement::Alias { expr, .. } => f(expr),
        Statement::Call { args, named, .. } => {
            args.iter_mut().for_each(&mut *f);
            named.iter_mut().for_each(|(_, v)| f(v));
        }
        Statement::Send { msgs, .. } => msgs.iter_mut().flat_map(|m| &mut m.args).for_each(f),
        Statement::Put { items, .. } => {
            for it in items {
                match it {
                    PutItem::Tup(t) => tuple_exprs_mut(t, f),
                    PutItem::Val(e) => f(e),
                }
            }
        }
        Statement::Become { value, .. } => f(value),
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => tuple_exprs_mut(t, f),
            AnonValue::Expr(e) => f(e),
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            f(cond);
            then_b.stmts.iter_mut().for_each(|s| each_stmt_expr_mut(s, f));
            else_b.stmts.iter_mut().for_each(|s| each_stmt_expr_mut(s, f));
        }
        Statement::Sequence { first, second, .. } => {
            first.iter_mut().chain(second.iter_mut()).for_each(|s| each_stmt_expr_mut(s, f));
        }
        Statement::ExprStmt { expr, .. } => f(expr),
        _ => {}
    }
}

fn tuple_exprs(t: &TupleExpr, f: &mut impl FnMut(&Expr)) {
    match t {
        TupleExpr::Tuple { args, .. } => args.iter().for_each(f),
        TupleExpr::Cons { head, tail, .. } => {
            tuple_exprs(head, f);
            tuple_exprs(tail, f);
        }
        _ => {}
    }
}

fn tuple_exprs_mut(t: &mut TupleExpr, f: &mut impl FnMut(&mut Expr)) {
    match t {
        TupleExpr::Tuple { args, .. } => args.iter_mut().for_each(f),
        TupleExpr::Cons { head, tail, .. } => {
            tuple_exprs_mut(head, f);
            tuple_exprs_mut(tail, f);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desugar::Stage;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        crate::desugar::expand_until(p, Stage::Recursion).expect("expand")
    }

    fn rules(p: &Program, d: usize) -> Vec<&Rule> {
        p.decls[d].body.iter().flat_map(|g| &g.rules).collect()
    }

    #[test]
    fn stream_rule_recurses_with_remainders() {
        let p = run("#merge(in1, in2)->out {\n  in1?m | out^m;\n  in2?m | out^m;\n  in1$ || out<-in2;\n  in2$ || out<-in1;\n}");
        let rs = rules(&p, 0);
        // Rule 1: match, write, recurse with both remainders.
        let r = rs[0];
        assert_eq!(r.bars, 2);
        assert_eq!(r.rhs.len(), 2);
        match (&r.rhs[0], &r.rhs[1]) {
            (Statement::Bind { var, term, .. }, Statement::Call { proc, args, outs, .. }) => {
                assert_eq!(var.text, "out");
                let out_tail = match term {
                    TupleExpr::Cons { tail, .. } => match &**tail {
                        TupleExpr::Var(n) => n.text.clone(),
                        other => panic!("expected tail var, got {other:?}"),
                    },
                    other => panic!("expected cons, got {other:?}"),
                };
                assert_eq!(proc, "merge");
                assert!(matches!(&args[0], Expr::Var(n) if n.text.starts_with("in1%")));
                assert!(matches!(&args[1], Expr::Var(n) if n.text == "in2"));
                assert_eq!(outs[0].text, out_tail);
            }
            other => panic!("unexpected shape {other:?}"),
        }
        // Final rules stay calls-free.
        assert_eq!(rs[2].rhs.len(), 1);
        assert!(matches!(&rs[2].rhs[0], Statement::Alias { .. }));
    }

    #[test]
    fn consuming_nothing_elides_the_recursion() {
        // Matching plain values and completing every output would repeat
        // for ever; the continuation is dropped.
        let p = run("#pick(v, u)->(x, y) {\n  v=f(w) | x<-w, y<-u;\n  v=e | x<-u, y=b;\n}");
        for r in rules(&p, 0) {
            assert!(
                !r.rhs.iter().any(|s| matches!(s, Statement::Call { .. })),
                "no recursion expected in {r:?}"
            );
        }
    }

    #[test]
    fn reply_rebinding_an_input_feeds_the_continuation() {
        let p = run("#walk(InList)->out { go=1 | InList.head->h.tail->InList, out^h }");
        let r = rules(&p, 0)[0];
        // The second reply is renamed fresh and passed to the recursion.
        let fresh = match &r.rhs[0] {
            Statement::Send { msgs, .. } => {
                assert_eq!(msgs[1].name.as_deref(), Some("tail"));
                let n = &msgs[1].outs[0];
                assert!(n.text.starts_with("InList%"));
                n.text.clone()
            }
            other => panic!("expected send, got {other:?}"),
        };
        match r.rhs.last().unwrap() {
            Statement::Call { proc, args, .. } => {
                assert_eq!(proc, "walk");
                assert!(matches!(&args[0], Expr::Var(n) if n.text == fresh));
            }
            other => panic!("expected recursion, got {other:?}"),
        }
    }

    #[test]
    fn become_writes_output_and_stops() {
        let p = run("#drain(in)< {\n  in?m | ;\n  in$ | <=done()\n}");
        let rs = rules(&p, 0);
        // Rule 1 recurses on the remainder.
        assert!(matches!(rs[0].rhs.last().unwrap(), Statement::Call { proc, .. } if proc == "drain"));
        // Rule 2: the become is a call writing the output; no recursion.
        assert_eq!(rs[1].rhs.len(), 1);
        match &rs[1].rhs[0] {
            Statement::Call { proc, outs, .. } => {
                assert_eq!(proc, "done");
                assert!(outs[0].text.starts_with("val%"));
            }
            other => panic!("expected call into output, got {other:?}"),
        }
    }

    #[test]
    fn continuation_value_forces_and_names_the_recursion() {
        // `<' names the value the recursive call produces.
        let p = run("#sum(in)< {\n  in?m | <=m+<;\n  in$ | <=0\n}");
        let r = rules(&p, 0)[0];
        // Expect: recursion with dangling value slot, then add into output.
        let rec_out = r
            .rhs
            .iter()
            .find_map(|s| match s {
                Statement::Call { proc, outs, .. } if proc == "sum" => Some(outs[0].text.clone()),
                _ => None,
            })
            .expect("recursion call");
        let add = r
            .rhs
            .iter()
            .find_map(|s| match s {
                Statement::Call { proc, args, outs, .. } if proc == "add" => {
                    Some((args.clone(), outs[0].text.clone()))
                }
                _ => None,
            })
            .expect("add call");
        assert!(matches!(&add.0[1], Expr::Var(n) if n.text == rec_out));
        assert!(add.1.starts_with("val%"));
    }

    #[test]
    fn every_rule_ends_final() {
        let p = run("#merge(in1, in2)->out {\n  in1?m | out^m;\n  in1$ || out<-in2;\n}");
        for r in rules(&p, 0) {
            assert_eq!(r.bars, 2);
        }
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#merge(in1, in2)->out {\n  in1?m | out^m;\n  in1$ || out<-in2;\n}");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = expand_implicit_recursion(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
