//! Stream reads and writes.
//!
//! Streams are lists built incrementally: a read `in?m` matches the list
//! cell `m : rest`, and a write `out^m` builds one.  This pass turns the
//! read/write notation into explicit matches and bindings:
//!
//! * `in.go?m` on the left becomes the match `in = go : ?m : ?in%1`.  Reads
//!   of `in` on the right are renamed to the remainder `in%1`, and an
//!   assignment `in <- in%1` is placed first so that whatever call carries
//!   on — the implicit recursion, or the explicit continuation added when
//!   embedded rules are lifted — receives the remainder.  A lookahead
//!   split `/` binds the remainder *including* the elements after it.
//! * `out^a.b` becomes `out = a : b : out%2`, with later writes to `out`
//!   continuing at `out%2`.  `out$` closes the current remainder with the
//!   end-of-list mark, and an output fed to a call after a write hands the
//!   callee the remainder rather than the whole stream.
//! * A write to a stream the rule also reads, such as `in.go` on the
//!   right, feeds the stream back to itself: `in%2 = go : in%1` where
//!   `in%1` is the consumed remainder, with the continuation reading
//!   `in%2`.  A process can hand itself work this way.
//!
//! Receives on handles look similar but carry merged message streams; they
//! are dealt with by the conversion pass, not here.

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::span::Span;

use super::NameGen;

pub fn expand_channel_sugar(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut p = p;
    let mut err = None;
    super::for_each_rule_mut(&mut p, &mut |rule| {
        if err.is_none() {
            if let Err(e) = process_rule(rule, names) {
                err = Some(e);
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(p),
    }
}

/// What one rule reads from one channel.
struct Read {
    chan: Name,
    elems: Vec<Pattern>,
    lookahead: Option<usize>,
    closed: bool,
    span: Span,
}

fn process_rule(rule: &mut Rule, names: &mut NameGen) -> Result<(), Diagnostic> {
    // Gather the reads, keeping each channel's first position in the rule.
    let lhs = std::mem::take(&mut rule.lhs);
    let mut reads: Vec<Read> = Vec::new();
    let mut kept: Vec<LhsItem> = Vec::new();
    let mut slots: Vec<(usize, usize)> = Vec::new(); // (kept index, reads index)
    for item in lhs {
        match item {
            LhsItem::ChannelGet { chan, items, lookahead_at, span } => {
                let read = match reads.iter_mut().find(|r| r.chan.text == chan.text) {
                    Some(r) => r,
                    None => {
                        reads.push(Read {
                            chan,
                            elems: Vec::new(),
                            lookahead: None,
                            closed: false,
                            span,
                        });
                        let i = reads.len() - 1;
                        slots.push((kept.len(), i));
                        kept.push(LhsItem::Close { target: MsgTarget::Bare(span), span });
                        reads.last_mut().unwrap()
                    }
                };
                if read.closed {
                    return Err(Diagnostic::error(
                        "E0219",
                        span,
                        format!("`{}` is already closed in this rule", read.chan.text),
                    ));
                }
                if let Some(at) = lookahead_at {
                    if read.lookahead.is_some() {
                        return Err(Diagnostic::error(
                            "E0220",
                            span,
                            "only one lookahead split per channel in a rule",
                        ));
                    }
                    read.lookahead = Some(read.elems.len() + at);
                }
                for it in items {
                    read.elems.push(match it {
                        GetItem::Got(p) => p,
                        GetItem::Captured(n) => Pattern::Var(n),
                    });
                }
            }
            LhsItem::Close { target: MsgTarget::Var(n), span } if n.kind == Kind::Future => {
                match reads.iter_mut().find(|r| r.chan.text == n.text) {
                    Some(r) => r.closed = true,
                    None => {
                        reads.push(Read {
                            chan: n,
                            elems: Vec::new(),
                            lookahead: None,
                            closed: true,
                            span,
                        });
                        slots.push((kept.len(), reads.len() - 1));
                        kept.push(LhsItem::Close { target: MsgTarget::Bare(span), span });
                    }
                }
            }
            other => kept.push(other),
        }
    }

    // Build each channel's match and remember the remainder variable.
    let mut renames: Vec<(String, Name)> = Vec::new();
    for (kept_i, read_i) in slots {
        let r = &reads[read_i];
        let tail = if r.closed {
            Pattern::Nil(r.span)
        } else {
            let rest = names.future(&r.chan.text);
            renames.push((r.chan.text.clone(), rest.clone()));
            Pattern::Var(rest)
        };
        let pat = match r.lookahead {
            Some(at) => {
                let seen = cons_pattern(r.elems[at..].to_vec(), tail, r.span);
                let ahead = Name { span: r.span, ..names.future(&r.chan.text) };
                if !r.closed {
                    // The remainder to carry forward includes what was
                    // only looked at, so replace the plain remainder.
                    renames.pop();
                    renames.push((r.chan.text.clone(), ahead.clone()));
                }
                let inner = Pattern::As {
                    var: ahead,
                    pat: Box::new(seen),
                    span: r.span,
                };
                cons_pattern(r.elems[..at].to_vec(), inner, r.span)
            }
            None => cons_pattern(r.elems.clone(), tail, r.span),
        };
        kept[kept_i] = LhsItem::Equality { var: r.chan.clone(), pat, span: r.span };
    }
    rule.lhs = kept;

    // Rename right-hand reads to the remainder, and record the change with
    // a leading assignment so the continuation receives the remainder.
    for (from, to) in &renames {
        let to_expr = Expr::Var(to.clone());
        for s in &mut rule.rhs {
            super::subst_var_stmt(s, from, &to_expr);
        }
    }
    for (from, to) in renames.iter().rev() {
        rule.rhs.insert(
            0,
            Statement::Alias {
                var: Name::future(from.clone(), to.span),
                expr: Expr::Var(to.clone()),
                span: to.span,
            },
        );
    }

    // Writes: thread each output stream through its remainders.  Reads
    // that were consumed above may still be written to ("self-feeding"),
    // so the write pass is told where each read stream now stands.
    let mut fed: HashMap<String, Name> =
        renames.iter().map(|(from, to)| (from.clone(), to.clone())).collect();
    let stmts = std::mem::take(&mut rule.rhs);
    rule.rhs = write_stmts(stmts, &mut HashMap::new(), &mut fed, names)?;
    Ok(())
}

fn cons_pattern(elems: Vec<Pattern>, tail: Pattern, span: Span) -> Pattern {
    let mut pat = tail;
    for e in elems.into_iter().rev() {
        pat = Pattern::Cons { head: Box::new(e), tail: Box::new(pat), span };
    }
    pat
}

fn write_stmts(
    stmts: Vec<Statement>,
    cur: &mut HashMap<String, Name>,
    fed: &mut HashMap<String, Name>,
    names: &mut NameGen,
) -> Result<Vec<Statement>, Diagnostic> {
    let mut stmts = std::collections::VecDeque::from(stmts);
    let mut out: Vec<Statement> = Vec::with_capacity(stmts.len());
    while let Some(mut s) = stmts.pop_front() {
        match &mut s {
            // A write to a stream this rule *reads* feeds it back to
            // itself: the new front carries the messages, the consumed
            // remainder follows them, and every other reader — most
            // importantly the implicit recursion — moves to the new
            // front.
            Statement::Put { chan, items, closed, span } if fed.contains_key(&chan.text) => {
                let front = fed.get(&chan.text).unwrap().clone();
                let next = names.future(&chan.text);
                let tail = if *closed {
                    TupleExpr::Nil(*span)
                } else {
                    TupleExpr::Var(front.clone())
                };
                let mut term = tail;
                for it in std::mem::take(items).into_iter().rev() {
                    let head = match it {
                        PutItem::Tup(t) => t,
                        PutItem::Val(e) => value_term(e)?,
                    };
                    term = TupleExpr::Cons {
                        head: Box::new(head),
                        tail: Box::new(term),
                        span: *span,
                    };
                }
                let to_expr = Expr::Var(next.clone());
                for t in out.iter_mut().chain(stmts.iter_mut()) {
                    super::subst_var_stmt(t, &front.text, &to_expr);
                }
                fed.insert(chan.text.clone(), next.clone());
                s = Statement::Bind { var: next, term, span: *span };
            }
            Statement::Put { chan, items, closed, span } => {
                let target = cur.remove(&chan.text).unwrap_or_else(|| chan.clone());
                let tail = if *closed {
                    TupleExpr::Nil(*span)
                } else {
                    let rest = names.future(&chan.text);
                    cur.insert(chan.text.clone(), rest.clone());
                    TupleExpr::Var(rest)
                };
                let mut term = tail;
                for it in std::mem::take(items).into_iter().rev() {
                    let head = match it {
                        PutItem::Tup(t) => t,
                        PutItem::Val(e) => value_term(e)?,
                    };
                    term = TupleExpr::Cons {
                        head: Box::new(head),
                        tail: Box::new(term),
                        span: *span,
                    };
                }
                s = Statement::Bind { var: target, term, span: *span };
            }
            Statement::StreamClose { var, span } => {
                let target = cur.remove(&var.text).unwrap_or_else(|| var.clone());
                s = Statement::Bind { var: target, term: TupleExpr::Nil(*span), span: *span };
            }
            // A later writer of the stream picks up at the remainder.
            Statement::Bind { var, .. } | Statement::Alias { var, .. } => {
                if let Some(rest) = cur.remove(&var.text) {
                    *var = rest;
                }
            }
            Statement::Call { outs, .. } => {
                for o in outs {
                    if let Some(rest) = cur.remove(&o.text) {
                        *o = rest;
                    }
                }
            }
            Statement::Send { msgs, .. } => {
                for m in msgs {
                    for o in &mut m.outs {
                        if let Some(rest) = cur.remove(&o.text) {
                            *o = rest;
                        }
                    }
                }
            }
            Statement::IfThenElse { then_b, else_b, .. } => {
                // Each branch continues the stream on its own.
                let mut then_cur = cur.clone();
                let mut then_fed = fed.clone();
                then_b.stmts =
                    write_stmts(std::mem::take(&mut then_b.stmts), &mut then_cur, &mut then_fed, names)?;
                let mut else_cur = cur.clone();
                let mut else_fed = fed.clone();
                else_b.stmts =
                    write_stmts(std::mem::take(&mut else_b.stmts), &mut else_cur, &mut else_fed, names)?;
            }
            Statement::Sequence { first, second, .. } => {
                *first = write_stmts(std::mem::take(first), cur, fed, names)?;
                *second = write_stmts(std::mem::take(second), cur, fed, names)?;
            }
            _ => {}
        }
        out.push(s);
    }
    Ok(out)
}

/// A put value after hoisting: a variable, number, or constant.
fn value_term(e: Expr) -> Result<TupleExpr, Diagnostic> {
    match e {
        Expr::Var(n) => Ok(TupleExpr::Var(n)),
        Expr::Num(n, span) => Ok(TupleExpr::Num(n, span)),
        Expr::Atom(s, span) => Ok(TupleExpr::Const(s, span)),
        other => Err(Diagnostic::error(
            "E0218",
            other.span(),
            "this stream element needs a name; assign it first",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        expand_channel_sugar(p, &mut names).expect("expand")
    }

    fn rule(p: &Program) -> &Rule {
        &p.decls[0].body[0].rules[0]
    }

    #[test]
    fn read_becomes_list_match_with_remainder() {
        let p = run("#merge(in1, in2)->out {\n  in1?m | out^m;\n  in1$ || out<-in2;\n}");
        let r = rule(&p);
        // in1 = ?m : ?in1%k, with the assignment telling the recursion
        // pass the remainder, then the rebuilt write.
        match &r.lhs[0] {
            LhsItem::Equality { var, pat, .. } => {
                assert_eq!(var.text, "in1");
                match pat {
                    Pattern::Cons { head, tail, .. } => {
                        assert!(matches!(&**head, Pattern::Var(n) if n.text == "m"));
                        assert!(matches!(&**tail, Pattern::Var(n) if n.text.starts_with("in1%")));
                    }
                    other => panic!("expected list match, got {other:?}"),
                }
            }
            other => panic!("expected equality, got {other:?}"),
        }
        match &r.rhs[0] {
            Statement::Alias { var, expr, .. } => {
                assert_eq!(var.text, "in1");
                assert!(matches!(expr, Expr::Var(n) if n.text.starts_with("in1%")));
            }
            other => panic!("expected remainder assignment, got {other:?}"),
        }
        match &r.rhs[1] {
            Statement::Bind { var, term, .. } => {
                assert_eq!(var.text, "out");
                match term {
                    TupleExpr::Cons { head, tail, .. } => {
                        assert!(matches!(&**head, TupleExpr::Var(n) if n.text == "m"));
                        assert!(matches!(&**tail, TupleExpr::Var(n) if n.text.starts_with("out%")));
                    }
                    other => panic!("expected list build, got {other:?}"),
                }
            }
            other => panic!("expected bind, got {other:?}"),
        }

        // The final rule closes in1 and passes in2 on; nothing to thread.
        let last = &p.decls[0].body[0].rules[1];
        assert!(matches!(&last.lhs[0],
            LhsItem::Equality { var, pat: Pattern::Nil(_), .. } if var.text == "in1"));
        assert!(matches!(&last.rhs[0], Statement::Alias { var, .. } if var.text == "out"));
    }

    #[test]
    fn successive_writes_chain_remainders() {
        let p = run("#f(x)->out { x=go || out^a, out^b, out$ }");
        let r = rule(&p);
        let names: Vec<_> = r
            .rhs
            .iter()
            .map(|s| match s {
                Statement::Bind { var, .. } => var.text.clone(),
                other => panic!("expected bind, got {other:?}"),
            })
            .collect();
        assert_eq!(names[0], "out");
        assert!(names[1].starts_with("out%"));
        assert!(names[2].starts_with("out%"));
        assert_ne!(names[1], names[2]);
        // The close writes the end-of-list mark.
        assert!(matches!(&r.rhs[2], Statement::Bind { term: TupleExpr::Nil(_), .. }));
    }

    #[test]
    fn call_after_write_gets_the_remainder() {
        let p = run("#f(x)->out { x=go || out^ready, work(x)->out }");
        let r = rule(&p);
        match &r.rhs[1] {
            Statement::Call { outs, .. } => {
                assert!(outs[0].text.starts_with("out%"));
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn reads_on_the_right_use_the_remainder() {
        let p = run("#f(in)->out { in?m || pass(m, in)->out }");
        let r = rule(&p);
        // The assignment records the remainder even in a final rule, where
        // a later pass simply consumes it; the argument is renamed.
        assert!(matches!(&r.rhs[0], Statement::Alias { var, .. } if var.text == "in"));
        match &r.rhs[1] {
            Statement::Call { args, .. } => {
                assert!(matches!(&args[1], Expr::Var(n) if n.text.starts_with("in%")));
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn lookahead_binds_stream_including_inspected_elements() {
        let p = run("#f(in)->out { in.go/?m | out^m }");
        let r = rule(&p);
        match &r.lhs[0] {
            LhsItem::Equality { pat: Pattern::Cons { head, tail, .. }, .. } => {
                assert!(matches!(&**head, Pattern::Const(c, _) if c == "go"));
                match &**tail {
                    Pattern::As { var, pat, .. } => {
                        assert!(var.text.starts_with("in%"));
                        assert!(matches!(&**pat, Pattern::Cons { .. }));
                        // The carried remainder is the as-bound name.
                        match &r.rhs[0] {
                            Statement::Alias { expr: Expr::Var(n), .. } => {
                                assert_eq!(n.text, var.text);
                            }
                            other => panic!("expected assignment, got {other:?}"),
                        }
                    }
                    other => panic!("expected as-pattern, got {other:?}"),
                }
            }
            other => panic!("expected match, got {other:?}"),
        }
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#merge(in1, in2)->out {\n  in1?m | out^m;\n  in1$ || out<-in2;\n}");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = expand_channel_sugar(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
