//! From handles to streams: the final lowering into the core language.
//!
//! An object is served by the procedure that declares a handle output, so
//! that handle's message stream is really an *input* to the procedure —
//! and a handle the procedure merely uses is a stream it *writes*.  The
//! header therefore rearranges: core inputs are the future parameters
//! followed by the streams of the output handles, and core outputs are
//! the streams of the handle parameters followed by the future outputs.
//! Calls rearrange the same way.
//!
//! A message is laid out like a little procedure header.  First what the
//! receiver reads: the future arguments, then the streams of any reply
//! objects — the sender of `g(c, R)→S` builds S's stream itself, so the
//! receiver of `g` captures that stream and routes it to whoever will
//! serve it.  Then the slots the receiver writes: substreams for handle
//! arguments (the receiver becomes one more sender on R), then future
//! replies, matched with `^r`.  That is how answers travel without any
//! channel in the other direction.
//!
//! Every substream of a stream is combined with an injected binary
//! merge — senders never know about each other.  Sends to the
//! procedure's own output handle are prepended onto the incoming
//! stream, so the procedure serves itself before the world.  A handle
//! argument nothing ever sends to is closed.

use crate::ast::*;
use crate::core::{CoreGuard, CorePat, CoreProc, CoreProgram, CoreRule, CoreStmt, CoreTerm};
use crate::diag::Diagnostic;

use super::expressions::arith_proc;
use super::NameGen;

/// The reserved tag carrying messages that have no name, and the name of
/// the injected stream combiner.  `%` keeps both out of surface reach.
pub const NIL_MSG: &str = "nil%";
pub const MERGE: &str = "merge%b";

pub fn convert_handles_to_streams(
    p: &Program,
    names: &mut NameGen,
) -> Result<CoreProgram, Diagnostic> {
    let mut procs = Vec::new();
    let mut need_merge = false;
    for d in &p.decls {
        procs.push(convert_decl(d, names, &mut need_merge)?);
    }
    if need_merge {
        procs.push(merge_proc());
    }
    Ok(CoreProgram { procs })
}

fn convert_decl(
    d: &Decl,
    names: &mut NameGen,
    need_merge: &mut bool,
) -> Result<CoreProc, Diagnostic> {
    let in_futures: Vec<&Name> =
        d.params.iter().map(|p| &p.name).filter(|n| n.kind == Kind::Future).collect();
    let in_handles: Vec<&Name> =
        d.params.iter().map(|p| &p.name).filter(|n| n.kind == Kind::Handle).collect();
    let out_futures: Vec<&Name> =
        d.outspec.names().iter().filter(|n| n.kind == Kind::Future).collect();
    let out_handles: Vec<&Name> =
        d.outspec.names().iter().filter(|n| n.kind == Kind::Handle).collect();

    let ins = in_futures
        .iter()
        .chain(&out_handles)
        .map(|n| n.text.clone())
        .collect();
    let outs = in_handles
        .iter()
        .chain(&out_futures)
        .map(|n| n.text.clone())
        .collect();

    let reading: Vec<String> = out_handles.iter().map(|n| n.text.clone()).collect();
    let writing: Vec<String> = in_handles.iter().map(|n| n.text.clone()).collect();

    let mut groups = Vec::new();
    for g in &d.body {
        let mut rules = Vec::new();
        for r in &g.rules {
            rules.push(convert_rule(r, &reading, &writing, names, need_merge)?);
        }
        groups.push(rules);
    }
    Ok(CoreProc { name: d.name.clone(), ins, outs, groups })
}

/// What a rule reads from one handle's stream.
struct Receive {
    handle: String,
    elems: Vec<CorePat>,
    lookahead_at: Option<usize>,
    closed: bool,
    /// The remainder variable, when the stream stays open.
    rest: Option<String>,
}

/// One contributor to a stream the rule writes.
enum Contribution {
    Msg(CoreTerm),
    Sub(String),
}

/// Streams written by the rule, in the order they were first seen; order
/// decides how merges nest, so it must be deterministic.
#[derive(Default)]
struct Writers {
    streams: Vec<(String, Vec<Contribution>)>,
}

impl Writers {
    fn entry(&mut self, h: &str) -> &mut Vec<Contribution> {
        if let Some(i) = self.streams.iter().position(|(n, _)| n == h) {
            &mut self.streams[i].1
        } else {
            self.streams.push((h.to_string(), Vec::new()));
            &mut self.streams.last_mut().unwrap().1
        }
    }

    fn remove(&mut self, h: &str) {
        self.streams.retain(|(n, _)| n != h);
    }
}

fn convert_rule(
    r: &Rule,
    reading: &[String],
    writing: &[String],
    names: &mut NameGen,
    need_merge: &mut bool,
) -> Result<CoreRule, Diagnostic> {
    let mut rule = CoreRule::default();
    let mut writers = Writers::default();
    for h in writing {
        writers.entry(h);
    }

    // ── left side: receives grouped per handle, plain matches, guards ──
    fn recv<'a>(receives: &'a mut Vec<Receive>, h: &Name) -> &'a mut Receive {
        let i = match receives.iter().position(|r| r.handle == h.text) {
            Some(i) => i,
            None => {
                receives.push(Receive {
                    handle: h.text.clone(),
                    elems: Vec::new(),
                    lookahead_at: None,
                    closed: false,
                    rest: None,
                });
                receives.len() - 1
            }
        };
        &mut receives[i]
    }
    let mut receives: Vec<Receive> = Vec::new();
    // Handles captured on the left: this rule owns their write ends.
    let mut bound_handles: Vec<String> = Vec::new();
    // Reply objects received in messages: streams some sender already
    // writes, which this rule merely holds and routes.
    let mut captured_streams: Vec<String> = Vec::new();
    for item in &r.lhs {
        match item {
            LhsItem::Equality { var, pat, .. } => {
                let p = convert_pattern(pat, &mut bound_handles);
                rule.matches.push((var.text.clone(), p));
            }
            LhsItem::Guard { op, lhs, rhs, span } => {
                rule.guards.push(CoreGuard {
                    op: *op,
                    lhs: guard_term(lhs, *span)?,
                    rhs: guard_term(rhs, *span)?,
                });
            }
            LhsItem::ChannelGet { span, .. } => {
                return Err(Diagnostic::error(
                    "E0232",
                    *span,
                    "this form should have been removed by an earlier stage",
                ));
            }
            LhsItem::Messages { target, items, lookahead_at, span } => {
                let h = target_name(target, *span)?;
                let rx = recv(&mut receives, h);
                if let Some(at) = lookahead_at {
                    rx.lookahead_at = Some(rx.elems.len() + at);
                }
                for m in items {
                    let consumed = rx.lookahead_at.map_or(true, |la| rx.elems.len() < la);
                    // Reads first, then slots; a message looked at but
                    // not consumed is all reads, since its slots are
                    // only written on consumption.
                    let mut reads = Vec::new();
                    let mut slots = Vec::new();
                    for a in &m.args {
                        match a {
                            Pattern::Var(n) if n.kind == Kind::Handle => {
                                if consumed {
                                    bound_handles.push(n.text.clone());
                                    slots.push(CorePat::ReplySlot(n.text.clone()));
                                } else {
                                    reads.push(CorePat::Capture(n.text.clone()));
                                }
                            }
                            other => reads.push(convert_pattern(other, &mut bound_handles)),
                        }
                    }
                    for o in &m.outs {
                        if o.kind == Kind::Handle && consumed {
                            captured_streams.push(o.text.clone());
                            reads.push(CorePat::Capture(o.text.clone()));
                        } else if consumed {
                            slots.push(CorePat::ReplySlot(o.text.clone()));
                        } else {
                            reads.push(CorePat::Capture(o.text.clone()));
                        }
                    }
                    reads.extend(slots);
                    let tag = m.name.clone().unwrap_or_else(|| NIL_MSG.to_string());
                    rx.elems.push(CorePat::Tuple(tag, reads));
                }
            }
            LhsItem::RawCapture { target, var, span } => {
                recv(&mut receives, target_name(target, *span)?)
                    .elems
                    .push(CorePat::Capture(var.text.clone()));
            }
            LhsItem::Close { target, span } => {
                recv(&mut receives, target_name(target, *span)?).closed = true;
            }
        }
    }
    for rx in &mut receives {
        let tail = if rx.closed {
            CorePat::Nil
        } else {
            let rest = names.fresh_text(&rx.handle);
            rx.rest = Some(rest.clone());
            CorePat::Capture(rest)
        };
        let pat = match rx.lookahead_at {
            Some(at) => {
                let ahead = names.fresh_text(&rx.handle);
                let seen = cons_pats(rx.elems[at..].to_vec(), tail);
                if !rx.closed {
                    // Carry forward what was only looked at.
                    rx.rest = Some(ahead.clone());
                }
                cons_pats(
                    rx.elems[..at].to_vec(),
                    CorePat::As(ahead, Box::new(seen)),
                )
            }
            None => cons_pats(rx.elems.clone(), tail),
        };
        rule.matches.push((rx.handle.clone(), pat));
    }
    for h in &bound_handles {
        writers.entry(h);
    }

    // The stream a receiving handle's continuation gets: the remainder,
    // with any sends-to-self put in front of it.  Decided up front so the
    // statement walk can name it when a call takes the handle over.
    let has_self_send = |h: &str| {
        r.rhs.iter().any(|s| match s {
            Statement::Send { target: SendTarget::Var(n), .. } => n.text == h,
            Statement::Relay { target, .. } => target.text == h,
            _ => false,
        })
    };
    let own_as_arg = |h: &str| {
        r.rhs.iter().any(|s| match s {
            Statement::Call { args, .. } => args
                .iter()
                .any(|a| matches!(a, Expr::Var(n) if n.kind == Kind::Handle && n.text == h)),
            _ => false,
        })
    };
    struct Reading {
        handle: String,
        rest: Option<String>,
        /// Name of the stream the continuation receives, if it differs
        /// from the plain remainder.
        fronted: Option<String>,
        prepends: Vec<CoreTerm>,
        extra_subs: Vec<String>,
    }
    let mut reads: Vec<Reading> = reading
        .iter()
        .map(|h| {
            let rest = match receives.iter().find(|rx| &rx.handle == h) {
                Some(rx) => rx.rest.clone(),
                None => Some(h.clone()),
            };
            let fronted = if has_self_send(h) || own_as_arg(h) {
                Some(names.fresh_text(h))
            } else {
                None
            };
            Reading { handle: h.clone(), rest, fronted, prepends: Vec::new(), extra_subs: Vec::new() }
        })
        .collect();
    let stream_of = |reads: &[Reading], h: &str| -> Option<String> {
        reads
            .iter()
            .find(|rd| rd.handle == h)
            .map(|rd| rd.fronted.clone().or_else(|| rd.rest.clone()).unwrap_or_else(|| h.to_string()))
    };

    // ── right side, in order ──
    for s in &r.rhs {
        match s {
            Statement::Bind { var, term, span } => {
                rule.body.push(CoreStmt::Assign {
                    var: var.text.clone(),
                    term: convert_tuple(term, *span)?,
                });
            }
            Statement::Alias { var, expr, span } if var.kind == Kind::Handle => {
                // `S ← R`: the two names become one object; S's cell is
                // written by the alias, so its merge entry goes away.
                rule.body.push(CoreStmt::Assign {
                    var: var.text.clone(),
                    term: value_term(expr, *span)?,
                });
                writers.remove(&var.text);
            }
            Statement::Alias { var, expr, span } => {
                rule.body.push(CoreStmt::Assign {
                    var: var.text.clone(),
                    term: value_term(expr, *span)?,
                });
            }
            Statement::Call { proc, args, named, outs, span } => {
                if !named.is_empty() {
                    return Err(Diagnostic::error(
                        "E0231",
                        *span,
                        "named arguments should have been resolved before conversion",
                    ));
                }
                let mut ins = Vec::new();
                let mut sub_outs = Vec::new();
                for a in args {
                    match a {
                        Expr::Var(n) if n.kind == Kind::Handle => {
                            // The callee sends on this handle through a
                            // substream of its own.
                            let sub = names.fresh_text(&n.text);
                            if let Some(rd) =
                                reads.iter_mut().find(|rd| rd.handle == n.text)
                            {
                                rd.extra_subs.push(sub.clone());
                            } else {
                                writers.entry(&n.text).push(Contribution::Sub(sub.clone()));
                            }
                            sub_outs.push(sub);
                        }
                        other => ins.push(value_term(other, *span)?),
                    }
                }
                let mut fut_outs = Vec::new();
                for o in outs {
                    if o.kind == Kind::Handle {
                        if let Some(stream) = stream_of(&reads, &o.text) {
                            // The callee serves our own output handle.
                            ins.push(CoreTerm::Var(stream));
                        } else if captured_streams.contains(&o.text) {
                            // Hooking a received reply object straight
                            // to the callee that will serve it.
                            ins.push(CoreTerm::Var(o.text.clone()));
                        } else {
                            // The callee offers an object; we write the
                            // stream it will receive.
                            ins.push(CoreTerm::Var(o.text.clone()));
                            writers.entry(&o.text);
                        }
                    } else {
                        fut_outs.push(o.text.clone());
                    }
                }
                sub_outs.extend(fut_outs);
                rule.body.push(CoreStmt::Call { proc: proc.clone(), ins, outs: sub_outs });
            }
            Statement::Send { target, msgs, span } => {
                let h = match target {
                    SendTarget::Var(n) => n,
                    SendTarget::SelfRef(span) => {
                        return Err(Diagnostic::error(
                            "E0214",
                            *span,
                            "`~` sends should have been resolved before conversion",
                        ))
                    }
                };
                let mut tuples = Vec::new();
                for m in msgs {
                    // Same layout the receiver matches: reads first
                    // (values, then reply-object streams), then slots.
                    let mut reads_part = Vec::new();
                    let mut slots_part = Vec::new();
                    for a in &m.args {
                        match a {
                            Expr::Var(n) if n.kind == Kind::Handle => {
                                // Passing a handle along: the receiver
                                // gets a substream to send on.
                                let sub = names.fresh_text(&n.text);
                                if let Some(rd) =
                                    reads.iter_mut().find(|rd| rd.handle == n.text)
                                {
                                    rd.extra_subs.push(sub.clone());
                                } else {
                                    writers
                                        .entry(&n.text)
                                        .push(Contribution::Sub(sub.clone()));
                                }
                                slots_part.push(CoreTerm::Var(sub));
                            }
                            other => reads_part.push(value_term(other, *span)?),
                        }
                    }
                    for o in &m.outs {
                        if o.kind == Kind::Handle {
                            // A reply object: this sender writes its
                            // stream, unless it is only passing on one
                            // it received.
                            if !captured_streams.contains(&o.text) {
                                writers.entry(&o.text);
                            }
                            reads_part.push(CoreTerm::Var(o.text.clone()));
                        } else {
                            slots_part.push(CoreTerm::Var(o.text.clone()));
                        }
                    }
                    reads_part.extend(slots_part);
                    let tag = m.name.clone().unwrap_or_else(|| NIL_MSG.to_string());
                    tuples.push(CoreTerm::Tuple(tag, reads_part));
                }
                if let Some(rd) = reads.iter_mut().find(|rd| rd.handle == h.text) {
                    rd.prepends.extend(tuples);
                } else {
                    let w = writers.entry(&h.text);
                    w.extend(tuples.into_iter().map(Contribution::Msg));
                }
            }
            Statement::Relay { target, var, .. } => {
                let t = CoreTerm::Var(var.text.clone());
                if let Some(rd) = reads.iter_mut().find(|rd| rd.handle == target.text) {
                    rd.prepends.push(t);
                } else {
                    writers.entry(&target.text).push(Contribution::Msg(t));
                }
            }
            Statement::StreamClose { var, .. } => {
                // A handle closed by hand: an entry with no contributors
                // closes at the end of the rule.
                writers.entry(&var.text);
            }
            other => {
                return Err(Diagnostic::error(
                    "E0232",
                    other.span(),
                    "this form should have been removed by an earlier stage",
                ));
            }
        }
    }

    // ── endings ──
    // Streams for the continuations of our own output handles.
    for rd in &reads {
        let Some(fronted) = &rd.fronted else { continue };
        let mut tail = match &rd.rest {
            Some(rest) => CoreTerm::Var(rest.clone()),
            None => CoreTerm::Nil,
        };
        for sub in &rd.extra_subs {
            tail = merge_streams(tail, CoreTerm::Var(sub.clone()), &mut rule.body, names, need_merge);
        }
        let term = rd
            .prepends
            .iter()
            .rev()
            .fold(tail, |acc, t| CoreTerm::cons(t.clone(), acc));
        rule.body.push(CoreStmt::Assign { var: fronted.clone(), term });
    }
    // Streams this rule writes: direct messages first, then everything
    // the callees send, merged pairwise; nothing at all closes it.
    for (h, contribs) in writers.streams {
        let mut msgs = Vec::new();
        let mut subs = Vec::new();
        for c in contribs {
            match c {
                Contribution::Msg(t) => msgs.push(t),
                Contribution::Sub(s) => subs.push(s),
            }
        }
        let mut tail = match subs.split_first() {
            None => CoreTerm::Nil,
            Some((first, rest)) => {
                let mut t = CoreTerm::Var(first.clone());
                for s in rest {
                    t = merge_streams(t, CoreTerm::Var(s.clone()), &mut rule.body, names, need_merge);
                }
                t
            }
        };
        tail = msgs.into_iter().rev().fold(tail, |acc, t| CoreTerm::cons(t, acc));
        rule.body.push(CoreStmt::Assign { var: h, term: tail });
    }

    collapse_aliases(&mut rule.body);
    Ok(rule)
}

/// Drop `x = y` where `y` is a name this pass made up and some call is
/// its only writer: the call's output is simply named `x` instead.  This
/// is what lets a single contribution — or the top of a merge tree —
/// feed a stream directly.
fn collapse_aliases(body: &mut Vec<CoreStmt>) {
    loop {
        let mut found = None;
        'scan: for (i, s) in body.iter().enumerate() {
            let CoreStmt::Assign { var, term: CoreTerm::Var(y) } = s else { continue };
            if !y.contains('%') {
                continue;
            }
            let mut writer = None;
            let mut other_uses = 0;
            for (j, t) in body.iter().enumerate() {
                if j == i {
                    continue;
                }
                match t {
                    CoreStmt::Assign { term, .. } => other_uses += count_var(term, y),
                    CoreStmt::Call { ins, outs, .. } => {
                        other_uses += ins.iter().map(|t| count_var(t, y)).sum::<usize>();
                        for (k, o) in outs.iter().enumerate() {
                            if o == y {
                                if writer.is_none() {
                                    writer = Some((j, k));
                                } else {
                                    other_uses += 1;
                                }
                            }
                        }
                    }
                }
            }
            if let (Some(w), 0) = (writer, other_uses) {
                found = Some((i, w, var.clone()));
                break 'scan;
            }
        }
        let Some((i, (j, k), x)) = found else { break };
        if let CoreStmt::Call { outs, .. } = &mut body[j] {
            outs[k] = x;
        }
        body.remove(i);
    }
}

fn count_var(t: &CoreTerm, y: &str) -> usize {
    match t {
        CoreTerm::Var(v) => usize::from(v == y),
        CoreTerm::Tuple(_, args) => args.iter().map(|a| count_var(a, y)).sum(),
        CoreTerm::Cons(h, tl) => count_var(h, y) + count_var(tl, y),
        _ => 0,
    }
}

fn merge_streams(
    a: CoreTerm,
    b: CoreTerm,
    body: &mut Vec<CoreStmt>,
    names: &mut NameGen,
    need_merge: &mut bool,
) -> CoreTerm {
    *need_merge = true;
    let out = names.fresh_text("m");
    body.push(CoreStmt::Call { proc: MERGE.to_string(), ins: vec![a, b], outs: vec![out.clone()] });
    CoreTerm::Var(out)
}

/// The injected binary stream combiner: both inputs pass through, in
/// whatever order they arrive; the output closes when both have.
fn merge_proc() -> CoreProc {
    let cons = |h: &str, t: &str| CorePat::cons(CorePat::Capture(h.into()), CorePat::Capture(t.into()));
    let through = |kept: &str, taken: &str| CoreRule {
        matches: vec![(taken.into(), cons("m", "r"))],
        guards: Vec::new(),
        body: vec![
            CoreStmt::Assign {
                var: "out".into(),
                term: CoreTerm::cons(CoreTerm::Var("m".into()), CoreTerm::Var("o%1".into())),
            },
            CoreStmt::Call {
                proc: MERGE.into(),
                ins: if taken == "in1" {
                    vec![CoreTerm::Var("r".into()), CoreTerm::Var(kept.into())]
                } else {
                    vec![CoreTerm::Var(kept.into()), CoreTerm::Var("r".into())]
                },
                outs: vec!["o%1".into()],
            },
        ],
    };
    let done = |closed: &str, other: &str| CoreRule {
        matches: vec![(closed.into(), CorePat::Nil)],
        guards: Vec::new(),
        body: vec![CoreStmt::Assign { var: "out".into(), term: CoreTerm::Var(other.into()) }],
    };
    CoreProc {
        name: MERGE.to_string(),
        ins: vec!["in1".into(), "in2".into()],
        outs: vec!["out".into()],
        groups: vec![vec![
            through("in2", "in1"),
            through("in1", "in2"),
            done("in1", "in2"),
            done("in2", "in1"),
        ]],
    }
}

fn target_name<'a>(t: &'a MsgTarget, span: crate::span::Span) -> Result<&'a Name, Diagnostic> {
    match t {
        MsgTarget::Var(n) => Ok(n),
        MsgTarget::Bare(_) | MsgTarget::SelfRef(_) => Err(Diagnostic::error(
            "E0233",
            span,
            "this receive should have been attached to a handle by an earlier stage",
        )),
    }
}

fn cons_pats(elems: Vec<CorePat>, tail: CorePat) -> CorePat {
    elems.into_iter().rev().fold(tail, |acc, e| CorePat::cons(e, acc))
}

fn convert_pattern(p: &Pattern, bound_handles: &mut Vec<String>) -> CorePat {
    match p {
        Pattern::Const(c, _) => CorePat::Const(c.clone()),
        Pattern::Num(n, _) => CorePat::Num(n.clone()),
        // A handle bound here is a stream this rule will write.
        Pattern::Var(n) if n.kind == Kind::Handle => {
            bound_handles.push(n.text.clone());
            CorePat::ReplySlot(n.text.clone())
        }
        Pattern::Var(n) => CorePat::Capture(n.text.clone()),
        Pattern::ReplySlot(n) => CorePat::ReplySlot(n.text.clone()),
        Pattern::Tuple { tag, args, .. } => CorePat::Tuple(
            tag.clone(),
            args.iter().map(|a| convert_pattern(a, bound_handles)).collect(),
        ),
        Pattern::Cons { head, tail, .. } => CorePat::cons(
            convert_pattern(head, bound_handles),
            convert_pattern(tail, bound_handles),
        ),
        Pattern::Nil(_) => CorePat::Nil,
        Pattern::As { var, pat, .. } => {
            CorePat::As(var.text.clone(), Box::new(convert_pattern(pat, bound_handles)))
        }
    }
}

/// An expression in value position; everything compound was hoisted long
/// before this pass.
fn value_term(e: &Expr, span: crate::span::Span) -> Result<CoreTerm, Diagnostic> {
    match e {
        Expr::Var(n) => Ok(CoreTerm::Var(n.text.clone())),
        Expr::Num(n, _) => Ok(CoreTerm::Num(n.clone())),
        Expr::Atom(s, _) => Ok(CoreTerm::Const(s.clone())),
        _ => Err(Diagnostic::error(
            "E0232",
            span,
            "this expression should have been hoisted by an earlier stage",
        )),
    }
}

/// A guard operand: values, plus arithmetic written as tagged tuples the
/// scheduler computes at match time.
fn guard_term(e: &Expr, span: crate::span::Span) -> Result<CoreTerm, Diagnostic> {
    match e {
        Expr::Arith { op, lhs, rhs, .. } => Ok(CoreTerm::Tuple(
            arith_proc(*op).to_string(),
            vec![guard_term(lhs, span)?, guard_term(rhs, span)?],
        )),
        _ => value_term(e, span),
    }
}

fn convert_tuple(t: &TupleExpr, span: crate::span::Span) -> Result<CoreTerm, Diagnostic> {
    Ok(match t {
        TupleExpr::Const(c, _) => CoreTerm::Const(c.clone()),
        TupleExpr::Num(n, _) => CoreTerm::Num(n.clone()),
        TupleExpr::Tuple { tag, args, .. } => CoreTerm::Tuple(
            tag.clone(),
            args.iter().map(|a| value_term(a, span)).collect::<Result<_, _>>()?,
        ),
        TupleExpr::Nil(_) => CoreTerm::Nil,
        TupleExpr::Cons { head, tail, .. } => {
            CoreTerm::cons(convert_tuple(head, span)?, convert_tuple(tail, span)?)
        }
        TupleExpr::Var(n) => CoreTerm::Var(n.text.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn convert(src: &str) -> CoreProgram {
        let p = parse(src).expect("parse");
        // Errors abort `expand`; what comes back alongside the program
        // can only be advisory.
        let (core, _warnings) = crate::desugar::expand(p).expect("expand");
        core
    }

    #[test]
    fn streams_of_futures_convert_directly() {
        let core = convert(
            "#merge(in1, in2)->out {\n  in1?m | out^m;\n  in2?m | out^m;\n  in1$ || out<-in2;\n  in2$ || out<-in1;\n}",
        );
        let m = core.proc("merge").expect("merge");
        assert_eq!(m.ins, vec!["in1", "in2"]);
        assert_eq!(m.outs, vec!["out"]);
        let r = &m.groups[0][0];
        assert!(matches!(&r.matches[0].1,
            CorePat::Cons(h, _) if matches!(&**h, CorePat::Capture(v) if v == "m")));
        match &r.body[1] {
            CoreStmt::Call { proc, ins, outs } => {
                assert_eq!(proc, "merge");
                assert!(matches!(&ins[0], CoreTerm::Var(v) if v.starts_with("in1%")));
                assert!(outs[0].starts_with("out%"));
            }
            other => panic!("expected the recursion, got {other:?}"),
        }
    }

    #[test]
    fn served_object_receives_on_its_stream() {
        let core = convert(
            "#cell(v)->H {\n  H.get->(r) | r<-v;\n  H.set(w) | v<-w;\n  H$ || ;\n}",
        );
        let c = core.proc("cell").expect("cell");
        // The object's stream arrives as an input; nothing goes out.
        assert_eq!(c.ins, vec!["v", "H"]);
        assert!(c.outs.is_empty());

        let get = &c.groups[0][0];
        match &get.matches[0] {
            (h, CorePat::Cons(msg, rest)) => {
                assert_eq!(h, "H");
                assert!(matches!(&**msg, CorePat::Tuple(tag, args)
                    if tag == "get" && matches!(&args[0], CorePat::ReplySlot(v) if v == "r")));
                assert!(matches!(&**rest, CorePat::Capture(v) if v.starts_with("H%")));
            }
            other => panic!("expected a receive, got {other:?}"),
        }
        assert!(matches!(&get.body[0], CoreStmt::Assign { var, term: CoreTerm::Var(t) }
            if var == "r" && t == "v"));
        match get.body.last().unwrap() {
            CoreStmt::Call { proc, ins, .. } => {
                assert_eq!(proc, "cell");
                assert!(matches!(&ins[1], CoreTerm::Var(v) if v.starts_with("H%")));
            }
            other => panic!("expected the recursion, got {other:?}"),
        }

        // set: the override feeds the new value straight through.
        let set = &c.groups[0][1];
        match set.body.last().unwrap() {
            CoreStmt::Call { proc, ins, .. } => {
                assert_eq!(proc, "cell");
                assert!(matches!(&ins[0], CoreTerm::Var(v) if v == "w"));
            }
            other => panic!("expected the recursion, got {other:?}"),
        }

        // close: consume the end mark, do nothing.
        let done = &c.groups[0][2];
        assert!(matches!(&done.matches[0].1, CorePat::Nil));
        assert!(done.body.is_empty());
    }

    #[test]
    fn sends_build_the_stream_in_order_and_close_it() {
        let core = convert("#user(H, go)->done { go=start || H.put(1).put(2), done<-1 }");
        let u = core.proc("user").expect("user");
        assert_eq!(u.ins, vec!["go"]);
        assert_eq!(u.outs, vec!["H", "done"]);
        let r = &u.groups[0][0];
        let h = r
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Assign { var, term } if var == "H" => Some(term.clone()),
                _ => None,
            })
            .expect("the stream");
        match h {
            CoreTerm::Cons(first, rest) => {
                assert!(matches!(&*first, CoreTerm::Tuple(tag, args)
                    if tag == "put" && matches!(&args[0], CoreTerm::Num(n) if *n == 1.into())));
                match *rest {
                    CoreTerm::Cons(second, tail) => {
                        assert!(matches!(&*second, CoreTerm::Tuple(tag, _) if tag == "put"));
                        assert!(matches!(&*tail, CoreTerm::Nil));
                    }
                    other => panic!("expected the second send, got {other:?}"),
                }
            }
            other => panic!("expected a built stream, got {other:?}"),
        }
    }

    #[test]
    fn several_users_of_one_handle_get_merged_substreams() {
        let core = convert(
            "#work(H, g)->() { g=v | ; }\n#share(H, go)->() { go=split || work(H, go)->(), work(H, go)->() }",
        );
        let s = core.proc("share").expect("share");
        let r = &s.groups[0][0];
        // Each callee writes its own substream...
        let subs: Vec<&str> = r
            .body
            .iter()
            .filter_map(|s| match s {
                CoreStmt::Call { proc, outs, .. } if proc == "work" => Some(outs[0].as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(subs.len(), 2);
        assert_ne!(subs[0], subs[1]);
        // ...and the merge feeds the handle's stream directly.
        let merge = r
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Call { proc, ins, outs } if proc == MERGE => Some((ins, outs)),
                _ => None,
            })
            .expect("a merge");
        assert!(matches!(&merge.0[0], CoreTerm::Var(v) if v == subs[0]));
        assert!(matches!(&merge.0[1], CoreTerm::Var(v) if v == subs[1]));
        assert_eq!(merge.1[0], "H");
        // The combiner itself was injected.
        assert!(core.proc(MERGE).is_some());
    }

    #[test]
    fn sends_to_own_handle_come_before_the_rest_of_the_stream() {
        let core = convert("#echo(in)->H {\n  H.ping->(r) | r<-1;\n  in?m | H.pong(m);\n}");
        let e = core.proc("echo").expect("echo");
        let r = &e.groups[0][1];
        // The prepended stream: pong in front of the untouched incoming.
        let fronted = r
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Assign { var, term: CoreTerm::Cons(h, t) } if var.starts_with("H%") => {
                    assert!(matches!(&**h, CoreTerm::Tuple(tag, _) if tag == "pong"));
                    assert!(matches!(&**t, CoreTerm::Var(v) if v == "H"));
                    Some(var.clone())
                }
                _ => None,
            })
            .expect("the fronted stream");
        // The recursion receives it.
        match r.body.iter().rfind(|s| matches!(s, CoreStmt::Call { proc, .. } if proc == "echo")) {
            Some(CoreStmt::Call { ins, .. }) => {
                assert!(matches!(&ins[1], CoreTerm::Var(v) if *v == fronted));
            }
            other => panic!("expected the recursion, got {other:?}"),
        }
    }

    #[test]
    fn handle_in_a_message_hands_the_receiver_a_substream() {
        let core = convert(
            "#giver(Q, H, go)->() { go=pass || H.meet(Q) }",
        );
        let g = core.proc("giver").expect("giver");
        let r = &g.groups[0][0];
        // The message carries a fresh substream of Q...
        let carried = r
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Assign { var, term: CoreTerm::Cons(msg, _) } if var == "H" => {
                    match &**msg {
                        CoreTerm::Tuple(tag, args) => {
                            assert_eq!(tag, "meet");
                            match &args[0] {
                                CoreTerm::Var(v) => Some(v.clone()),
                                other => panic!("expected a substream, got {other:?}"),
                            }
                        }
                        other => panic!("expected the message, got {other:?}"),
                    }
                }
                _ => None,
            })
            .expect("the send");
        assert!(carried.starts_with("Q%"));
        // ...which is the single contributor to Q's stream.
        assert!(r.body.iter().any(|s| matches!(s, CoreStmt::Assign { var, term: CoreTerm::Var(t) }
            if var == "Q" && *t == carried)));
    }

    #[test]
    fn reply_objects_are_captured_streams() {
        let core = convert(
            "#p(a, b, Q)->H {\n  H.g(c, R)->S | p(q(c, b), b, R)->S, b<-c;\n  H.$ | Q.bye(a);\n}",
        );
        let p = core.proc("p").expect("p");
        assert_eq!(p.ins, vec!["a", "b", "H"]);
        assert_eq!(p.outs, vec!["Q"]);

        let g = &p.groups[0][0];
        // The receive reads c and S's sender-built stream, and takes a
        // slot for the substream of R this rule will write.
        match &g.matches[0].1 {
            CorePat::Cons(msg, _) => match &**msg {
                CorePat::Tuple(tag, args) => {
                    assert_eq!(tag, "g");
                    assert!(matches!(&args[0], CorePat::Capture(v) if v == "c"));
                    assert!(matches!(&args[1], CorePat::Capture(v) if v == "S"));
                    assert!(matches!(&args[2], CorePat::ReplySlot(v) if v == "R"));
                }
                other => panic!("expected the message, got {other:?}"),
            },
            other => panic!("expected a receive, got {other:?}"),
        }
        // The new object is served the captured stream, and what it
        // sends on its handle argument is R's whole output.
        let serve = g
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Call { proc, ins, outs }
                    if proc == "p" && ins.iter().any(|t| matches!(t, CoreTerm::Var(v) if v == "S")) =>
                {
                    Some(outs.clone())
                }
                _ => None,
            })
            .expect("the serving call");
        assert_eq!(serve, vec!["R"]);
        // The recursion carries the overridden b and sends on Q.
        let rec = g
            .body
            .iter()
            .find_map(|s| match s {
                CoreStmt::Call { proc, ins, outs }
                    if proc == "p" && matches!(&ins[1], CoreTerm::Var(v) if v == "c") =>
                {
                    Some((ins.clone(), outs.clone()))
                }
                _ => None,
            })
            .expect("the recursion");
        assert!(matches!(&rec.0[2], CoreTerm::Var(v) if v.starts_with("H%")));
        assert_eq!(rec.1, vec!["Q"]);

        // The destructor consumes the close, sends the last word, and
        // does not continue.
        let last = &p.groups[0][1];
        assert!(matches!(&last.matches[0].1, CorePat::Nil));
        assert!(!last.body.iter().any(|s| matches!(s, CoreStmt::Call { proc, .. } if proc == "p")));
        match last.body.iter().find(|s| matches!(s, CoreStmt::Assign { var, .. } if var == "Q")) {
            Some(CoreStmt::Assign { term: CoreTerm::Cons(msg, tail), .. }) => {
                assert!(matches!(&**msg, CoreTerm::Tuple(tag, args)
                    if tag == "bye" && matches!(&args[0], CoreTerm::Var(v) if v == "a")));
                assert!(matches!(&**tail, CoreTerm::Nil));
            }
            other => panic!("expected the farewell, got {other:?}"),
        }
    }

    #[test]
    fn unused_handle_parameter_is_closed() {
        let core = convert("#quiet(H, go)->() { go=done || ; }");
        let q = core.proc("quiet").expect("quiet");
        let r = &q.groups[0][0];
        assert!(r
            .body
            .iter()
            .any(|s| matches!(s, CoreStmt::Assign { var, term: CoreTerm::Nil } if var == "H")));
    }

    #[test]
    fn conversion_is_deterministic_and_round_trips() {
        let src = "#cell(v)->H {\n  H.get->(r) | r<-v;\n  H.set(w) | v<-w;\n  H$ || ;\n}\n\
                   #share(H, go)->() { go=split || cell(1)->(), cell(2)->() }";
        let a = convert(src).to_text();
        let b = convert(src).to_text();
        assert_eq!(a, b);
        let reparsed = crate::core::parse_core(&a).expect("reparse");
        assert_eq!(reparsed.to_text(), a);
    }
}
