//! Bare message patterns.
//!
//! Inside an object's rules the receives can leave the handle implicit:
//! `inc(x) | ...` instead of `Priv.inc(x) | ...`.  A bare pattern listens
//! on *every* handle output, so this pass replaces each rule containing
//! bare receives with one copy per handle output, in declaration order,
//! the copies sitting where the original rule was:
//!
//! ```text
//! #counter(...) -> (Priv, Ord) {  inc(x) | ...  }
//!   ⇒  Priv.inc(x) | ... ;  Ord.inc(x) | ...
//! ```
//!
//! A bare close `$` stands for all handle streams closed at once and
//! expands to a joint close within its one rule.  An object that uses bare
//! patterns but never says what to do on close gets the obvious ending:
//! a final rule that fires when every handle stream has closed and does
//! nothing, letting the object's arguments go quiet with it.

use crate::ast::*;
use crate::diag::Diagnostic;

use super::NameGen;

pub fn broadcast_message_patterns(p: Program, _names: &mut NameGen) -> Result<Program, Diagnostic> {
    let mut decls = Vec::with_capacity(p.decls.len());
    for mut d in p.decls {
        let handles: Vec<Name> = d
            .outspec
            .names()
            .into_iter()
            .filter(|n| n.kind == Kind::Handle)
            .cloned()
            .collect();

        let mut saw_bare = false;
        let mut saw_close = false;
        for g in &mut d.body {
            let rules = std::mem::take(&mut g.rules);
            let mut expanded = Vec::with_capacity(rules.len());
            for rule in rules {
                if rule.lhs.iter().any(is_bare) {
                    saw_bare = true;
                    if handles.is_empty() {
                        return Err(Diagnostic::error(
                            "E0221",
                            rule.span,
                            format!(
                                "`{}` has no handle output for this message pattern to listen on",
                                d.name
                            ),
                        ));
                    }
                    expand_rule(rule, &handles, &mut expanded);
                } else {
                    expanded.push(rule);
                }
            }
            for rule in &expanded {
                if rule.lhs.iter().any(|i| is_handle_close(i, &handles)) {
                    saw_close = true;
                }
            }
            g.rules = expanded;
        }

        // No explicit close handling: die quietly when every handle closes.
        if saw_bare && !saw_close && !handles.is_empty() {
            let span = d.span;
            let close = Rule {
                lhs: handles
                    .iter()
                    .map(|h| LhsItem::Close { target: MsgTarget::Var(h.clone()), span })
                    .collect(),
                bars: 2,
                rhs: Vec::new(),
                body: None,
                span,
            };
            match d.body.last_mut() {
                Some(g) => g.rules.push(close),
                None => d.body.push(Group { rules: vec![close] }),
            }
        }
        decls.push(d);
    }
    Ok(Program { decls })
}

fn is_bare(item: &LhsItem) -> bool {
    matches!(
        item,
        LhsItem::Messages { target: MsgTarget::Bare(_), .. }
            | LhsItem::RawCapture { target: MsgTarget::Bare(_), .. }
            | LhsItem::Close { target: MsgTarget::Bare(_), .. }
    )
}

fn is_handle_close(item: &LhsItem, handles: &[Name]) -> bool {
    matches!(item, LhsItem::Close { target: MsgTarget::Var(n), .. }
        if handles.iter().any(|h| h.text == n.text))
}

fn expand_rule(rule: Rule, handles: &[Name], out: &mut Vec<Rule>) {
    // A bare close listens for all handles at once; receives listen on
    // each in turn.
    let bare_close_only = rule
        .lhs
        .iter()
        .all(|i| !is_bare(i) || matches!(i, LhsItem::Close { target: MsgTarget::Bare(_), .. }));
    if bare_close_only {
        let mut r = rule;
        let lhs = std::mem::take(&mut r.lhs);
        for item in lhs {
            match item {
                LhsItem::Close { target: MsgTarget::Bare(_), span } => {
                    for h in handles {
                        r.lhs.push(LhsItem::Close { target: MsgTarget::Var(h.clone()), span });
                    }
                }
                other => r.lhs.push(other),
            }
        }
        out.push(r);
        return;
    }
    for h in handles {
        let mut copy = rule.clone();
        for item in &mut copy.lhs {
            let target = match item {
                LhsItem::Messages { target: t @ MsgTarget::Bare(_), .. }
                | LhsItem::RawCapture { target: t @ MsgTarget::Bare(_), .. }
                | LhsItem::Close { target: t @ MsgTarget::Bare(_), .. } => t,
                _ => continue,
            };
            let span = target.span();
            *target = MsgTarget::Var(Name { span, ..h.clone() });
        }
        out.push(copy);
    }
}
