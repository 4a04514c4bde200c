//! Text rendering with minimal parentheses.
//!
//! Precedence from loosest: `->` (right associative), `|`, `&`, `!`.
//! A quantifier body extends as far right as possible, so a quantifier is
//! bracketed whenever something follows it.

use super::{Formula, Node};

pub fn render(f: &Formula) -> String {
    let mut out = String::new();
    go(f, 0, true, &mut out);
    out
}

fn go(f: &Formula, prec: u8, tail: bool, out: &mut String) {
    let own = match f.node() {
        Node::Implies(..) => 0,
        Node::Or(_) => 1,
        Node::And(_) => 2,
        _ => 3,
    };
    let is_quant = matches!(
        f.node(),
        Node::Exists(..) | Node::Forall(..) | Node::ExistsSet(..) | Node::ForallSet(..) | Node::ExistsMod(..)
    );
    if own < prec || (is_quant && !tail) {
        out.push('(');
        go(f, 0, true, out);
        out.push(')');
        return;
    }
    match f.node() {
        Node::True => out.push_str("true"),
        Node::False => out.push_str("false"),
        Node::Atom(r, args) => {
            out.push_str(r);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(a);
            }
            out.push(')');
        }
        Node::SetAtom(x, a) => {
            out.push_str(x);
            out.push('(');
            out.push_str(a);
            out.push(')');
        }
        Node::Eq(a, b) => {
            out.push_str(a);
            out.push_str(" = ");
            out.push_str(b);
        }
        Node::Leq(a, b) => {
            out.push_str(a);
            out.push_str(" <= ");
            out.push_str(b);
        }
        Node::Not(a) => {
            out.push('!');
            go(a, 3, tail, out);
        }
        Node::And(parts) | Node::Or(parts) => {
            let sep = if own == 2 { " & " } else { " | " };
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                go(p, own + 1, tail && i + 1 == parts.len(), out);
            }
        }
        Node::Implies(a, b) => {
            go(a, 1, false, out);
            out.push_str(" -> ");
            go(b, 0, tail, out);
        }
        Node::Exists(x, b) => quant("exists", x, b, out),
        Node::Forall(x, b) => quant("forall", x, b, out),
        Node::ExistsSet(x, b) => quant("existsSet", x, b, out),
        Node::ForallSet(x, b) => quant("forallSet", x, b, out),
        Node::ExistsMod(i, p, x, b) => quant(&format!("existsMod[{i},{p}]"), x, b, out),
    }
}

fn quant(kw: &str, x: &str, body: &Formula, out: &mut String) {
    out.push_str(kw);
    out.push(' ');
    out.push_str(x);
    out.push_str(". ");
    go(body, 0, true, out);
}
