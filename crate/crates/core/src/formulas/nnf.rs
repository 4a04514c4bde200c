//! Negation normal form.
//!
//! Implications are first rewritten as `!a | b`; negations are then pushed
//! inward left to right. A negated counting quantifier becomes the
//! disjunction over the other residues.

use super::{Formula, Node};
use std::collections::HashMap;

pub fn to_nnf(f: &Formula) -> Formula {
    go(f, false, &mut HashMap::new())
}

fn go(f: &Formula, neg: bool, memo: &mut HashMap<(usize, bool), Formula>) -> Formula {
    if let Some(g) = memo.get(&(f.ptr(), neg)) {
        return g.clone();
    }
    let out = match f.node() {
        Node::True => {
            if neg {
                Formula::ff()
            } else {
                f.clone()
            }
        }
        Node::False => {
            if neg {
                Formula::tt()
            } else {
                f.clone()
            }
        }
        Node::Atom(..) | Node::Eq(..) | Node::Leq(..) | Node::SetAtom(..) => {
            if neg {
                Formula::not(f.clone())
            } else {
                f.clone()
            }
        }
        Node::Not(a) => go(a, !neg, memo),
        Node::And(parts) | Node::Or(parts) => {
            let kids: Vec<Formula> = parts.iter().map(|p| go(p, neg, memo)).collect();
            let conj = matches!(f.node(), Node::And(_)) != neg;
            if conj {
                Formula::and(kids)
            } else {
                Formula::or(kids)
            }
        }
        Node::Implies(a, b) => {
            let kids = vec![go(a, !neg, memo), go(b, neg, memo)];
            if neg {
                Formula::and(kids)
            } else {
                Formula::or(kids)
            }
        }
        Node::Exists(x, b) => {
            let body = go(b, neg, memo);
            if neg {
                Formula::forall(x, body)
            } else {
                Formula::exists(x, body)
            }
        }
        Node::Forall(x, b) => {
            let body = go(b, neg, memo);
            if neg {
                Formula::exists(x, body)
            } else {
                Formula::forall(x, body)
            }
        }
        Node::ExistsSet(x, b) => {
            let body = go(b, neg, memo);
            if neg {
                Formula::forall_set(x, body)
            } else {
                Formula::exists_set(x, body)
            }
        }
        Node::ForallSet(x, b) => {
            let body = go(b, neg, memo);
            if neg {
                Formula::exists_set(x, body)
            } else {
                Formula::forall_set(x, body)
            }
        }
        Node::ExistsMod(i, p, x, b) => {
            let body = go(b, false, memo);
            if neg {
                Formula::or((0..*p).filter(|j| j != i).map(|j| Formula::exists_mod(j, *p, x, body.clone())).collect())
            } else {
                Formula::exists_mod(*i, *p, x, body)
            }
        }
    };
    memo.insert((f.ptr(), neg), out.clone());
    out
}
