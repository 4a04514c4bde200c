//! Recursive-descent parser for the formula grammar.
//!
//! `N(x)` is a set-membership atom when `N` is a set variable bound by an
//! enclosing `existsSet`/`forallSet` (or declared free through
//! [`parse_formula_with_sets`]); otherwise it is a relation atom.

use super::{var, Formula, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(u32),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Equal,
    Leq,
    End,
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| Error::Parse { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let adv = |k: usize, i: &mut usize, col: &mut usize| {
            *i += k;
            *col += k;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(1, &mut i, &mut col);
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok = if two == "->" {
            adv(2, &mut i, &mut col);
            Tok::Arrow
        } else if two == "<=" {
            adv(2, &mut i, &mut col);
            Tok::Leq
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            loop {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let so_far: String = chars[start..i].iter().collect();
                if so_far.ends_with("__") && i < chars.len() && chars[i] == '{' {
                    while i < chars.len() && chars[i] != '}' {
                        if !(chars[i] == '{' || chars[i] == ',' || chars[i].is_ascii_digit()) {
                            return Err(err(l0, c0, "malformed expanded symbol name".into()));
                        }
                        i += 1;
                    }
                    if i == chars.len() {
                        return Err(err(l0, c0, "unterminated `{` in symbol name".into()));
                    }
                    i += 1;
                    continue;
                }
                break;
            }
            col += i - start;
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let s: String = chars[start..i].iter().collect();
            Tok::Num(s.parse().map_err(|_| err(l0, c0, format!("number `{s}` too large")))?)
        } else {
            adv(1, &mut i, &mut col);
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBrack,
                ']' => Tok::RBrack,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '!' => Tok::Bang,
                '&' => Tok::Amp,
                '|' => Tok::Pipe,
                '=' => Tok::Equal,
                _ => return Err(err(l0, c0, format!("unexpected character `{c}`"))),
            }
        };
        out.push(Lexed { tok, line: l0, col: c0 });
    }
    out.push(Lexed { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    sets: Vec<String>,
}

const KEYWORDS: &[&str] = &["true", "false", "exists", "forall", "existsSet", "forallSet", "existsMod"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Parse { line: t.line, col: t.col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.disj()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disj(&mut self) -> Result<Formula> {
        let mut parts = vec![self.conj()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { raw_nary(parts, false) })
    }

    fn conj(&mut self) -> Result<Formula> {
        let mut parts = vec![self.unary()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { raw_nary(parts, true) })
    }

    fn elem_var(&mut self) -> Result<Var> {
        match self.peek().clone() {
            Tok::Ident(s) if s.starts_with(|c: char| c.is_ascii_lowercase()) && !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(var(&s))
            }
            _ => self.err("expected an element variable"),
        }
    }

    fn set_var(&mut self) -> Result<Var> {
        match self.peek().clone() {
            Tok::Ident(s) if super::is_set_var_name(&s) && !s.contains('{') => {
                self.bump();
                Ok(var(&s))
            }
            _ => self.err("expected a set variable"),
        }
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(Formula::tt())
                }
                "false" => {
                    self.bump();
                    Ok(Formula::ff())
                }
                "exists" | "forall" => {
                    self.bump();
                    let x = self.elem_var()?;
                    self.expect(Tok::Dot, "`.`")?;
                    let body = self.formula()?;
                    Ok(if s == "exists" { Formula::exists(&x, body) } else { Formula::forall(&x, body) })
                }
                "existsSet" | "forallSet" => {
                    self.bump();
                    let x = self.set_var()?;
                    self.expect(Tok::Dot, "`.`")?;
                    self.sets.push(x.to_string());
                    let body = self.formula();
                    self.sets.pop();
                    let body = body?;
                    Ok(if s == "existsSet" { Formula::exists_set(&x, body) } else { Formula::forall_set(&x, body) })
                }
                "existsMod" => {
                    self.bump();
                    self.expect(Tok::LBrack, "`[`")?;
                    let i = self.number()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let p = self.number()?;
                    self.expect(Tok::RBrack, "`]`")?;
                    if p == 0 || i >= p {
                        return self.err("existsMod needs 0 <= i < p");
                    }
                    let x = self.elem_var()?;
                    self.expect(Tok::Dot, "`.`")?;
                    let body = self.formula()?;
                    Ok(Formula::exists_mod(i, p, &x, body))
                }
                _ if s.starts_with(|c: char| c.is_ascii_uppercase()) => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        args.push(self.elem_var()?);
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            args.push(self.elem_var()?);
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.is_empty() {
                        return self.err("atoms need at least one argument");
                    }
                    if self.sets.iter().any(|x| *x == s) {
                        if args.len() != 1 {
                            return self.err(format!("set variable `{s}` applied to {} arguments", args.len()));
                        }
                        Ok(Formula::set_atom(&var(&s), &args[0]))
                    } else {
                        Ok(Formula::atom(&s, &args))
                    }
                }
                _ => {
                    let x = self.elem_var()?;
                    match self.bump() {
                        Tok::Equal => Ok(Formula::eq(&x, &self.elem_var()?)),
                        Tok::Leq => Ok(Formula::leq(&x, &self.elem_var()?)),
                        _ => {
                            self.pos -= 1;
                            self.err("expected `=` or `<=`")
                        }
                    }
                }
            },
            _ => self.err("expected a formula"),
        }
    }

    fn number(&mut self) -> Result<u32> {
        match self.bump() {
            Tok::Num(n) => Ok(n),
            _ => {
                self.pos -= 1;
                self.err("expected a number")
            }
        }
    }
}

/// Keeps explicit nesting from the source: `a & (b & c)` stays nested.
fn raw_nary(parts: Vec<Formula>, conj: bool) -> Formula {
    use super::Node;
    let node = if conj { Node::And(parts) } else { Node::Or(parts) };
    Formula(std::sync::Arc::new(node))
}

pub fn parse_formula(src: &str) -> Result<Formula> {
    parse_formula_with_sets(src, &[])
}

/// Parses with the given free set variables in scope.
pub fn parse_formula_with_sets(src: &str, free_sets: &[&str]) -> Result<Formula> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, sets: free_sets.iter().map(|s| s.to_string()).collect() };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(f)
}
