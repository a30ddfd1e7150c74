//! Parser for the domain text format.
//!
//! ```text
//! domain <name>
//! predicates: <name>/<arity>, ...
//! constants: <name>, ...            # optional
//! discount: <decimal in (0,1)>
//! absorbing-goal: true|false
//! reward: <expr>
//! action <Name>(<var>, ...):
//!   alternative <name> prob <decimal | expr>:
//!     tvd <pred>(<vars>): <expr>    # omitted predicates keep their truth
//!
//! <expr>  := <number> | (if <label> <expr> <expr>) | (leaf <number> <action>(<terms>))
//! <label> := <pred>(<term>, ...) | <term> = <term>
//! ```
//!
//! `#` starts a comment. Variables are lower-case identifiers; constants are
//! quoted (`"depot"`) or declared in the `constants:` line. Numbers may be
//! decimals or explicit ratios (`207/10`); both are exact. The `(leaf v tag)`
//! form carries a policy annotation and appears in exported bundles.

use std::collections::BTreeMap;

use crate::domain::{ActionModel, Alternative, DomainError, DomainSpec, PredicateDecl, Tvd};
use crate::eval::Obj;
use crate::label::Label;
use crate::store::{NodeId, Store};
use crate::term::{ActionTag, Term};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Slash,
    Equals,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(s) => write!(f, "number `{s}`"),
            Tok::Quoted(s) => write!(f, "\"{s}\""),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Equals => write!(f, "`=`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, DomainError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                bump(&mut chars);
                if c == '\n' {
                    break;
                }
            }
            continue;
        }
        let tok = match c {
            '(' => {
                bump(&mut chars);
                Tok::LParen
            }
            ')' => {
                bump(&mut chars);
                Tok::RParen
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            ':' => {
                bump(&mut chars);
                Tok::Colon
            }
            '=' => {
                bump(&mut chars);
                Tok::Equals
            }
            '/' => {
                bump(&mut chars);
                Tok::Slash
            }
            '"' => {
                bump(&mut chars);
                let mut s = String::new();
                loop {
                    match chars.peek() {
                        Some(&'"') => {
                            bump(&mut chars);
                            break;
                        }
                        Some(_) => s.push(bump(&mut chars)),
                        None => {
                            return Err(DomainError::Parse {
                                line: tline,
                                col: tcol,
                                message: "unterminated quoted constant".into(),
                            })
                        }
                    }
                }
                Tok::Quoted(s)
            }
            c if c.is_ascii_digit()
                || (c == '-' && {
                    let mut look = chars.clone();
                    look.next();
                    look.peek().is_some_and(|d| d.is_ascii_digit())
                }) =>
            {
                let mut s = String::new();
                s.push(bump(&mut chars));
                let mut seen_dot = false;
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() || (d == '.' && !seen_dot) {
                        if d == '.' {
                            seen_dot = true;
                        }
                        s.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                Tok::Number(s)
            }
            c if c.is_alphabetic() => {
                let mut s = String::new();
                s.push(bump(&mut chars));
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || matches!(d, '_' | '*' | '\'' | '-') {
                        s.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            other => {
                return Err(DomainError::Parse {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Token {
            tok,
            line: tline,
            col: tcol,
        });
    }
    Ok(out)
}

struct Parser<'s> {
    tokens: Vec<Token>,
    pos: usize,
    store: &'s mut Store,
    predicates: Vec<PredicateDecl>,
    constants: Vec<String>,
}

impl<'s> Parser<'s> {
    fn err(&self, message: impl Into<String>) -> DomainError {
        let (line, col) = self
            .tokens
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or_else(|| {
                self.tokens
                    .last()
                    .map(|t| (t.line, t.col + 1))
                    .unwrap_or((1, 1))
            });
        DomainError::Parse {
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + ahead).map(|t| &t.tok)
    }

    fn pos_of_current(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or((0, 0))
    }

    fn next(&mut self) -> Result<Token, DomainError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DomainError> {
        let found = self.next()?;
        if found.tok == tok {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected {tok}, found {}", found.tok)))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DomainError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            Some(other) => Err(self.err(format!("expected `{kw}`, found {other}"))),
            None => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String, DomainError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            Some(other) => Err(self.err(format!("expected {what}, found {other}"))),
            None => Err(self.err(format!("expected {what}"))),
        }
    }

    fn number(&mut self) -> Result<Value, DomainError> {
        let (line, col) = self.pos_of_current();
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.pos += 1;
                // Optional `/denominator` for exact ratios.
                let text = if self.peek() == Some(&Tok::Slash) {
                    match self.peek_at(1).cloned() {
                        Some(Tok::Number(d)) => {
                            self.pos += 2;
                            format!("{n}/{d}")
                        }
                        _ => n,
                    }
                } else {
                    n
                };
                text.parse::<Value>().map_err(|e| DomainError::Parse {
                    line,
                    col,
                    message: e.to_string(),
                })
            }
            Some(other) => Err(self.err(format!("expected a number, found {other}"))),
            None => Err(self.err("expected a number")),
        }
    }

    fn term(&mut self) -> Result<Term, DomainError> {
        match self.peek().cloned() {
            Some(Tok::Quoted(c)) => {
                self.pos += 1;
                if !self.constants.contains(&c) {
                    self.constants.push(c.clone());
                }
                Ok(Term::constant(c))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.constants.contains(&name) {
                    Ok(Term::constant(name))
                } else if name.chars().next().is_some_and(|c| c.is_lowercase()) {
                    Ok(Term::var(name))
                } else {
                    self.pos -= 1;
                    Err(self.err(format!(
                        "`{name}` is neither a declared constant nor a lower-case variable"
                    )))
                }
            }
            Some(other) => Err(self.err(format!("expected a term, found {other}"))),
            None => Err(self.err("expected a term")),
        }
    }

    fn label(&mut self) -> Result<Label, DomainError> {
        // Atom when an identifier is directly followed by `(`.
        if let (Some(Tok::Ident(_)), Some(Tok::LParen)) = (self.peek(), self.peek_at(1)) {
            let (line, col) = self.pos_of_current();
            let pred = self.ident("a predicate name")?;
            self.expect(Tok::LParen)?;
            let mut args = Vec::new();
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    args.push(self.term()?);
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            match self.predicates.iter().find(|p| p.name == pred) {
                None => {
                    return Err(DomainError::UnknownPredicate {
                        name: pred,
                        line,
                        col,
                    })
                }
                Some(decl) if decl.arity != args.len() => {
                    return Err(DomainError::ArityMismatch {
                        name: pred,
                        expected: decl.arity,
                        got: args.len(),
                        line,
                        col,
                    })
                }
                Some(_) => {}
            }
            return Ok(Label::atom(pred, args));
        }
        let left = self.term()?;
        self.expect(Tok::Equals)?;
        let right = self.term()?;
        Ok(Label::equality(left, right))
    }

    fn expr(&mut self) -> Result<NodeId, DomainError> {
        match self.peek().cloned() {
            Some(Tok::Number(_)) => {
                let v = self.number()?;
                Ok(self.store.mk_leaf(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                if self.at_keyword("if") {
                    self.pos += 1;
                    let label = self.label()?;
                    let hi = self.expr()?;
                    let lo = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(self.store.branch(label, hi, lo))
                } else if self.at_keyword("leaf") {
                    self.pos += 1;
                    let v = self.number()?;
                    let action = self.ident("an action name")?;
                    self.expect(Tok::LParen)?;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.term()?);
                            if self.peek() == Some(&Tok::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::RParen)?;
                    Ok(self
                        .store
                        .mk_leaf_tagged(v, Some(ActionTag::new(action, args))))
                } else {
                    Err(self.err("expected `if` or `leaf` after `(`"))
                }
            }
            Some(other) => Err(self.err(format!("expected an expression, found {other}"))),
            None => Err(self.err("expected an expression")),
        }
    }
}

/// Parses and validates a whole domain file.
pub fn parse_domain(store: &mut Store, text: &str) -> Result<DomainSpec, DomainError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        store,
        predicates: Vec::new(),
        constants: Vec::new(),
    };

    p.expect_keyword("domain")?;
    let name = p.ident("a domain name")?;

    p.expect_keyword("predicates")?;
    p.expect(Tok::Colon)?;
    loop {
        let pname = p.ident("a predicate name")?;
        p.expect(Tok::Slash)?;
        let arity = match p.next()?.tok {
            Tok::Number(n) => n.parse::<usize>().map_err(|_| {
                p.pos -= 1;
                p.err("arity must be a non-negative integer")
            })?,
            _ => {
                p.pos -= 1;
                return Err(p.err("expected an arity"));
            }
        };
        p.predicates.push(PredicateDecl { name: pname, arity });
        if p.peek() == Some(&Tok::Comma) {
            p.pos += 1;
        } else {
            break;
        }
    }

    if p.at_keyword("constants") {
        p.pos += 1;
        p.expect(Tok::Colon)?;
        loop {
            let c = p.ident("a constant name")?;
            p.constants.push(c);
            if p.peek() == Some(&Tok::Comma) {
                p.pos += 1;
            } else {
                break;
            }
        }
    }

    p.expect_keyword("discount")?;
    p.expect(Tok::Colon)?;
    let discount = p.number()?;

    p.expect_keyword("absorbing-goal")?;
    p.expect(Tok::Colon)?;
    let absorbing_goal = match p.ident("`true` or `false`")?.as_str() {
        "true" => true,
        "false" => false,
        other => {
            p.pos -= 1;
            return Err(p.err(format!("expected `true` or `false`, found `{other}`")));
        }
    };

    p.expect_keyword("reward")?;
    p.expect(Tok::Colon)?;
    let reward = p.expr()?;

    let mut actions: Vec<ActionModel> = Vec::new();
    while p.at_keyword("action") {
        p.pos += 1;
        let aname = p.ident("an action name")?;
        p.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if p.peek() != Some(&Tok::RParen) {
            loop {
                let v = p.ident("a parameter variable")?;
                params.push(v);
                if p.peek() == Some(&Tok::Comma) {
                    p.pos += 1;
                } else {
                    break;
                }
            }
        }
        p.expect(Tok::RParen)?;
        p.expect(Tok::Colon)?;

        let mut alternatives = Vec::new();
        while p.at_keyword("alternative") {
            p.pos += 1;
            let alt_name = p.ident("an alternative name")?;
            p.expect_keyword("prob")?;
            let prob = match p.peek() {
                Some(Tok::Number(_)) => {
                    let v = p.number()?;
                    p.store.mk_leaf(v)
                }
                _ => p.expr()?,
            };
            p.expect(Tok::Colon)?;

            let mut tvds = BTreeMap::new();
            while p.at_keyword("tvd") {
                p.pos += 1;
                let (line, col) = p.pos_of_current();
                let pred = p.ident("a predicate name")?;
                p.expect(Tok::LParen)?;
                let mut pred_params = Vec::new();
                if p.peek() != Some(&Tok::RParen) {
                    loop {
                        pred_params.push(p.ident("a parameter variable")?);
                        if p.peek() == Some(&Tok::Comma) {
                            p.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                p.expect(Tok::RParen)?;
                let mut unique = pred_params.clone();
                unique.sort();
                unique.dedup();
                if unique.len() != pred_params.len() {
                    return Err(DomainError::Parse {
                        line,
                        col,
                        message: format!("TVD head for `{pred}` repeats a parameter"),
                    });
                }
                p.expect(Tok::Colon)?;
                let diagram = p.expr()?;
                tvds.insert(
                    pred.clone(),
                    Tvd {
                        action: aname.clone(),
                        alternative: alt_name.clone(),
                        predicate: pred,
                        pred_params,
                        action_params: params.clone(),
                        diagram,
                    },
                );
            }
            alternatives.push(Alternative {
                name: alt_name,
                prob,
                tvds,
            });
        }
        if alternatives.is_empty() {
            return Err(p.err(format!("action `{aname}` declares no alternatives")));
        }
        actions.push(ActionModel {
            name: aname,
            params,
            alternatives,
        });
    }

    if p.pos != p.tokens.len() {
        return Err(p.err("unexpected trailing input"));
    }

    let mut spec = DomainSpec {
        name,
        predicates: p.predicates.clone(),
        constants: p.constants.clone(),
        discount,
        absorbing_goal,
        reward,
        actions,
    };
    normalize_frame_tvds(p.store, &mut spec)?;
    spec.validate(p.store)?;
    Ok(spec)
}

/// Drops explicit TVDs that are structurally the frame TVD, so that printing
/// omits them and round-trips are stable.
fn normalize_frame_tvds(store: &mut Store, spec: &mut DomainSpec) -> Result<(), DomainError> {
    let predicates = spec.predicates.clone();
    for action in &mut spec.actions {
        for alt in &mut action.alternatives {
            let mut drop = Vec::new();
            for (pred_name, tvd) in alt.tvds.iter() {
                let Some(pred) = predicates.iter().find(|p| p.name == *pred_name) else {
                    continue; // validation reports this
                };
                if tvd.pred_params.len() != pred.arity {
                    continue;
                }
                let frame = super::frame_tvd(store, pred, &action.name, &alt.name, &action.params);
                let canon_args: Vec<Term> =
                    frame.pred_params.iter().map(Term::var).collect();
                let action_args: Vec<Term> =
                    action.params.iter().map(Term::var).collect();
                let canon = tvd.instantiate(store, &canon_args, &action_args)?;
                if canon == frame.diagram {
                    drop.push(pred_name.clone());
                }
            }
            for name in drop {
                alt.tvds.remove(&name);
            }
        }
    }
    Ok(())
}

/// Parses a single diagram expression against an existing domain's
/// declarations. Used to load exported value/policy diagrams.
pub fn parse_diagram(
    store: &mut Store,
    text: &str,
    spec: &DomainSpec,
) -> Result<NodeId, DomainError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        store,
        predicates: spec.predicates.clone(),
        constants: spec.constants.clone(),
    };
    let d = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(d)
}

/// Parses a ground state given as whitespace-separated atoms over object
/// numbers, e.g. `p1(1) q2(2)`.
pub fn parse_state_atoms(
    text: &str,
    spec: &DomainSpec,
) -> Result<Vec<(String, Vec<Obj>)>, DomainError> {
    let tokens = lex(text)?;
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < tokens.len() {
        let (line, col) = (tokens[pos].line, tokens[pos].col);
        let Tok::Ident(pred) = tokens[pos].tok.clone() else {
            return Err(DomainError::Parse {
                line,
                col,
                message: "expected a predicate name".into(),
            });
        };
        pos += 1;
        if tokens.get(pos).map(|t| &t.tok) != Some(&Tok::LParen) {
            return Err(DomainError::Parse {
                line,
                col,
                message: format!("expected `(` after `{pred}`"),
            });
        }
        pos += 1;
        let mut args = Vec::new();
        loop {
            match tokens.get(pos).map(|t| t.tok.clone()) {
                Some(Tok::Number(n)) => {
                    pos += 1;
                    let obj: Obj = n.parse().map_err(|_| DomainError::Parse {
                        line,
                        col,
                        message: format!("object `{n}` must be a positive integer"),
                    })?;
                    args.push(obj);
                    if tokens.get(pos).map(|t| &t.tok) == Some(&Tok::Comma) {
                        pos += 1;
                    }
                }
                Some(Tok::RParen) => {
                    pos += 1;
                    break;
                }
                _ => {
                    return Err(DomainError::Parse {
                        line,
                        col,
                        message: "expected an object number or `)`".into(),
                    })
                }
            }
        }
        match spec.predicate(&pred) {
            None => {
                return Err(DomainError::UnknownPredicate {
                    name: pred,
                    line,
                    col,
                })
            }
            Some(decl) if decl.arity != args.len() => {
                return Err(DomainError::ArityMismatch {
                    name: pred,
                    expected: decl.arity,
                    got: args.len(),
                    line,
                    col,
                })
            }
            Some(_) => {}
        }
        out.push((pred, args));
    }
    Ok(out)
}
