//! Prefix-form reader: `expr := number | varref | "(" op expr* ")"`.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Expr, VarId};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("undeclared variable {name} at byte {pos}")]
    UndeclaredVariable { name: String, pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' {
            out.push((i, Tok::Open));
            i += 1;
        } else if c == b')' {
            out.push((i, Tok::Close));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')' {
                i += 1;
            }
            out.push((start, Tok::Atom(&text[start..i])));
        }
    }
    out
}

struct Parser<'a, 'v> {
    toks: Vec<(usize, Tok<'a>)>,
    at: usize,
    end: usize,
    declared: &'v BTreeSet<VarId>,
}

fn syntax(pos: usize, msg: &str) -> ParseError {
    ParseError::Syntax { pos, msg: msg.to_string() }
}

impl<'a> Parser<'a, '_> {
    fn peek(&self) -> Option<&(usize, Tok<'a>)> {
        self.toks.get(self.at)
    }

    fn pos(&self) -> usize {
        self.peek().map(|t| t.0).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = match self.toks.get(self.at) {
            Some(t) => t.clone(),
            None => return Err(syntax(self.end, "unexpected end of input")),
        };
        self.at += 1;
        match tok {
            Tok::Close => Err(syntax(pos, "unexpected ')'")),
            Tok::Atom(a) => self.atom(pos, a),
            Tok::Open => {
                let (op_pos, op) = match self.toks.get(self.at) {
                    Some((p, Tok::Atom(a))) => (*p, *a),
                    _ => return Err(syntax(self.pos(), "expected operator after '('")),
                };
                self.at += 1;
                let mut args = Vec::new();
                loop {
                    match self.peek() {
                        Some((_, Tok::Close)) => {
                            self.at += 1;
                            break;
                        }
                        Some(_) => args.push(self.expr()?),
                        None => return Err(syntax(self.end, "unclosed '('")),
                    }
                }
                match op {
                    "+" => Ok(Expr::Sum(args)),
                    "*" => Ok(Expr::Product(args)),
                    "neg" => {
                        if args.len() != 1 {
                            return Err(syntax(op_pos, "neg takes exactly one operand"));
                        }
                        Ok(Expr::Neg(Box::new(args.pop().unwrap())))
                    }
                    "^" => {
                        if args.len() != 2 {
                            return Err(syntax(op_pos, "^ takes a base and an exponent"));
                        }
                        let exp = match args.pop().unwrap() {
                            Expr::Const(c) if c >= 0.0 && c == (c as u32) as f64 => c as u32,
                            _ => return Err(syntax(op_pos, "exponent must be a nonnegative integer literal")),
                        };
                        Ok(Expr::Pow(Box::new(args.pop().unwrap()), exp))
                    }
                    _ => Err(syntax(op_pos, "unknown operator")),
                }
            }
        }
    }

    fn atom(&self, pos: usize, a: &str) -> Result<Expr, ParseError> {
        let first = a.as_bytes()[0];
        if first.is_ascii_digit() || first == b'-' || first == b'+' || first == b'.' {
            return a
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(Expr::Const)
                .ok_or_else(|| syntax(pos, "malformed number"));
        }
        let (block, index) = a.rsplit_once('.').ok_or_else(|| syntax(pos, "variable needs block.index"))?;
        if block.is_empty() || block.split('.').any(str::is_empty) {
            return Err(syntax(pos, "empty block name"));
        }
        let index: usize = index.parse().map_err(|_| syntax(pos, "variable index must be a nonnegative integer"))?;
        let v = VarId::new(block, index);
        if !self.declared.contains(&v) {
            return Err(ParseError::UndeclaredVariable { name: a.to_string(), pos });
        }
        Ok(Expr::Var(v))
    }
}

/// Parse prefix text; every variable must be in `declared`.
pub fn parse_expr(text: &str, declared: &BTreeSet<VarId>) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: tokenize(text), at: 0, end: text.len(), declared };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(syntax(p.pos(), "trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn decl() -> BTreeSet<VarId> {
        [VarId::leader(0), VarId::follower("f1", 0), VarId::follower("f1", 1)].into_iter().collect()
    }

    #[test]
    fn reads_nested_forms() {
        let e = parse_expr("(+ x.0 (^ y.f1.1 2))", &decl()).unwrap();
        assert_eq!(
            e,
            Expr::Sum(vec![
                Expr::Var(VarId::leader(0)),
                Expr::Pow(Box::new(Expr::Var(VarId::follower("f1", 1))), 2)
            ])
        );
        let e = parse_expr("(* -1 x.0)", &decl()).unwrap();
        assert_eq!(e, Expr::Product(vec![Expr::Const(-1.0), Expr::Var(VarId::leader(0))]));
    }

    #[test]
    fn rejects_undeclared() {
        let err = parse_expr("(+ z.0 1)", &decl()).unwrap_err();
        assert_eq!(err, ParseError::UndeclaredVariable { name: "z.0".into(), pos: 3 });
        assert!(parse_expr("y.f1.2", &decl()).is_err());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = [
            ("(+ x.0", 6),
            ("x.0)", 3),
            ("(^ x.0 1.5)", 1),
            ("(^ x.0 -1)", 1),
            ("(/ x.0 2)", 1),
            ("()", 1),
            ("(neg)", 1),
            ("1e", 0),
            ("x", 0),
            ("", 0),
        ];
        for (text, pos) in cases {
            match parse_expr(text, &decl()) {
                Err(ParseError::Syntax { pos: p, .. }) => assert_eq!(p, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn numbers() {
        for (t, v) in [("0.5", 0.5), ("-2", -2.0), ("+3", 3.0), (".25", 0.25), ("1e-3", 1e-3)] {
            assert_eq!(parse_expr(t, &decl()).unwrap(), Expr::Const(v));
        }
    }
}
