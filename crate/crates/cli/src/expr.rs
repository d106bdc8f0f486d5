//! Field expressions:
//! expr := term (('+'|'-') term)*; term := factor (('*'|'/') factor)*;
//! factor := base ('^' number)?; base := number | ident | ident '(' args ')'
//! | '(' expr ')' | '-' base.

use std::sync::Arc;

use critlab::manifold::NodeCoords;
use critlab::{Field, ManifoldModel};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {expected}")]
    SyntaxError { position: usize, expected: String },
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Const,
    Cos,
    Sin,
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    R,
    Coord(usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, c: &NodeCoords) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::R => c.r,
            Expr::Coord(i) => c.x.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(e) => -e.eval(c),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(c), b.eval(c));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ => a / b,
                }
            }
            Expr::Pow(a, p) => a.eval(c).powf(*p),
            Expr::Call(f, args) => {
                let a = args[0].eval(c);
                match f {
                    Func::Const => a,
                    Func::Cos => a.cos(),
                    Func::Sin => a.sin(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(c)),
                    Func::Max => a.max(args[1].eval(c)),
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    coords: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err<T>(&mut self, expected: &str) -> Result<T, ExprError> {
        self.skip_ws();
        Err(ExprError::SyntaxError { position: self.pos, expected: expected.into() })
    }

    fn expect(&mut self, ch: u8) -> Result<(), ExprError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("'{}'", ch as char))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            acc = Expr::Bin(op as char, Box::new(acc), Box::new(self.term()?));
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            acc = Expr::Bin(op as char, Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            if !matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
                return self.err("number");
            }
            let p = self.number()?;
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| ExprError::SyntaxError { position: start, expected: "number".into() })
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Num(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("").to_string();
                self.ident(name)
            }
            _ => self.err("number, identifier, '(' or '-'"),
        }
    }

    fn ident(&mut self, name: String) -> Result<Expr, ExprError> {
        let func = match name.as_str() {
            "r" => return Ok(Expr::R),
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            "const" => Func::Const,
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => {
                if let Some(k) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if k >= 1 && k <= self.coords && !name[1..].starts_with('0') {
                        return Ok(Expr::Coord(k - 1));
                    }
                }
                return Err(ExprError::UnknownIdentifier(name));
            }
        };
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while args.len() < func.arity() {
            self.expect(b',')?;
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        Ok(Expr::Call(func, args))
    }
}

/// Parses with `coords` admissible coordinate identifiers x1..x{coords}.
pub fn parse(src: &str, coords: usize) -> Result<Expr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, coords };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("operator or end of input");
    }
    Ok(e)
}

pub fn parse_field_expr(src: &str, m: &Arc<ManifoldModel>) -> Result<Field, ExprError> {
    let coords = m.node_coords(0).x.len();
    let e = parse(src, coords)?;
    Ok(Field::from_fn(m, |c| e.eval(c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_examples() {
        let s = ManifoldModel::sphere(3, 128).unwrap();
        let f = parse_field_expr("const(0.75)", &s).unwrap();
        assert!(f.values().iter().all(|v| *v == 0.75));
        let g = parse_field_expr("1 + 0.5*cos(r)", &s).unwrap();
        for i in [0, 17, 127] {
            let r = s.node_coords(i).r;
            assert!((g.values()[i] - (1.0 + 0.5 * r.cos())).abs() < 1e-15);
        }
        assert_eq!(
            parse("cos(r", 3),
            Err(ExprError::SyntaxError { position: 5, expected: "')'".into() })
        );
    }

    #[test]
    fn precedence_and_unary() {
        let c = NodeCoords { r: 2.0, x: vec![3.0, -1.0] };
        let v = |s: &str| parse(s, 2).unwrap().eval(&c);
        assert_eq!(v("1 + 2 * 3"), 7.0);
        // Unary minus sits inside base, so it binds tighter than ^.
        assert_eq!(v("-r^2"), 4.0);
        assert_eq!(v("-(r^2)"), -4.0);
        assert_eq!(v("(1 + r)^2 / 3"), 3.0);
        assert_eq!(v("max(x1, x2) - min(x1, abs(x2))"), 2.0);
        assert_eq!(v("8 / 2 / 2"), 2.0);
        assert_eq!(v(" exp( 0 )+pi-pi "), 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(parse("foo + 1", 3), Err(ExprError::UnknownIdentifier("foo".into())));
        assert_eq!(parse("x4", 3), Err(ExprError::UnknownIdentifier("x4".into())));
        assert!(matches!(parse("r^x1", 3), Err(ExprError::SyntaxError { position: 2, .. })));
        assert!(matches!(parse("1 2", 3), Err(ExprError::SyntaxError { position: 2, .. })));
        assert!(matches!(parse("min(1)", 3), Err(ExprError::SyntaxError { position: 5, .. })));
        assert!(matches!(parse("", 3), Err(ExprError::SyntaxError { position: 0, .. })));
    }

    use proptest::prelude::*;

    fn show(e: &Expr) -> String {
        match e {
            Expr::Num(v) => format!("{v}"),
            Expr::R => "r".into(),
            Expr::Coord(i) => format!("x{}", i + 1),
            Expr::Neg(a) => format!("-({})", show(a)),
            Expr::Bin(op, a, b) => format!("({} {op} {})", show(a), show(b)),
            Expr::Pow(a, p) => format!("({})^{p}", show(a)),
            Expr::Call(f, args) => {
                let name = format!("{f:?}").to_lowercase();
                let inner: Vec<String> = args.iter().map(show).collect();
                format!("{name}({})", inner.join(", "))
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let num = (0u32..100_000).prop_map(|k| Expr::Num(k as f64 / 1000.0));
        let leaf = prop_oneof![num, Just(Expr::R), (0usize..3).prop_map(Expr::Coord)];
        leaf.prop_recursive(4, 32, 2, |inner| {
            let func = prop_oneof![
                Just(Func::Const),
                Just(Func::Cos),
                Just(Func::Sin),
                Just(Func::Exp),
                Just(Func::Abs),
            ];
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (prop::sample::select(vec!['+', '-', '*', '/']), inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (inner.clone(), 0u32..40).prop_map(|(a, p)| Expr::Pow(Box::new(a), p as f64 / 10.0)),
                (func, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
                (prop::bool::ANY, inner.clone(), inner)
                    .prop_map(|(mx, a, b)| Expr::Call(if mx { Func::Max } else { Func::Min }, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_trees_parse_back(e in arb_expr()) {
            prop_assert_eq!(parse(&show(&e), 3).unwrap(), e);
        }
    }
}
