//! Arithmetic expressions in `x` and `y`.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'y' | name | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tan | exp | log | sqrt
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. A bare `name` must be one of the constants supplied to the
//! parser; it is substituted by value.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at {pos} in {src:?}")]
    UnexpectedChar { src: String, pos: usize, ch: char },
    #[error("unexpected end of expression {0:?}")]
    UnexpectedEnd(String),
    #[error("unknown identifier {name:?} in {src:?}")]
    UnknownIdentifier { src: String, name: String },
    #[error("trailing input at {pos} in {src:?}")]
    Trailing { src: String, pos: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tan" => Self::Tan,
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sqrt" => Self::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Tan => "tan",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Tan => v.tan(),
            Self::Exp => v.exp(),
            Self::Log => v.ln(),
            Self::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        Self::parse_with(src, &BTreeMap::new())
    }

    pub fn parse_with(src: &str, constants: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let mut p = Parser {
            src,
            chars: src.char_indices().collect(),
            pos: 0,
            constants,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(ExprError::Trailing {
                src: src.into(),
                pos: p.chars[p.pos].0,
            });
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Num(v) => *v,
            Var(Var::X) => x,
            Var(Var::Y) => y,
            Neg(a) => -a.eval(x, y),
            Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Pow(a, b) => match **b {
                Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => a.eval(x, y).powi(n as i32),
                _ => a.eval(x, y).powf(b.eval(x, y)),
            },
            Call(f, a) => f.apply(a.eval(x, y)),
        }
    }

    /// Constant value, if the expression does not depend on `x` or `y`.
    pub fn constant_value(&self) -> Option<f64> {
        self.is_constant().then(|| self.eval(0.0, 0.0))
    }

    fn is_constant(&self) -> bool {
        match self {
            Num(_) => true,
            Var(_) => false,
            Neg(a) | Call(_, a) => a.is_constant(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, v: Var) -> Expr {
        let d = |e: &Expr| e.derivative(v);
        let b = |e: Expr| Box::new(e);
        let simplified = match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => Neg(b(d(a))),
            Add(l, r) => Add(b(d(l)), b(d(r))),
            Sub(l, r) => Sub(b(d(l)), b(d(r))),
            Mul(l, r) => Add(b(Mul(b(d(l)), r.clone())), b(Mul(l.clone(), b(d(r))))),
            Div(l, r) => Div(
                b(Sub(b(Mul(b(d(l)), r.clone())), b(Mul(l.clone(), b(d(r)))))),
                b(Mul(r.clone(), r.clone())),
            ),
            Pow(l, r) if r.is_constant() => {
                let n = r.eval(0.0, 0.0);
                Mul(b(Mul(b(Num(n)), b(Pow(l.clone(), b(Num(n - 1.0)))))), b(d(l)))
            }
            // d(a^b) = a^b (b' ln a + b a'/a)
            Pow(l, r) => Mul(
                b(self.clone()),
                b(Add(
                    b(Mul(b(d(r)), b(Call(Func::Log, l.clone())))),
                    b(Div(b(Mul(r.clone(), b(d(l)))), l.clone())),
                )),
            ),
            Call(f, a) => {
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                    Func::Tan => Div(b(Num(1.0)), b(Pow(b(Call(Func::Cos, a.clone())), b(Num(2.0))))),
                    Func::Exp => self.clone(),
                    Func::Log => Div(b(Num(1.0)), a.clone()),
                    Func::Sqrt => Div(b(Num(0.5)), b(self.clone())),
                };
                Mul(b(outer), b(d(a)))
            }
        };
        simplified.simplify()
    }

    /// Folds constants and drops trivial zeros and ones.
    pub fn simplify(self) -> Expr {
        let b = Box::new;
        match self {
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                a => Neg(b(a)),
            },
            Add(l, r) => match (l.simplify(), r.simplify()) {
                (Num(x), Num(y)) => Num(x + y),
                (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
                (l, r) => Add(b(l), b(r)),
            },
            Sub(l, r) => match (l.simplify(), r.simplify()) {
                (Num(x), Num(y)) => Num(x - y),
                (e, Num(z)) if z == 0.0 => e,
                (Num(z), e) if z == 0.0 => Neg(b(e)),
                (l, r) => Sub(b(l), b(r)),
            },
            Mul(l, r) => match (l.simplify(), r.simplify()) {
                (Num(x), Num(y)) => Num(x * y),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
                (l, r) => Mul(b(l), b(r)),
            },
            Div(l, r) => match (l.simplify(), r.simplify()) {
                (Num(z), _) if z == 0.0 => Num(0.0),
                (e, Num(o)) if o == 1.0 => e,
                (l, r) => Div(b(l), b(r)),
            },
            Pow(l, r) => match (l.simplify(), r.simplify()) {
                (_, Num(z)) if z == 0.0 => Num(1.0),
                (e, Num(o)) if o == 1.0 => e,
                (l, r) => Pow(b(l), b(r)),
            },
            Call(f, a) => Call(f, b(a.simplify())),
            e => e,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) if *v < 0.0 => write!(f, "({v:?})"),
            Num(v) => write!(f, "{v:?}"),
            Var(Var::X) => f.write_str("x"),
            Var(Var::Y) => f.write_str("y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn unexpected(&self) -> ExprError {
        match self.chars.get(self.pos) {
            Some(&(pos, ch)) => ExprError::UnexpectedChar {
                src: self.src.into(),
                pos,
                ch,
            },
            None => ExprError::UnexpectedEnd(self.src.into()),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Add(Box::new(lhs), Box::new(rhs))
            } else {
                Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len() && (self.chars[self.pos].1.is_ascii_alphanumeric() || self.chars[self.pos].1 == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                match name.as_str() {
                    "x" => return Ok(Var(Var::X)),
                    "y" => return Ok(Var(Var::Y)),
                    _ => {}
                }
                if let Some(func) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Call(func, Box::new(arg)));
                }
                self.constants
                    .get(&name)
                    .map(|&v| Num(v))
                    .ok_or(ExprError::UnknownIdentifier {
                        src: self.src.into(),
                        name,
                    })
            }
            _ => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.chars.len() && p.chars[p.pos].1.is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.chars.get(self.pos).map(|c| c.1) == Some('.') {
            self.pos += 1;
            digits(self);
        }
        if let Some('e' | 'E') = self.chars.get(self.pos).map(|c| c.1) {
            let save = self.pos;
            self.pos += 1;
            if let Some('+' | '-') = self.chars.get(self.pos).map(|c| c.1) {
                self.pos += 1;
            }
            let before = self.pos;
            digits(self);
            if self.pos == before {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        text.parse::<f64>().map(Num).map_err(|_| {
            self.pos = start;
            self.unexpected()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1.5e2 - y", 0.0, 50.0), 100.0);
        assert_eq!(ev("2 * -3", 0.0, 0.0), -6.0);
    }

    #[test]
    fn functions_and_constants() {
        let mut c = BTreeMap::new();
        c.insert("p_atm".to_string(), 1.013e5);
        c.insert("rho_g".to_string(), 9.81e3);
        let e = Expr::parse_with("p_atm / rho_g + y", &c).unwrap();
        assert!((e.eval(0.0, 0.0) - 10.326197757390418).abs() < 1e-12);
        assert!((ev("sqrt(exp(log(4)))", 0.0, 0.0) - 2.0).abs() < 1e-15);
        assert!(ev("tan(x)", 0.3, 0.0) == 0.3f64.tan());
    }

    #[test]
    fn errors() {
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd(_))));
        assert!(matches!(Expr::parse("z"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(Expr::parse("(1"), Err(ExprError::UnexpectedEnd(_))));
        assert!(matches!(Expr::parse("1 2"), Err(ExprError::Trailing { .. })));
        assert!(matches!(Expr::parse("2 $ 3"), Err(ExprError::Trailing { .. })));
    }

    #[test]
    fn derivatives_match_hand_results() {
        let e = Expr::parse("sin(x) * y^3 + exp(2*x) / y + sqrt(x) + tan(y) + x^y").unwrap();
        let (x, y) = (0.7f64, 1.3f64);
        let dx = x.cos() * y.powi(3) + 2.0 * (2.0 * x).exp() / y + 0.5 / x.sqrt() + y * x.powf(y - 1.0);
        let dy = 3.0 * x.sin() * y * y - (2.0 * x).exp() / (y * y) + 1.0 / y.cos().powi(2) + x.powf(y) * x.ln();
        assert!((e.derivative(Var::X).eval(x, y) - dx).abs() < 1e-12);
        assert!((e.derivative(Var::Y).eval(x, y) - dy).abs() < 1e-12);
    }

    #[test]
    fn display_reparses_to_same_values() {
        let e = Expr::parse("-(x - 2)^2 / (1 + y) - cos(-x)").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for (x, y) in [(0.1, 0.2), (3.0, -0.5)] {
            assert_eq!(e.eval(x, y), again.eval(x, y));
        }
    }
}
