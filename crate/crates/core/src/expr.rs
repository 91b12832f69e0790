//! Small arithmetic expression language for initial data and sources.
//!
//! Grammar (usual precedence, `^` right associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables: `x`, `y`, `t`, `pi`, `e`, `theta_c`. Functions: `cos`, `sin`,
//! `exp`, `tanh`, `abs`, `sqrt`, `log`, `step` (Heaviside, `step(0) = 1`),
//! `min`, `max`.

use std::fmt;

use crate::error::{CryoError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vars {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub theta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    X,
    Y,
    T,
    ThetaC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Cos,
    Sin,
    Exp,
    Tanh,
    Abs,
    Sqrt,
    Log,
    Step,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "cos" => (Func::Cos, 1),
            "sin" => (Func::Sin, 1),
            "exp" => (Func::Exp, 1),
            "tanh" => (Func::Tanh, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "log" => (Func::Log, 1),
            "step" => (Func::Step, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut p = Parser {
            src: source,
            bytes: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &Vars) -> f64 {
        eval(&self.root, vars)
    }

    /// True when the expression does not reference `t`.
    pub fn is_time_independent(&self) -> bool {
        !mentions(&self.root, Var::T)
    }
}

fn mentions(node: &Node, var: Var) -> bool {
    match node {
        Node::Num(_) => false,
        Node::Var(v) => *v == var,
        Node::Neg(a) => mentions(a, var),
        Node::Bin(_, a, b) => mentions(a, var) || mentions(b, var),
        Node::Call(_, args) => args.iter().any(|a| mentions(a, var)),
    }
}

fn eval(node: &Node, v: &Vars) -> f64 {
    match node {
        Node::Num(c) => *c,
        Node::Var(Var::X) => v.x,
        Node::Var(Var::Y) => v.y,
        Node::Var(Var::T) => v.t,
        Node::Var(Var::ThetaC) => v.theta_c,
        Node::Neg(a) => -eval(a, v),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, v), eval(b, v));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                '^' => a.powf(b),
                _ => unreachable!(),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], v);
            match f {
                Func::Cos => a.cos(),
                Func::Sin => a.sin(),
                Func::Exp => a.exp(),
                Func::Tanh => a.tanh(),
                Func::Abs => a.abs(),
                Func::Sqrt => a.sqrt(),
                Func::Log => a.ln(),
                Func::Step => {
                    if a >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Func::Min => a.min(eval(&args[1], v)),
                Func::Max => a.max(eval(&args[1], v)),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> CryoError {
        CryoError::Config(format!(
            "expression {:?}, column {}: {msg}",
            self.src,
            self.pos + 1
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => '+',
                Some(b'-') => '-',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => '*',
                Some(b'/') => '/',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(c) => Err(self.error(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error(&format!("malformed number '{text}'")))
    }

    fn name(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let (func, arity) = Func::lookup(name)
                .ok_or_else(|| self.error(&format!("unknown function '{name}'")))?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.error("expected ')' after arguments"));
            }
            if args.len() != arity {
                return Err(self.error(&format!(
                    "{name} takes {arity} argument(s), got {}",
                    args.len()
                )));
            }
            return Ok(Node::Call(func, args));
        }
        Ok(match name {
            "x" => Node::Var(Var::X),
            "y" => Node::Var(Var::Y),
            "t" => Node::Var(Var::T),
            "theta_c" => Node::Var(Var::ThetaC),
            "pi" => Node::Num(std::f64::consts::PI),
            "e" => Node::Num(std::f64::consts::E),
            _ => return Err(self.error(&format!("unknown variable '{name}'"))),
        })
    }
}
