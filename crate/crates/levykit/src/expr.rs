//! Small closed-form expression trees for coefficients and radial profiles.
//!
//! Variables: `t`, `x` (alias `x1`), `x2`, `y` (alias `y1`), `y2`, and `r`,
//! which is |y| for coefficients and the radius for profiles. Constants
//! `pi` and `e`; functions `sin cos tan exp ln log sqrt abs tanh`.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X1,
    X2,
    Y1,
    Y2,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Evaluation point. `r` is |y| unless set explicitly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub t: f64,
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Env {
    pub fn radius(r: f64) -> Self {
        Env {
            t: 0.0,
            x: [0.0; 2],
            y: [r, 0.0],
        }
    }
}

/// Immutable shared expression with its source text kept for display.
#[derive(Clone)]
pub struct Expr {
    root: Arc<Node>,
    text: Arc<str>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self.text)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let node = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::domain(format!("unexpected trailing input in expression '{src}'")));
        }
        Ok(Expr {
            root: Arc::new(node),
            text: Arc::from(src.trim()),
        })
    }

    pub fn constant(v: f64) -> Self {
        Expr {
            root: Arc::new(Node::Const(v)),
            text: Arc::from(format!("{v}")),
        }
    }

    fn from_node(node: Node) -> Self {
        let text = render(&node);
        Expr {
            root: Arc::new(node),
            text: Arc::from(text),
        }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, env: &Env) -> f64 {
        let r = (env.y[0] * env.y[0] + env.y[1] * env.y[1]).sqrt();
        eval(&self.root, env, r)
    }

    /// Evaluate as a function of a single radius.
    pub fn eval_r(&self, r: f64) -> f64 {
        eval(&self.root, &Env::radius(r), r)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        depends(&self.root, v)
    }

    pub fn depends_on_x(&self) -> bool {
        self.depends_on(Var::X1) || self.depends_on(Var::X2)
    }

    pub fn depends_on_y(&self) -> bool {
        self.depends_on(Var::Y1) || self.depends_on(Var::Y2) || self.depends_on(Var::R)
    }

    /// Depends on y only through |y|.
    pub fn is_radial_in_y(&self) -> bool {
        !(self.depends_on(Var::Y1) || self.depends_on(Var::Y2))
    }

    pub fn constant_value(&self) -> Option<f64> {
        fold(&self.root)
    }

    /// Multiply every occurrence of y (and r) by `scale`.
    pub fn scale_y(&self, scale: f64) -> Self {
        if scale == 1.0 || !self.depends_on_y() {
            return self.clone();
        }
        Expr::from_node(substitute(&self.root, &|v| match v {
            Var::Y1 | Var::Y2 | Var::R => Some(Node::Bin(
                Op::Mul,
                Box::new(Node::Const(scale)),
                Box::new(Node::Var(v)),
            )),
            _ => None,
        }))
    }

    /// Replace y by -y.
    pub fn reflect_y(&self) -> Self {
        if !(self.depends_on(Var::Y1) || self.depends_on(Var::Y2)) {
            return self.clone();
        }
        Expr::from_node(substitute(&self.root, &|v| match v {
            Var::Y1 | Var::Y2 => Some(Node::Neg(Box::new(Node::Var(v)))),
            _ => None,
        }))
    }

    pub fn mul(&self, other: &Expr) -> Self {
        Expr::from_node(Node::Bin(
            Op::Mul,
            Box::new((*self.root).clone()),
            Box::new((*other.root).clone()),
        ))
    }

    /// Split a product into a factor free of y and a factor free of x.
    /// Returns `None` when some factor involves both.
    pub fn split_xy(&self) -> Option<(Expr, Expr)> {
        let mut factors = Vec::new();
        flatten_product(&self.root, &mut factors);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for f in factors {
            let fx = depends(&f, Var::X1) || depends(&f, Var::X2);
            let fy = depends(&f, Var::Y1) || depends(&f, Var::Y2) || depends(&f, Var::R);
            match (fx, fy) {
                (true, true) => return None,
                (true, false) => xs.push(f),
                _ => ys.push(f),
            }
        }
        let join = |v: Vec<Node>| {
            v.into_iter()
                .reduce(|a, b| Node::Bin(Op::Mul, Box::new(a), Box::new(b)))
                .unwrap_or(Node::Const(1.0))
        };
        Some((Expr::from_node(join(xs)), Expr::from_node(join(ys))))
    }
}

fn flatten_product(n: &Node, out: &mut Vec<Node>) {
    match n {
        Node::Bin(Op::Mul, a, b) => {
            flatten_product(a, out);
            flatten_product(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn substitute(n: &Node, f: &dyn Fn(Var) -> Option<Node>) -> Node {
    match n {
        Node::Const(c) => Node::Const(*c),
        Node::Var(v) => f(*v).unwrap_or(Node::Var(*v)),
        Node::Neg(a) => Node::Neg(Box::new(substitute(a, f))),
        Node::Bin(op, a, b) => Node::Bin(*op, Box::new(substitute(a, f)), Box::new(substitute(b, f))),
        Node::Call(func, a) => Node::Call(*func, Box::new(substitute(a, f))),
    }
}

fn eval(n: &Node, env: &Env, r: f64) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(v) => match v {
            Var::T => env.t,
            Var::X1 => env.x[0],
            Var::X2 => env.x[1],
            Var::Y1 => env.y[0],
            Var::Y2 => env.y[1],
            Var::R => r,
        },
        Node::Neg(a) => -eval(a, env, r),
        Node::Bin(op, a, b) => {
            let (u, v) = (eval(a, env, r), eval(b, env, r));
            match op {
                Op::Add => u + v,
                Op::Sub => u - v,
                Op::Mul => u * v,
                Op::Div => u / v,
                Op::Pow => u.powf(v),
            }
        }
        Node::Call(f, a) => {
            let u = eval(a, env, r);
            match f {
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tan => u.tan(),
                Func::Exp => u.exp(),
                Func::Ln => u.ln(),
                Func::Sqrt => u.sqrt(),
                Func::Abs => u.abs(),
                Func::Tanh => u.tanh(),
            }
        }
    }
}

fn depends(n: &Node, v: Var) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var(w) => *w == v,
        Node::Neg(a) | Node::Call(_, a) => depends(a, v),
        Node::Bin(_, a, b) => depends(a, v) || depends(b, v),
    }
}

fn fold(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        Node::Var(_) => None,
        _ => {
            let vars = [Var::T, Var::X1, Var::X2, Var::Y1, Var::Y2, Var::R];
            if vars.iter().any(|v| depends(n, *v)) {
                None
            } else {
                Some(eval(n, &Env::default(), 0.0))
            }
        }
    }
}

fn render(n: &Node) -> String {
    match n {
        Node::Const(c) => format!("{c}"),
        Node::Var(v) => match v {
            Var::T => "t",
            Var::X1 => "x",
            Var::X2 => "x2",
            Var::Y1 => "y",
            Var::Y2 => "y2",
            Var::R => "r",
        }
        .to_string(),
        Node::Neg(a) => format!("(-{})", render(a)),
        Node::Bin(op, a, b) => {
            let s = match op {
                Op::Add => "+",
                Op::Sub => "-",
                Op::Mul => "*",
                Op::Div => "/",
                Op::Pow => "^",
            };
            format!("({}{}{})", render(a), s, render(b))
        }
        Node::Call(f, a) => {
            let name = match f {
                Func::Sin => "sin",
                Func::Cos => "cos",
                Func::Tan => "tan",
                Func::Exp => "exp",
                Func::Ln => "ln",
                Func::Sqrt => "sqrt",
                Func::Abs => "abs",
                Func::Tanh => "tanh",
            };
            format!("{name}({})", render(a))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::domain(format!("bad number '{s}' in expression")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            if c == '*' && i + 1 < chars.len() && chars[i + 1] == '*' {
                out.push(Tok::Sym('^'));
                i += 2;
                continue;
            }
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::domain(format!("unexpected character '{c}' in expression")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Bin(Op::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Bin(Op::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Bin(Op::Mul, Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Bin(Op::Div, Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::domain("missing ')' in expression"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "tan" => Some(Func::Tan),
                    "exp" => Some(Func::Exp),
                    "ln" | "log" => Some(Func::Ln),
                    "sqrt" => Some(Func::Sqrt),
                    "abs" => Some(Func::Abs),
                    "tanh" => Some(Func::Tanh),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat('(') {
                        return Err(Error::domain(format!("expected '(' after {name}")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(Error::domain(format!("missing ')' after {name}(...")));
                    }
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "e" => Ok(Node::Const(std::f64::consts::E)),
                    "t" => Ok(Node::Var(Var::T)),
                    "x" | "x1" => Ok(Node::Var(Var::X1)),
                    "x2" => Ok(Node::Var(Var::X2)),
                    "y" | "y1" => Ok(Node::Var(Var::Y1)),
                    "y2" => Ok(Node::Var(Var::Y2)),
                    "r" => Ok(Node::Var(Var::R)),
                    other => Err(Error::domain(format!("unknown identifier '{other}' in expression"))),
                }
            }
            other => Err(Error::domain(format!("unexpected token {other:?} in expression"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_power() {
        let e = Expr::parse("1 + 2*3^2 - -4/2").unwrap();
        assert_eq!(e.constant_value(), Some(21.0));
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.constant_value(), Some(512.0));
        let e = Expr::parse("-2^2").unwrap();
        assert_eq!(e.constant_value(), Some(-4.0));
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("1 + 0.1*cos(2*pi*x/16)").unwrap();
        let env = Env {
            x: [4.0, 0.0],
            ..Default::default()
        };
        assert!((e.eval(&env) - 1.0).abs() < 1e-15);
        assert!(e.depends_on_x() && !e.depends_on_y());
        let p = Expr::parse("r^0.5*ln(1+r)^0.25").unwrap();
        assert!((p.eval_r(3.0) - 3f64.sqrt() * 4f64.ln().powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn split_and_scale() {
        let e = Expr::parse("(1+0.5*sin(x))*(2+cos(y))*exp(-t)").unwrap();
        let (a, b) = e.split_xy().unwrap();
        let env = Env {
            t: 0.3,
            x: [0.7, 0.0],
            y: [1.1, 0.0],
        };
        assert!((a.eval(&env) * b.eval(&env) - e.eval(&env)).abs() < 1e-14);
        assert!(Expr::parse("sin(x*y)").unwrap().split_xy().is_none());
        let s = Expr::parse("cos(y)").unwrap().scale_y(3.0);
        assert!((s.eval(&env) - (3.3f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 + ").is_err());
        assert!(Expr::parse("foo(2)").is_err());
        assert!(Expr::parse("(1").is_err());
    }
}
