//! Lightweight canonical forms for equivalence checking, with a numeric
//! probe fallback. Not a CAS: no distribution, factoring, or trig
//! identities — those cases fall through to the probe.

use std::cmp::Ordering;

use rand::Rng;

use crate::expr::{evaluate, BinOp, Expr, UnOp};

const CONST_TOL: f64 = 1e-6;

/// Canonical form: subtraction and division are rewritten into `+`/`×`
/// with `-1` factors and `-1` exponents, power-like unaries become `Pow`
/// with a constant exponent, `+`/`×` are flattened n-ary with sorted
/// operands and folded constants.
#[derive(Clone, Debug, PartialEq)]
pub enum Canon {
    Const(f64),
    Var(usize),
    Un(UnOp, Box<Canon>),
    Pow(Box<Canon>, Box<Canon>),
    Add(Vec<Canon>),
    Mul(Vec<Canon>),
}

fn rank(c: &Canon) -> u8 {
    match c {
        Canon::Const(_) => 0,
        Canon::Var(_) => 1,
        Canon::Un(..) => 2,
        Canon::Pow(..) => 3,
        Canon::Add(_) => 4,
        Canon::Mul(_) => 5,
    }
}

fn cmp(a: &Canon, b: &Canon) -> Ordering {
    rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
        (Canon::Const(x), Canon::Const(y)) => x.total_cmp(y),
        (Canon::Var(i), Canon::Var(j)) => i.cmp(j),
        (Canon::Un(o, x), Canon::Un(p, y)) => (*o as u8).cmp(&(*p as u8)).then_with(|| cmp(x, y)),
        (Canon::Pow(bx, ex), Canon::Pow(by, ey)) => cmp(bx, by).then_with(|| cmp(ex, ey)),
        (Canon::Add(xs), Canon::Add(ys)) | (Canon::Mul(xs), Canon::Mul(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                let o = cmp(x, y);
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => unreachable!("ranks matched"),
    })
}

impl Canon {
    /// Structural equality with a relative tolerance on constants.
    pub fn approx_eq(&self, other: &Canon) -> bool {
        match (self, other) {
            (Canon::Const(a), Canon::Const(b)) => {
                (a - b).abs() <= CONST_TOL * 1f64.max(a.abs()).max(b.abs())
            }
            (Canon::Var(i), Canon::Var(j)) => i == j,
            (Canon::Un(o, a), Canon::Un(p, b)) => o == p && a.approx_eq(b),
            (Canon::Pow(ba, ea), Canon::Pow(bb, eb)) => ba.approx_eq(bb) && ea.approx_eq(eb),
            (Canon::Add(xs), Canon::Add(ys)) | (Canon::Mul(xs), Canon::Mul(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.approx_eq(y))
            }
            _ => false,
        }
    }

    /// Back to an expression tree (left-folded n-ary operators).
    pub fn to_expr(&self) -> Expr {
        match self {
            Canon::Const(v) => Expr::Lit(*v),
            Canon::Var(j) => Expr::Var(*j),
            Canon::Un(op, a) => Expr::Un(*op, Box::new(a.to_expr())),
            Canon::Pow(b, e) => Expr::Bin(BinOp::Pow, Box::new(b.to_expr()), Box::new(e.to_expr())),
            Canon::Add(xs) => fold(BinOp::Add, xs),
            Canon::Mul(xs) => fold(BinOp::Mul, xs),
        }
    }
}

fn fold(op: BinOp, xs: &[Canon]) -> Expr {
    let mut it = xs.iter();
    let first = it.next().expect("n-ary node is nonempty").to_expr();
    it.fold(first, |acc, c| Expr::Bin(op, Box::new(acc), Box::new(c.to_expr())))
}

/// Canonicalizes a fully bound tree (no constant placeholders).
pub fn canonicalize(e: &Expr) -> Canon {
    assert_eq!(e.n_slots(), 0, "canonicalize requires bound constants");
    rec(e)
}

fn rec(e: &Expr) -> Canon {
    match e {
        Expr::Lit(v) => Canon::Const(*v),
        Expr::Var(j) => Canon::Var(*j),
        Expr::Slot(_) => unreachable!("checked by canonicalize"),
        Expr::Un(op, a) => unary(*op, rec(a)),
        Expr::Bin(op, a, b) => {
            let (a, b) = (rec(a), rec(b));
            match op {
                BinOp::Add => add(vec![a, b]),
                BinOp::Sub => add(vec![a, mul(vec![Canon::Const(-1.0), b])]),
                BinOp::Mul => mul(vec![a, b]),
                BinOp::Div => mul(vec![a, pow(b, Canon::Const(-1.0))]),
                BinOp::Pow => pow(a, b),
            }
        }
    }
}

fn unary(op: UnOp, a: Canon) -> Canon {
    // power-like unaries unify with the pow operator
    match op {
        UnOp::Sq => return pow(a, Canon::Const(2.0)),
        UnOp::Cube => return pow(a, Canon::Const(3.0)),
        UnOp::Quart => return pow(a, Canon::Const(4.0)),
        UnOp::Sqrt => return pow(a, Canon::Const(0.5)),
        _ => {}
    }
    if let Canon::Const(v) = a {
        let f = match op {
            UnOp::Sin => v.sin(),
            UnOp::Cos => v.cos(),
            UnOp::Exp => v.exp(),
            UnOp::Log => v.ln(),
            UnOp::Abs => v.abs(),
            _ => unreachable!(),
        };
        if f.is_finite() {
            return Canon::Const(f);
        }
    }
    Canon::Un(op, Box::new(a))
}

fn pow(base: Canon, exp: Canon) -> Canon {
    if let (Canon::Const(b), Canon::Const(e)) = (&base, &exp) {
        let f = b.powf(*e);
        if f.is_finite() {
            return Canon::Const(f);
        }
    }
    if let Canon::Const(e) = exp {
        if e == 1.0 {
            return base;
        }
        if e == 0.0 {
            return Canon::Const(1.0);
        }
    }
    Canon::Pow(Box::new(base), Box::new(exp))
}

fn add(parts: Vec<Canon>) -> Canon {
    let mut flat = Vec::new();
    let mut c = 0.0;
    let mut stack = parts;
    while let Some(p) = stack.pop() {
        match p {
            Canon::Add(xs) => stack.extend(xs),
            Canon::Const(v) => c += v,
            other => flat.push(other),
        }
    }
    if c != 0.0 || flat.is_empty() {
        flat.push(Canon::Const(c));
    }
    flat.sort_by(cmp);
    if flat.len() == 1 {
        flat.pop().unwrap()
    } else {
        Canon::Add(flat)
    }
}

fn mul(parts: Vec<Canon>) -> Canon {
    let mut flat = Vec::new();
    let mut c = 1.0;
    let mut stack = parts;
    while let Some(p) = stack.pop() {
        match p {
            Canon::Mul(xs) => stack.extend(xs),
            Canon::Const(v) => c *= v,
            other => flat.push(other),
        }
    }
    if c == 0.0 {
        return Canon::Const(0.0);
    }
    if c != 1.0 || flat.is_empty() {
        flat.push(Canon::Const(c));
    }
    flat.sort_by(cmp);
    if flat.len() == 1 {
        flat.pop().unwrap()
    } else {
        Canon::Mul(flat)
    }
}

/// True if canonical forms match, else a 64-point numeric probe over
/// `[low, high]^m`: equivalent iff every mutually valid point agrees within
/// `1e-9 * (1 + |e1|)` and at least 32 points are valid.
pub fn symbolically_equivalent<R: Rng>(
    e1: &Expr,
    e2: &Expr,
    low: f64,
    high: f64,
    rng: &mut R,
) -> bool {
    if canonicalize(e1).approx_eq(&canonicalize(e2)) {
        return true;
    }
    let m = e1
        .max_var()
        .into_iter()
        .chain(e2.max_var())
        .max()
        .map(|j| j + 1)
        .unwrap_or(1);
    let mut valid = 0;
    for _ in 0..64 {
        let point: Vec<f64> = (0..m).map(|_| rng.gen_range(low..=high)).collect();
        let a = evaluate(e1, std::slice::from_ref(&point), &[]).ok().flatten();
        let b = evaluate(e2, std::slice::from_ref(&point), &[]).ok().flatten();
        match (a, b) {
            (Some(a), Some(b)) => {
                valid += 1;
                if (a[0] - b[0]).abs() > 1e-9 * (1.0 + a[0].abs()) {
                    return false;
                }
            }
            _ => {}
        }
    }
    valid >= 32
}
