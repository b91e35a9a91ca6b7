//! Token vocabulary, preorder-traversal state, expression trees and evaluation.
//!
//! An expression is represented two ways: as a flat preorder sequence of
//! [`Token`]s (the search state, see [`Traversal`]) and as a recursive
//! [`Expr`] tree built from a complete traversal.  The traversal carries a
//! live completeness counter `1 + sum(arity - 1)` which hits zero exactly
//! when the sequence encodes one complete tree.
//!
//! ```
//! use symreg_core::expr::{build_tree, to_infix, BinOp, Symbol, Traversal, UnOp, Vocabulary};
//!
//! let vocab = Vocabulary::standard(1, false);
//! let mut t = Traversal::new(10);
//! assert_eq!(t.counter(), 1);
//!
//! let x1 = Symbol::Var(0);
//! for sym in [Symbol::Bin(BinOp::Add), Symbol::Un(UnOp::Sin), x1, Symbol::Bin(BinOp::Mul), x1, x1] {
//!     t.push(vocab.find(sym).unwrap()).unwrap();
//! }
//! assert_eq!(t.counter(), 0);
//! assert!(t.is_complete());
//!
//! let tree = build_tree(&t).unwrap();
//! assert_eq!(to_infix(&tree, &[]).unwrap(), "(sin(x1) + (x1 * x1))");
//! ```

use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
    /// Square via a dedicated unary token (`•^2` in some benchmark libraries).
    Sq,
    Cube,
    Quart,
    /// Absolute value. Appears in benchmark targets only, never in a search
    /// vocabulary.
    Abs,
}

/// Semantic tag of a token. `Lit` covers fixed numeric tokens some benchmark
/// libraries add (e.g. the literal `1`); `Const` is the fitted placeholder.
#[derive(Clone, Copy, Debug)]
pub enum Symbol {
    Bin(BinOp),
    Un(UnOp),
    Var(usize),
    Const,
    Lit(f64),
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Symbol::Bin(a), Symbol::Bin(b)) => a == b,
            (Symbol::Un(a), Symbol::Un(b)) => a == b,
            (Symbol::Var(a), Symbol::Var(b)) => a == b,
            (Symbol::Const, Symbol::Const) => true,
            (Symbol::Lit(a), Symbol::Lit(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}
impl Eq for Symbol {}

impl std::hash::Hash for Symbol {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Symbol::Bin(b) => (0u8, *b as u8).hash(state),
            Symbol::Un(u) => (1u8, *u as u8).hash(state),
            Symbol::Var(j) => (2u8, *j).hash(state),
            Symbol::Const => 3u8.hash(state),
            Symbol::Lit(v) => (4u8, v.to_bits()).hash(state),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Binary,
    Unary,
    Variable,
    ConstPlaceholder,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: usize,
    pub symbol: Symbol,
}

impl Token {
    pub fn kind(&self) -> TokenKind {
        match self.symbol {
            Symbol::Bin(_) => TokenKind::Binary,
            Symbol::Un(_) => TokenKind::Unary,
            Symbol::Var(_) => TokenKind::Variable,
            Symbol::Const => TokenKind::ConstPlaceholder,
            Symbol::Lit(_) => TokenKind::Literal,
        }
    }
}

/// Arity of a token: 2 for binary operators, 1 for unary, 0 for terminals.
pub fn arity(token: Token) -> usize {
    match token.kind() {
        TokenKind::Binary => 2,
        TokenKind::Unary => 1,
        _ => 0,
    }
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("cannot push onto a complete traversal")]
    PushOnComplete,
    #[error("traversal is at its maximum length {0}")]
    PushPastMaxLength(usize),
    #[error("traversal is incomplete (counter {0})")]
    Incomplete(u32),
    #[error("parent/sibling undefined for a complete traversal")]
    ParentSiblingOnComplete,
    #[error("expected {expected} constants, got {got}")]
    ConstantCount { expected: usize, got: usize },
    #[error("token id {0} is not in the vocabulary")]
    UnknownTokenId(usize),
    #[error("duplicate symbol in vocabulary: {0:?}")]
    DuplicateSymbol(Symbol),
    #[error("vocabulary may contain at most one constant placeholder")]
    DuplicateConst,
}

/// Ordered token library. Ids are assigned 0..len-1 in order.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    n_variables: usize,
}

impl Vocabulary {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self, ExprError> {
        let mut seen = std::collections::HashSet::new();
        let mut consts = 0;
        for s in &symbols {
            if !seen.insert(*s) {
                return Err(ExprError::DuplicateSymbol(*s));
            }
            if matches!(s, Symbol::Const) {
                consts += 1;
            }
        }
        if consts > 1 {
            return Err(ExprError::DuplicateConst);
        }
        let n_variables = symbols
            .iter()
            .filter_map(|s| match s {
                Symbol::Var(j) => Some(j + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let tokens = symbols
            .into_iter()
            .enumerate()
            .map(|(id, symbol)| Token { id, symbol })
            .collect();
        Ok(Self { tokens, n_variables })
    }

    /// The standard library: five binary operators, five unary operators,
    /// `n_vars` variables and optionally the constant placeholder.
    pub fn standard(n_vars: usize, with_const: bool) -> Self {
        let mut syms = vec![
            Symbol::Bin(BinOp::Add),
            Symbol::Bin(BinOp::Sub),
            Symbol::Bin(BinOp::Mul),
            Symbol::Bin(BinOp::Div),
            Symbol::Bin(BinOp::Pow),
            Symbol::Un(UnOp::Sin),
            Symbol::Un(UnOp::Cos),
            Symbol::Un(UnOp::Exp),
            Symbol::Un(UnOp::Sqrt),
            Symbol::Un(UnOp::Log),
        ];
        for j in 0..n_vars {
            syms.push(Symbol::Var(j));
        }
        if with_const {
            syms.push(Symbol::Const);
        }
        Vocabulary::new(syms).expect("standard library is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_variables(&self) -> usize {
        self.n_variables
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Result<Token, ExprError> {
        self.tokens.get(id).copied().ok_or(ExprError::UnknownTokenId(id))
    }

    pub fn find(&self, symbol: Symbol) -> Option<Token> {
        self.tokens.iter().copied().find(|t| t.symbol == symbol)
    }
}

/// A partial preorder token sequence with its live completeness counter.
#[derive(Clone, Debug)]
pub struct Traversal {
    tokens: Vec<Token>,
    counter: u32,
    max_length: usize,
}

impl Traversal {
    pub fn new(max_length: usize) -> Self {
        Self { tokens: Vec::new(), counter: 1, max_length }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    /// Token ids in order; the wire form used by guidance and persistence.
    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    pub fn from_ids(ids: &[usize], vocab: &Vocabulary, max_length: usize) -> Result<Self, ExprError> {
        let mut t = Traversal::new(max_length);
        for &id in ids {
            t.push(vocab.token(id)?)?;
        }
        Ok(t)
    }

    /// True iff the counter is 0 and at least one token has been pushed.
    pub fn is_complete(&self) -> bool {
        self.counter == 0 && !self.tokens.is_empty()
    }

    /// Appends a token, updating `counter += arity - 1`.
    pub fn push(&mut self, token: Token) -> Result<(), ExprError> {
        if self.is_complete() {
            return Err(ExprError::PushOnComplete);
        }
        if self.tokens.len() >= self.max_length {
            return Err(ExprError::PushPastMaxLength(self.max_length));
        }
        self.counter = self.counter + arity(token) as u32 - 1;
        self.tokens.push(token);
        Ok(())
    }

    pub fn pushed(&self, token: Token) -> Result<Self, ExprError> {
        let mut next = self.clone();
        next.push(token)?;
        Ok(next)
    }

    /// Chain of ancestors of the next empty slot, outermost first, each with
    /// the number of its still-unfilled child slots.
    pub fn open_ancestors(&self) -> Vec<(Token, usize)> {
        let mut stack: Vec<(Token, usize)> = Vec::new();
        for &t in &self.tokens {
            let a = arity(t);
            if a > 0 {
                stack.push((t, a));
            } else {
                // a completed leaf closes ancestors whose slots are exhausted
                let mut done = true;
                while done {
                    match stack.last_mut() {
                        Some(top) => {
                            top.1 -= 1;
                            if top.1 == 0 {
                                stack.pop();
                            } else {
                                done = false;
                            }
                        }
                        None => done = false,
                    }
                }
            }
        }
        stack
    }

    /// Parent and left sibling of the next token to be generated.
    ///
    /// If the last token has arity > 0 it is itself the parent and there is
    /// no sibling; otherwise scan backward accumulating `arity - 1` until the
    /// partial subtree closes, giving the parent and its first child.
    pub fn parent_sibling(&self) -> Result<(Option<Token>, Option<Token>), ExprError> {
        if self.is_complete() {
            return Err(ExprError::ParentSiblingOnComplete);
        }
        let n = self.tokens.len();
        if n == 0 {
            return Ok((None, None));
        }
        let last = self.tokens[n - 1];
        if arity(last) > 0 {
            return Ok((Some(last), None));
        }
        let mut counter: i64 = 0;
        for i in (0..n).rev() {
            counter += arity(self.tokens[i]) as i64 - 1;
            if counter == 0 {
                return Ok((Some(self.tokens[i]), Some(self.tokens[i + 1])));
            }
        }
        Ok((None, None))
    }
}

/// Expression tree. `Slot(k)` is the k-th constant placeholder in preorder;
/// `Lit` is a bound numeric literal.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Un(UnOp, Box<Expr>),
    Var(usize),
    Slot(usize),
    Lit(f64),
}

impl Expr {
    pub fn n_slots(&self) -> usize {
        match self {
            Expr::Bin(_, a, b) => a.n_slots() + b.n_slots(),
            Expr::Un(_, a) => a.n_slots(),
            Expr::Slot(_) => 1,
            _ => 0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Expr::Bin(_, a, b) => 1 + a.n_nodes() + b.n_nodes(),
            Expr::Un(_, a) => 1 + a.n_nodes(),
            _ => 1,
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Bin(_, a, b) => a.max_var().iter().chain(b.max_var().iter()).copied().max(),
            Expr::Un(_, a) => a.max_var(),
            Expr::Var(j) => Some(*j),
            _ => None,
        }
    }

    /// Replaces constant slots by literal values.
    pub fn bind(&self, constants: &[f64]) -> Expr {
        match self {
            Expr::Bin(op, a, b) => {
                Expr::Bin(*op, Box::new(a.bind(constants)), Box::new(b.bind(constants)))
            }
            Expr::Un(op, a) => Expr::Un(*op, Box::new(a.bind(constants))),
            Expr::Slot(k) => Expr::Lit(constants[*k]),
            other => other.clone(),
        }
    }
}

/// True iff any node of the tree is the variable `x_{j+1}`.
pub fn contains_variable(tree: &Expr, j: usize) -> bool {
    match tree {
        Expr::Bin(_, a, b) => contains_variable(a, j) || contains_variable(b, j),
        Expr::Un(_, a) => contains_variable(a, j),
        Expr::Var(v) => *v == j,
        _ => false,
    }
}

/// Builds the unique tree whose preorder serialization equals the traversal.
/// Constant slots are numbered in preorder.
pub fn build_tree(traversal: &Traversal) -> Result<Expr, ExprError> {
    if !traversal.is_complete() {
        return Err(ExprError::Incomplete(traversal.counter()));
    }
    let mut pos = 0usize;
    let mut next_slot = 0usize;
    let expr = build_rec(traversal.tokens(), &mut pos, &mut next_slot);
    debug_assert_eq!(pos, traversal.len());
    Ok(expr)
}

fn build_rec(tokens: &[Token], pos: &mut usize, next_slot: &mut usize) -> Expr {
    let t = tokens[*pos];
    *pos += 1;
    match t.symbol {
        Symbol::Bin(op) => {
            let a = build_rec(tokens, pos, next_slot);
            let b = build_rec(tokens, pos, next_slot);
            Expr::Bin(op, Box::new(a), Box::new(b))
        }
        Symbol::Un(op) => Expr::Un(op, Box::new(build_rec(tokens, pos, next_slot))),
        Symbol::Var(j) => Expr::Var(j),
        Symbol::Const => {
            let k = *next_slot;
            *next_slot += 1;
            Expr::Slot(k)
        }
        Symbol::Lit(v) => Expr::Lit(v),
    }
}

/// Preorder token sequence of a tree under the given vocabulary. Inverse of
/// [`build_tree`] for trees produced from that vocabulary.
pub fn serialize(tree: &Expr, vocab: &Vocabulary, out: &mut Vec<Token>) -> Result<(), ExprError> {
    let sym = match tree {
        Expr::Bin(op, _, _) => Symbol::Bin(*op),
        Expr::Un(op, _) => Symbol::Un(*op),
        Expr::Var(j) => Symbol::Var(*j),
        Expr::Slot(_) => Symbol::Const,
        Expr::Lit(v) => Symbol::Lit(*v),
    };
    let token = vocab.find(sym).ok_or(ExprError::UnknownTokenId(usize::MAX))?;
    out.push(token);
    match tree {
        Expr::Bin(_, a, b) => {
            serialize(a, vocab, out)?;
            serialize(b, vocab, out)?;
        }
        Expr::Un(_, a) => serialize(a, vocab, out)?,
        _ => {}
    }
    Ok(())
}

/// Elementwise evaluation over the rows of `x`. Any non-finite intermediate
/// (log of a non-positive value, division by zero, overflow, a negative base
/// raised to a fractional power) invalidates the whole evaluation.
pub fn evaluate(tree: &Expr, x: &[Vec<f64>], constants: &[f64]) -> Result<Option<Vec<f64>>, ExprError> {
    let k = tree.n_slots();
    if constants.len() != k {
        return Err(ExprError::ConstantCount { expected: k, got: constants.len() });
    }
    Ok(eval_rec(tree, x, constants))
}

fn eval_rec(tree: &Expr, x: &[Vec<f64>], constants: &[f64]) -> Option<Vec<f64>> {
    let out = match tree {
        Expr::Bin(op, a, b) => {
            let va = eval_rec(a, x, constants)?;
            let vb = eval_rec(b, x, constants)?;
            let f: fn(f64, f64) -> f64 = match op {
                BinOp::Add => |a, b| a + b,
                BinOp::Sub => |a, b| a - b,
                BinOp::Mul => |a, b| a * b,
                BinOp::Div => |a, b| a / b,
                BinOp::Pow => f64::powf,
            };
            va.iter().zip(&vb).map(|(&a, &b)| f(a, b)).collect::<Vec<_>>()
        }
        Expr::Un(op, a) => {
            let va = eval_rec(a, x, constants)?;
            let f: fn(f64) -> f64 = match op {
                UnOp::Sin => f64::sin,
                UnOp::Cos => f64::cos,
                UnOp::Exp => f64::exp,
                UnOp::Sqrt => f64::sqrt,
                UnOp::Log => f64::ln,
                UnOp::Sq => |v| v * v,
                UnOp::Cube => |v| v * v * v,
                UnOp::Quart => |v| (v * v) * (v * v),
                UnOp::Abs => f64::abs,
            };
            va.iter().map(|&v| f(v)).collect()
        }
        Expr::Var(j) => x.iter().map(|row| row.get(*j).copied().unwrap_or(f64::NAN)).collect(),
        Expr::Slot(k) => vec![constants[*k]; x.len()],
        Expr::Lit(v) => vec![*v; x.len()],
    };
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Fully parenthesized infix rendering, round-trippable by the benchmark
/// parser. Constants use shortest round-trip decimal formatting.
pub fn to_infix(tree: &Expr, constants: &[f64]) -> Result<String, ExprError> {
    let k = tree.n_slots();
    if constants.len() != k {
        return Err(ExprError::ConstantCount { expected: k, got: constants.len() });
    }
    let mut s = String::new();
    infix_rec(tree, constants, &mut s);
    Ok(s)
}

fn infix_rec(tree: &Expr, constants: &[f64], out: &mut String) {
    use fmt::Write;
    match tree {
        Expr::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            out.push('(');
            infix_rec(a, constants, out);
            let _ = write!(out, " {sym} ");
            infix_rec(b, constants, out);
            out.push(')');
        }
        Expr::Un(op, a) => match op {
            UnOp::Sq | UnOp::Cube | UnOp::Quart => {
                let e = match op {
                    UnOp::Sq => 2,
                    UnOp::Cube => 3,
                    _ => 4,
                };
                out.push('(');
                infix_rec(a, constants, out);
                let _ = write!(out, " ^ {e})");
            }
            _ => {
                let name = match op {
                    UnOp::Sin => "sin",
                    UnOp::Cos => "cos",
                    UnOp::Exp => "exp",
                    UnOp::Sqrt => "sqrt",
                    UnOp::Log => "log",
                    UnOp::Abs => "abs",
                    _ => unreachable!(),
                };
                let _ = write!(out, "{name}(");
                infix_rec(a, constants, out);
                out.push(')');
            }
        },
        Expr::Var(j) => {
            let _ = write!(out, "x{}", j + 1);
        }
        Expr::Slot(k) => {
            let _ = write!(out, "{}", constants[*k]);
        }
        Expr::Lit(v) => {
            let _ = write!(out, "{v}");
        }
    }
}
