//! Legality masking of candidate tokens for a partial traversal.
//!
//! Four rule families: inverse functions may not stack (`exp(log(x))`),
//! trigonometric functions may not nest, `sin`/`cos` may not sit directly
//! under `log` or `sqrt`, and a feasibility bound guarantees the expression
//! can still complete within the length limit.
//!
//! ```
//! use symreg_core::constraints::{apply_mask, legal_mask, ConstraintConfig};
//! use symreg_core::expr::{Symbol, Traversal, UnOp, Vocabulary};
//!
//! let vocab = Vocabulary::standard(1, false);
//! let cfg = ConstraintConfig::default();
//!
//! let mut t = Traversal::new(10);
//! t.push(vocab.find(Symbol::Un(UnOp::Sin)).unwrap()).unwrap();
//!
//! let mask = legal_mask(&t, &vocab, &cfg);
//! let cos = vocab.find(Symbol::Un(UnOp::Cos)).unwrap();
//! assert!(!mask[cos.id]); // no trig under trig
//!
//! // renormalize a distribution onto the legal set
//! let uniform = vec![1.0 / vocab.len() as f64; vocab.len()];
//! let pi = apply_mask(&uniform, &mask);
//! assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
//! assert_eq!(pi[cos.id], 0.0);
//! ```

use serde::{Deserialize, Serialize};

use crate::expr::{arity, Symbol, Traversal, UnOp, Vocabulary};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    pub max_length: usize,
    pub forbid_inverse_chain: bool,
    pub forbid_nested_trig: bool,
    /// When true the trig-nesting rule looks at every open ancestor; when
    /// false only at the immediate pending parent.
    pub trig_rule_any_ancestor: bool,
    pub forbid_negative_into_log_sqrt: bool,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            max_length: 30,
            forbid_inverse_chain: true,
            forbid_nested_trig: true,
            trig_rule_any_ancestor: true,
            forbid_negative_into_log_sqrt: true,
        }
    }
}

fn is_trig(s: Symbol) -> bool {
    matches!(s, Symbol::Un(UnOp::Sin) | Symbol::Un(UnOp::Cos))
}

/// Unordered inverse pairs: (exp, log) and (sqrt, square) when the library
/// has a dedicated square token.
fn inverse_of(s: Symbol) -> Option<UnOp> {
    match s {
        Symbol::Un(UnOp::Exp) => Some(UnOp::Log),
        Symbol::Un(UnOp::Log) => Some(UnOp::Exp),
        Symbol::Un(UnOp::Sqrt) => Some(UnOp::Sq),
        Symbol::Un(UnOp::Sq) => Some(UnOp::Sqrt),
        _ => None,
    }
}

/// Boolean mask over the vocabulary: `mask[t.id] == true` iff `t` may be
/// pushed next. Never all-false for an incomplete traversal with
/// `len < max_length`: arity-0 tokens always satisfy the feasibility bound.
pub fn legal_mask(traversal: &Traversal, vocab: &Vocabulary, cfg: &ConstraintConfig) -> Vec<bool> {
    assert!(!traversal.is_complete(), "legal_mask on a complete traversal");
    let ancestors = traversal.open_ancestors();
    let parent = ancestors.last().map(|(t, _)| *t);
    let trig_ancestor = if cfg.trig_rule_any_ancestor {
        ancestors.iter().any(|(t, _)| is_trig(t.symbol))
    } else {
        parent.map(|t| is_trig(t.symbol)).unwrap_or(false)
    };

    let len = traversal.len();
    let counter = traversal.counter() as i64;
    let budget = cfg.max_length as i64 - (len as i64 + 1);

    vocab
        .tokens()
        .iter()
        .map(|&t| {
            if len >= cfg.max_length {
                return false;
            }
            let counter_after = counter + arity(t) as i64 - 1;
            if counter_after > budget {
                return false;
            }
            if cfg.forbid_inverse_chain {
                if let Some(p) = parent {
                    if let Some(inv) = inverse_of(p.symbol) {
                        if t.symbol == Symbol::Un(inv) {
                            return false;
                        }
                    }
                }
            }
            if cfg.forbid_nested_trig && trig_ancestor && is_trig(t.symbol) {
                return false;
            }
            if cfg.forbid_negative_into_log_sqrt {
                if let Some(p) = parent {
                    if matches!(p.symbol, Symbol::Un(UnOp::Log) | Symbol::Un(UnOp::Sqrt))
                        && is_trig(t.symbol)
                    {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// Zeroes masked-out entries and renormalizes. If every masked-in entry has
/// probability zero the result is uniform over the masked-in entries.
pub fn apply_mask(probs: &[f64], mask: &[bool]) -> Vec<f64> {
    assert_eq!(probs.len(), mask.len());
    let n_in = mask.iter().filter(|&&m| m).count();
    assert!(n_in > 0, "apply_mask with an all-false mask");
    let mut out: Vec<f64> = probs
        .iter()
        .zip(mask)
        .map(|(&p, &m)| if m { p } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        for v in &mut out {
            *v /= sum;
        }
    } else {
        let u = 1.0 / n_in as f64;
        for (v, &m) in out.iter_mut().zip(mask) {
            *v = if m { u } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinOp;

    fn push(t: &mut Traversal, v: &Vocabulary, s: Symbol) {
        t.push(v.find(s).unwrap()).unwrap();
    }

    #[test]
    fn log_after_exp_masked() {
        let v = Vocabulary::standard(1, false);
        let cfg = ConstraintConfig::default();
        let mut t = Traversal::new(30);
        push(&mut t, &v, Symbol::Un(UnOp::Exp));
        let mask = legal_mask(&t, &v, &cfg);
        assert!(!mask[v.find(Symbol::Un(UnOp::Log)).unwrap().id]);
        assert!(mask[v.find(Symbol::Un(UnOp::Sin)).unwrap().id]);
    }

    #[test]
    fn exp_after_log_masked() {
        let v = Vocabulary::standard(1, false);
        let cfg = ConstraintConfig::default();
        let mut t = Traversal::new(30);
        push(&mut t, &v, Symbol::Un(UnOp::Log));
        let mask = legal_mask(&t, &v, &cfg);
        assert!(!mask[v.find(Symbol::Un(UnOp::Exp)).unwrap().id]);
    }

    #[test]
    fn trig_masked_anywhere_inside_trig() {
        let v = Vocabulary::standard(1, false);
        let cfg = ConstraintConfig::default();
        let mut t = Traversal::new(30);
        push(&mut t, &v, Symbol::Un(UnOp::Sin));
        push(&mut t, &v, Symbol::Bin(BinOp::Add));
        push(&mut t, &v, Symbol::Var(0));
        // pending slot is the second child of `+`, still inside sin
        let mask = legal_mask(&t, &v, &cfg);
        assert!(!mask[v.find(Symbol::Un(UnOp::Sin)).unwrap().id]);
        assert!(!mask[v.find(Symbol::Un(UnOp::Cos)).unwrap().id]);
        assert!(mask[v.find(Symbol::Un(UnOp::Exp)).unwrap().id]);
    }

    #[test]
    fn trig_not_allowed_under_log_or_sqrt() {
        let v = Vocabulary::standard(1, false);
        let cfg = ConstraintConfig::default();
        for outer in [UnOp::Log, UnOp::Sqrt] {
            let mut t = Traversal::new(30);
            push(&mut t, &v, Symbol::Un(outer));
            let mask = legal_mask(&t, &v, &cfg);
            assert!(!mask[v.find(Symbol::Un(UnOp::Sin)).unwrap().id]);
            assert!(!mask[v.find(Symbol::Un(UnOp::Cos)).unwrap().id]);
        }
    }

    #[test]
    fn feasibility_forces_terminals_near_the_limit() {
        let v = Vocabulary::standard(1, false);
        let cfg = ConstraintConfig { max_length: 3, ..Default::default() };
        let mut t = Traversal::new(3);
        push(&mut t, &v, Symbol::Bin(BinOp::Add));
        // len 2 remaining, counter 2: only terminals can keep completion possible
        let mask = legal_mask(&t, &v, &cfg);
        for tok in v.tokens() {
            let legal = mask[tok.id];
            assert_eq!(legal, arity(*tok) == 0, "token {:?}", tok.symbol);
        }
    }

    #[test]
    fn apply_mask_examples() {
        let out = apply_mask(&[0.5, 0.5], &[true, false]);
        assert_eq!(out, vec![1.0, 0.0]);

        let out = apply_mask(&[0.25; 4], &[true, true, false, false]);
        assert_eq!(out, vec![0.5, 0.5, 0.0, 0.0]);

        // all masked-in entries zero: uniform fallback
        let out = apply_mask(&[0.0, 0.0, 1.0], &[true, true, false]);
        assert_eq!(out, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn mask_never_empty() {
        let v = Vocabulary::standard(2, true);
        let cfg = ConstraintConfig::default();
        let mut t = Traversal::new(30);
        push(&mut t, &v, Symbol::Un(UnOp::Log));
        push(&mut t, &v, Symbol::Un(UnOp::Sqrt));
        let mask = legal_mask(&t, &v, &cfg);
        assert!(mask.iter().any(|&m| m));
    }
}
