//! Symbolic regression by self-learning tree search.
//!
//! Expressions are preorder token sequences over a small grammar. A Monte
//! Carlo tree search proposes the next token at every step, guided by a
//! policy/value sequence model that trains online on the search's own
//! completed episodes. Grammar constraints prune meaningless subtrees, and
//! completed expressions are scored by a normalized-RMSE reward after
//! fitting any constant placeholders with BFGS.
//!
//! ```
//! use symreg_core::expr::{Symbol, Vocabulary, Traversal, build_tree};
//!
//! let vocab = Vocabulary::standard(1, false);
//! let mut t = Traversal::new(10);
//! for sym in [Symbol::Bin(symreg_core::expr::BinOp::Add),
//!             Symbol::Var(0),
//!             Symbol::Var(0)] {
//!     t.push(vocab.find(sym).unwrap()).unwrap();
//! }
//! assert!(t.is_complete());
//! let tree = build_tree(&t).unwrap();
//! assert_eq!(symreg_core::expr::to_infix(&tree, &[]).unwrap(), "(x1 + x1)");
//! ```
//!
//! A minimal end-to-end run:
//!
//! ```
//! use symreg_core::expr::Vocabulary;
//! use symreg_core::selfsearch::{default_model_config, run_search, RunConfig};
//!
//! // y = x^2 on 20 points
//! let x: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
//! let y: Vec<f64> = x.iter().map(|r| r[0] * r[0]).collect();
//!
//! let vocab = Vocabulary::standard(1, false); // one variable, no constant token
//! let cfg = RunConfig { max_episodes: 50, max_length: 8, seed: 0, ..Default::default() };
//! let model_cfg = default_model_config(&vocab, cfg.max_length);
//! let result = run_search(&x, &y, &vocab, &cfg, model_cfg);
//! assert!(result.best_metrics.reward > 0.9);
//! ```

pub mod bench;
pub mod constraints;
pub mod expr;
pub mod guidance;
pub mod mcts;
pub mod objective;
pub mod rng;
pub mod selfsearch;
