//! The shipped benchmark roster and its token libraries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::parser::{parse_infix, ParseError};
use crate::expr::{BinOp, Expr, Symbol, UnOp, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    /// Independent uniform draws per variable.
    U,
    /// Evenly spaced inclusive grid per variable.
    E,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub kind: SampleKind,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// One registry record. `library_extensions` adjusts the base search
/// library per the benchmark's table row: extra variables (`x2`..), the
/// fitted constant (`const`), the power operator (`pow`), power-unaries
/// (`sq`, `cube`, `quart`), fixed literals (`1`, `-1`), and `no_log` to
/// drop the logarithm. `tan`/`tanh` mark the row as unsupported.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub infix: String,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub library_extensions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("bad registry JSON: {0}")]
    BadJson(String),
    #[error("benchmark {0:?} not found")]
    UnknownBenchmark(String),
    #[error("suite {0:?} not found; available: {1}")]
    UnknownSuite(String, String),
    #[error("benchmark {0:?}: {1}")]
    BadTarget(String, ParseError),
    #[error("invalid sampling for {0:?}: need count >= 2 and low < high")]
    BadSampling(String),
}

impl Benchmark {
    pub fn suite(&self) -> String {
        self.name.split('-').next().unwrap_or(&self.name).to_ascii_lowercase()
    }

    /// Rows needing operators outside the grammar (tan/tanh) are listed
    /// but cannot be parsed, sampled, or searched.
    pub fn supported(&self) -> bool {
        !self.library_extensions.iter().any(|e| e == "tan" || e == "tanh")
    }

    pub fn target(&self) -> Result<Expr, RegistryError> {
        parse_infix(&self.infix).map_err(|e| RegistryError::BadTarget(self.name.clone(), e))
    }

    /// Number of input columns, from the target's highest variable.
    pub fn n_vars(&self) -> Result<usize, RegistryError> {
        Ok(self.target()?.max_var().map(|j| j + 1).unwrap_or(1))
    }

    /// The search library for this row: base
    /// `{+,-,*,/,sin,cos,exp,sqrt,log,x1}` adjusted by the extensions.
    pub fn vocabulary(&self) -> Result<Vocabulary, RegistryError> {
        let mut syms = vec![
            Symbol::Bin(BinOp::Add),
            Symbol::Bin(BinOp::Sub),
            Symbol::Bin(BinOp::Mul),
            Symbol::Bin(BinOp::Div),
            Symbol::Un(UnOp::Sin),
            Symbol::Un(UnOp::Cos),
            Symbol::Un(UnOp::Exp),
            Symbol::Un(UnOp::Sqrt),
            Symbol::Un(UnOp::Log),
            Symbol::Var(0),
        ];
        for ext in &self.library_extensions {
            match ext.as_str() {
                "no_log" => syms.retain(|s| *s != Symbol::Un(UnOp::Log)),
                "const" => syms.push(Symbol::Const),
                "pow" => syms.push(Symbol::Bin(BinOp::Pow)),
                "sq" => syms.push(Symbol::Un(UnOp::Sq)),
                "cube" => syms.push(Symbol::Un(UnOp::Cube)),
                "quart" => syms.push(Symbol::Un(UnOp::Quart)),
                "1" => syms.push(Symbol::Lit(1.0)),
                "-1" => syms.push(Symbol::Lit(-1.0)),
                "tan" | "tanh" => {} // unsupported row; no corresponding token
                v if v.starts_with('x') => {
                    let k: usize = v[1..]
                        .parse()
                        .map_err(|_| RegistryError::BadJson(format!("bad extension {v:?}")))?;
                    syms.push(Symbol::Var(k - 1));
                }
                other => {
                    return Err(RegistryError::BadJson(format!("bad extension {other:?}")));
                }
            }
        }
        // every target variable must be a sampled column even when the
        // printed library omits it
        for j in 0..self.n_vars()? {
            if !syms.contains(&Symbol::Var(j)) {
                syms.push(Symbol::Var(j));
            }
        }
        Vocabulary::new(syms).map_err(|e| RegistryError::BadJson(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct Registry {
    benchmarks: Vec<Benchmark>,
}

const BUILTIN: &str = include_str!("../../data/registry.json");

/// Named suites that are not simple name prefixes.
const CONSTANT_SUITE: [&str; 8] = [
    "Nguyen-1c",
    "Nguyen-5c",
    "Nguyen-7c",
    "Nguyen-8c",
    "Nguyen-10c",
    "Const-Test-1",
    "Test-2",
    "GrammarVAE-1",
];

const NGUYEN_MINI: [&str; 3] = ["Nguyen-1", "Nguyen-6", "Nguyen-8"];

impl Registry {
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let benchmarks: Vec<Benchmark> =
            serde_json::from_str(text).map_err(|e| RegistryError::BadJson(e.to_string()))?;
        for b in &benchmarks {
            if b.sampling.count < 2 || b.sampling.low >= b.sampling.high {
                return Err(RegistryError::BadSampling(b.name.clone()));
            }
            if b.supported() {
                b.target()?;
                b.vocabulary()?;
            }
        }
        Ok(Self { benchmarks })
    }

    pub fn all(&self) -> &[Benchmark] {
        &self.benchmarks
    }

    pub fn get(&self, name: &str) -> Result<&Benchmark, RegistryError> {
        self.benchmarks
            .iter()
            .find(|b| b.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| RegistryError::UnknownBenchmark(name.to_string()))
    }

    pub fn suites(&self) -> Vec<String> {
        let mut out: Vec<String> = self.benchmarks.iter().map(|b| b.suite()).collect();
        out.push("constant".into());
        out.push("nguyen-mini".into());
        out.sort();
        out.dedup();
        out
    }

    pub fn suite(&self, name: &str) -> Result<Vec<&Benchmark>, RegistryError> {
        let lower = name.to_ascii_lowercase();
        let picks: Vec<&Benchmark> = match lower.as_str() {
            "constant" => CONSTANT_SUITE.iter().map(|n| self.get(n)).collect::<Result<_, _>>()?,
            "nguyen-mini" => NGUYEN_MINI.iter().map(|n| self.get(n)).collect::<Result<_, _>>()?,
            _ => self.benchmarks.iter().filter(|b| b.suite() == lower).collect(),
        };
        if picks.is_empty() {
            return Err(RegistryError::UnknownSuite(name.to_string(), self.suites().join(", ")));
        }
        Ok(picks)
    }
}

/// The registry shipped with the crate.
pub fn registry() -> Registry {
    Registry::from_json(BUILTIN).expect("builtin registry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads_and_counts() {
        let reg = registry();
        assert_eq!(reg.suite("nguyen").unwrap().len(), 21);
        assert_eq!(reg.suite("keijzer").unwrap().len(), 15);
        assert_eq!(reg.suite("korns").unwrap().len(), 15);
        assert_eq!(reg.suite("livermore").unwrap().len(), 22);
        assert_eq!(reg.suite("jin").unwrap().len(), 6);
        assert_eq!(reg.suite("constant").unwrap().len(), 8);
        assert_eq!(reg.suite("feynman").unwrap().len(), 10);
        assert_eq!(reg.suite("nguyen-mini").unwrap().len(), 3);
    }

    #[test]
    fn supported_rows_parse_and_have_vocab() {
        let reg = registry();
        for b in reg.all() {
            if b.supported() {
                let t = b.target().unwrap();
                let v = b.vocabulary().unwrap();
                assert!(v.n_variables() >= t.max_var().map(|j| j + 1).unwrap_or(0), "{}", b.name);
            }
        }
    }

    #[test]
    fn korns_tan_rows_are_unsupported() {
        let reg = registry();
        for name in ["Korns-13", "Korns-14", "Korns-15"] {
            assert!(!reg.get(name).unwrap().supported());
        }
    }

    #[test]
    fn unknown_suite_lists_available() {
        let reg = registry();
        let err = reg.suite("nope").unwrap_err();
        assert!(err.to_string().contains("nguyen"));
    }

    #[test]
    fn jin_library_drops_log() {
        let reg = registry();
        let v = reg.get("Jin-1").unwrap().vocabulary().unwrap();
        assert!(v.find(Symbol::Un(UnOp::Log)).is_none());
        assert!(v.find(Symbol::Un(UnOp::Quart)).is_some());
        assert!(v.find(Symbol::Const).is_some());
        assert!(v.find(Symbol::Var(1)).is_some());
    }
}
