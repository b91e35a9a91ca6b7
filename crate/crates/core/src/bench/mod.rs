//! Benchmark registry, dataset sampling, and symbolic-equivalence checking.
//!
//! ```
//! use symreg_core::bench::{canonicalize, parse_infix, registry};
//!
//! let reg = registry();
//! let b = reg.get("Nguyen-5").unwrap();
//! assert_eq!(b.infix, "sin(x1^2) * cos(x1) - 1");
//! assert_eq!(b.sampling.count, 20);
//! assert_eq!(reg.suite("nguyen").unwrap().len(), 21);
//!
//! let a = canonicalize(&parse_infix("x1*2 + 1").unwrap());
//! let b = canonicalize(&parse_infix("1 + 2*x1").unwrap());
//! assert!(a.approx_eq(&b));
//! ```

mod canon;
mod parser;
mod registry;
mod sampling;

pub use canon::{canonicalize, symbolically_equivalent, Canon};
pub use parser::{parse_infix, ParseError};
pub use registry::{registry, Benchmark, Registry, RegistryError, SampleKind, SamplingSpec};
pub use sampling::{add_noise, r_squared, recovery_rate, sample_dataset, Dataset, SampleError};
