//! Exact-arithmetic engine for permutation-equivariant quantum K-theory at
//! desk scale: truncated lambda-ring series over the rationals, rational
//! functions of q with poles at 0, infinity and roots of unity, correlator
//! providers with structural-identity verifiers, the genus-0 reconstruction
//! of the descendant potential from one-point data, the genus-1 point-target
//! evaluator, and Lagrangian-cone checks.
//!
//! Everything computes modulo a declared filtration order with
//! arbitrary-precision rationals; there is no floating point.

pub mod rat;
pub mod error;
pub mod series;
pub mod cyclotomic;
pub mod qfun;
pub mod sector;
pub mod kbasis;
pub mod insertion;
pub mod moduli;
pub mod correlator;
pub mod bracket;
pub mod soper;
pub mod verify;
pub mod recon0;
pub mod recon1;
pub mod cone;
pub mod config;

pub use error::EngineError;
pub use rat::Rat;
pub use series::{AdamsRule, GeneratorSpec, RingContext, TruncatedSeries, WEIGHT_INFINITY};
