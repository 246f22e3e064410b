//! Algebra of measure-valued spreading maps.
//!
//! * [`measure`]: atomic measures on ℝ* with addition, convolution, the Mellin
//!   transform and the normed exponent.
//! * [`rstar`]: ℝ*-polymorphisms of finite spaces and their weighted
//!   convolution product.
//! * [`bordered`]: polymorphisms of bordered spaces (a finite space plus a
//!   point at infinity) and their block product.
//! * [`poisson`]: configurations, Poisson measures and the functor ω from
//!   bordered polymorphisms to ℝ*-polymorphisms of configuration spaces.
//! * [`mellin_oracle`]: the complex shadow of the whole construction through
//!   operators `f(z) ↦ f(Az+b)·exp(c·z)`.
//! * [`mc`]: Monte Carlo routing of Poisson points through a bordered
//!   polymorphism.
//! * [`random`]: generators of random valid instances.
//! * [`io`]: JSON instance files.

// `!(x > 0.0)` rejects NaN as well; matrix code indexes by position.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bordered;
pub mod error;
pub mod io;
pub mod mc;
pub mod measure;
pub mod mellin_oracle;
pub mod poisson;
pub mod policy;
pub mod random;
pub mod rstar;

pub use bordered::{BorderedSpace, VPolymorphism};
pub use error::{Error, Result};
pub use io::{InstanceFile, Payload};
pub use mc::{RngStream, RoutingSample};
pub use measure::{Atom, AtomicMeasure, MeasureDistance, MeasureSettings, MellinGrid};
pub use mellin_oracle::OperatorData;
pub use num_complex::Complex64;
pub use poisson::Configuration;
pub use policy::TruncationPolicy;
pub use rstar::{FiniteSpace, Partition, RStarPolymorphism};
