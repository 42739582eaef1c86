//! Corrected leading-term asymptotics for second-order elliptic systems in a
//! narrow region between two close-to-touching boundaries, together with a
//! finite-difference solver on the straightened region and the experiments
//! that compare the two.

pub mod ansatz;
pub mod coefficients;
pub mod discretize;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod poly;

pub use ansatz::{build_ansatz, AnsatzField, AnsatzMode, BoundaryTraces};
pub use coefficients::{make_lame, CoefficientTensor, EllipticityBounds, LameParameters, TensorKind};
pub use error::{Error, Result};
pub use geometry::{validate_profiles, MappedPoint, NarrowRegion, Profile, ProfilePair};
pub use poly::Poly;
