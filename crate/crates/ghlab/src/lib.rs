//! ghlab: numerical machinery for generalized Gibbons-Hawking metric
//! ansatzes on torus fibrations, with the verification harness for their
//! closed-form identities, distributional equations and functional
//! equations.

pub mod c3;
pub mod classic2d;
pub mod coupling;
pub mod flow;
pub mod gh;
pub mod negvertex;
pub mod numverify;
pub mod posvertex;
pub mod verify;

pub use coupling::{C3Point, HermCoupling, NegVertexPoint, PosVertexPoint, SymCoupling};
