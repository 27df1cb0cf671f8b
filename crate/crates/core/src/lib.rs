//! ergolab: an exact computational laboratory for measure-preserving actions
//! of countable abelian groups.
//!
//! The crate centers on finite model systems (with torus rotations handled
//! symbolically) where ergodic-theoretic quantities, from multiple ergodic
//! averages and Gowers seminorms to cocycle cohomology, Conze-Lesigne data,
//! spectrum extensions, and recurrence statistics, can be computed in exact
//! arithmetic and compared against closed-form predictions.

pub mod snf;
pub mod phases;
pub mod cyclo;
pub mod abgroup;
pub mod systems;
pub mod cubic;
pub mod cocycles;
pub mod averages;
pub mod nilhomog;
pub mod specext;
pub mod recurrence;
