//! Dispersing billiards with flat cusps.
pub mod dynamics;
pub mod geometry;
pub mod inducing;
pub mod lab;
pub mod observables;
pub mod parallel;
pub mod quad;
pub mod skorohod;
pub mod stable;
