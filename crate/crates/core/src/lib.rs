pub mod expr;
pub mod geom;
pub mod grid;
pub mod shs;
pub mod dirac;
pub mod green;
pub mod wave;
pub mod moller;
pub mod qstate;
pub mod config;
pub mod experiment;
