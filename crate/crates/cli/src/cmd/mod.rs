pub mod augment;
pub mod demo;
pub mod eval;
pub mod extract;
pub mod split;
pub mod stats;
