pub mod dispersion;
pub mod error;
pub mod ffh;
pub mod perturbation;
pub mod report;
pub mod stokes;
