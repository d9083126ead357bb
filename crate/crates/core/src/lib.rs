pub mod averaging;
pub mod error;
pub mod montecarlo;
pub mod operator;
pub mod scenarios;
pub mod solver;
