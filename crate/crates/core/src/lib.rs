pub mod error;
pub mod gf2poly;
pub mod sum;
pub mod plr;
pub mod field;
pub mod cbc;
pub mod fem;
pub mod estimators;
pub mod config;
pub mod harness;
