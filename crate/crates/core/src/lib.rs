pub mod densela;
pub mod error;
pub mod geometry;
pub mod specfun;
pub mod green;
pub mod bie;
pub mod rtr;
pub mod ddm;
pub mod post;
pub mod config;
pub mod driver;
pub mod selftest;
