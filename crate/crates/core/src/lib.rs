pub mod agler;
pub mod annulus;
pub mod kernels;
pub mod lab;
pub mod numerics;
pub mod realize;
pub mod testfns;
