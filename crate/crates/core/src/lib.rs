pub mod colombeau;
pub mod expr;
pub mod factorization;
pub mod jet;
pub mod numerics;
pub mod cli;
