pub mod harness;
pub mod linalg;
pub mod model;
pub mod ntk;
pub mod optim;
