pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod prob;
pub mod sample;
pub mod seed;
pub mod tensor;
pub mod train;
