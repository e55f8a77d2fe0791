pub mod numgrad;
pub mod envs;
pub mod roles;
pub mod policy;
pub mod predictor;
pub mod training;
pub mod evaluation;
pub mod theory;
pub mod cli;
