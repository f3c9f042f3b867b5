pub mod backend;
pub mod battery;
pub mod ccd;
pub mod chat;
pub mod cli;
pub mod condition;
pub mod lexicon;
pub mod memory;
pub mod persona;
pub mod seeding;
pub mod workflow;
pub mod ablation;
pub mod psychometrics;
pub mod special;
pub mod stats;
