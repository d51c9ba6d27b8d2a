pub mod app_sim;
pub mod bench;
pub mod channel_models;
pub mod edgeric;
pub mod policy_format;
pub mod ran_emu;
pub mod rt_e2;
