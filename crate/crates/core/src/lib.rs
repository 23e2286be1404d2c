pub mod codec;
pub mod control;
pub mod kinematics;
pub mod motion;
pub mod orchestrator;
pub mod perception;
pub mod simworld;
pub mod spatial;
