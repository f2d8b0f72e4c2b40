pub mod cli;
pub mod cpr;
pub mod dist;
pub mod gfc;
pub mod model;
pub mod numerics;
pub mod samplers;
pub mod verify;
