pub mod detect;
pub mod efficiency;
pub mod sample;
pub mod sweep;
pub mod validate;
