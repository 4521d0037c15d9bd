pub mod eval;
pub mod maxcut;
pub mod serve;
pub mod stability;
pub mod synth;
pub mod train;
pub mod validate;
