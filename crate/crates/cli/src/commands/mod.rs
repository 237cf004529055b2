pub mod bench;
pub mod risk;
pub mod synth;
pub mod train;
