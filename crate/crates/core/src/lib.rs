pub mod harness;
pub mod net;
pub mod oracle;
pub mod sde;
pub mod sigcore;
pub mod solver;
