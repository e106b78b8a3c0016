pub mod cli;
pub mod fbta;
pub mod graph;
pub mod ido;
pub mod model;
pub mod oracle;
pub mod round;
pub mod split;
