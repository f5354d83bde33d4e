pub mod dsl;
pub mod fit;
pub mod program;
pub mod pulse;
pub mod pump;
pub mod rf;
pub mod series;
pub mod spin;
