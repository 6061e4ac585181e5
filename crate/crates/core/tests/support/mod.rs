pub mod criteria;
pub mod oracles;
