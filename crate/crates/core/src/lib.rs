pub mod cluster;
pub mod columnar;
pub mod costmodel;
pub mod decomposer;
pub mod executor;
pub mod gen;
pub mod planir;
pub mod soda;
pub mod sqlfe;
pub mod stats;
