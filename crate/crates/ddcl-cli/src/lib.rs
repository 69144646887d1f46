//! Library surface of the experiment runner so the suites (blocks 1–6,
//! gradient checks, flow certificates) can be driven from integration tests
//! as well as from the binary.

pub mod commands {
    pub mod block1;
    pub mod block2;
    pub mod block3;
    pub mod block5;
    pub mod block6;
    pub mod tools;
}
pub mod common;
pub mod summary;
pub mod svg;
