pub mod catalog;
pub mod channel;
pub mod dynamics;
pub mod gns;
pub mod linalg;
pub mod measures;
pub mod quantization;
pub mod random;
pub mod scenario;
