mod conv;
mod elementwise;
mod fftconv;
mod linalg;
mod loss;
mod norm;
mod pool;
mod shape;

pub use conv::{Conv2dSpec, ConvRoute};
pub use norm::{RunningStats, NORM_EPS};
pub use pool::PoolSpec;
pub use shape::concat;

#[cfg(test)]
mod gradcheck;
