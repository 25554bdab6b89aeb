//! Mollification, the smoothed derivative `F^δ`, convolution on the inverse
//! limit and partitions of unity.

mod convolution;
mod derivative;
mod mollify;
mod partition;

pub use convolution::{convolve_on_inverse_limit, BallSampler, Convolution, ConvolutionParams, MASS_GUARD, MAX_CONVOLUTION_WINDOW};
pub use derivative::SmoothedDerivative;
pub use mollify::{mollify_1d, mollify_2d, BumpKernel, Grid1, Grid2};
pub use partition::{partition_of_unity, PartitionOfUnity};
