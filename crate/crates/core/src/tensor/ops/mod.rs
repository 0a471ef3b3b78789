mod conv;
mod elementwise;
mod matmul;
mod norm;
mod reduce;
mod resize;
mod shape;
mod softmax;

pub use conv::Conv2dSpec;
