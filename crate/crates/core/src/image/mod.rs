//! Grayscale images, Gaussian pyramids and Shi-Tomasi keypoints.

mod buffer;
mod detect;
mod pyramid;

pub use buffer::{list_frames, ImageBuffer};
pub use detect::{detect_shi_tomasi, min_eigenvalue, shi_tomasi_scores, sobel, DetectorParams, Keypoint, ScoreThreshold, TENSOR_WINDOW};
pub use pyramid::{level_dims, Pyramid, PyramidLevel, MIN_LEVEL_SIDE};
