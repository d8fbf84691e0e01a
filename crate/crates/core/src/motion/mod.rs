pub mod features;
pub mod flow;
pub mod image;
pub mod landmarks;

pub use features::{
    extract_clip_features, extract_video_features, partition_windows, read_features, write_features, ExtractConfig,
    FeatureTensor,
};
pub use flow::{estimate_region_flow, BlockMatcher, FlowConfig, FlowEstimator, RegionFlow};
pub use image::{list_frames, load_frames, GrayImage, Pyramid};
pub use landmarks::{read_landmarks, write_landmarks};
