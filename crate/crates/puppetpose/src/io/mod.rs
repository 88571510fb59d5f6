//! File formats: configuration, PNG codecs, pose banks, templates, and
//! skeleton files.

pub mod config_io;
pub mod png_io;
pub mod pose_bank;
pub mod skeleton_io;
pub mod template_io;

pub use config_io::{load_config, parse_config};
pub use png_io::{
    map_to_gray16, read_gray16, read_indexed, read_rgb8, rgb8_to_tensor, tensor_to_rgb8,
    write_gray16, write_indexed, write_rgb8,
};
pub use pose_bank::{load_pose_bank, save_pose_bank_csv, save_pose_bank_json, PoseBank};
pub use skeleton_io::{load_skeleton, save_skeleton};
pub use template_io::{label_palette, load_template, save_template};
