//! Flow fields, images, file formats, datasets and network input assembly.

mod colorize;
mod dataset;
mod flo;
mod flow;
mod image;
mod input;
pub mod synthetic;

pub use colorize::colorize_flow;
pub use dataset::{
    load_middlebury, load_sintel, Dataset, PairEntry, SamplePair, SintelPass, SintelSubset,
    SplitList,
};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC, UNKNOWN_THRESHOLD, UNKNOWN_VALUE};
pub use flow::FlowField;
pub use image::{read_image, write_png, write_ppm, Rgb8Image, RgbImage};
pub(crate) use image::open_buffered;
pub use input::{
    assemble_batch, assemble_input, crop_output, padded_size, reflect_index, AssembledInput,
    CropBox, INPUT_CHANNELS, SIZE_MULTIPLE,
};
