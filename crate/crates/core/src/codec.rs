//! PNG and base64 helpers for frames that leave the process.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("unsupported png layout: {0}")]
    Layout(String),
}

/// Encodes an RGB8 image. Output is deterministic for identical input.
pub fn encode_png(width: u32, height: u32, rgb: &[[u8; 3]]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        let flat: Vec<u8> = rgb.iter().flatten().copied().collect();
        writer.write_image_data(&flat)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<(u32, u32, Vec<[u8; 3]>), CodecError> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(CodecError::Layout(format!("{:?}/{:?}", info.color_type, info.bit_depth)));
    }
    let pixels = buf[..info.buffer_size()].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((info.width, info.height, pixels))
}

pub fn png_base64(width: u32, height: u32, rgb: &[[u8; 3]]) -> Result<String, CodecError> {
    Ok(STANDARD.encode(encode_png(width, height, rgb)?))
}

pub fn decode_png_base64(s: &str) -> Result<(u32, u32, Vec<[u8; 3]>), CodecError> {
    decode_png(&STANDARD.decode(s)?)
}
