//! Label rasters as grayscale PNG: 8-bit classes, 16-bit instance ids and
//! 1-bit masks.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use panoroom_core::{BinaryMask, EquirectGrid, SemanticMap};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

fn encode(width: usize, height: usize, depth: BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(depth);
    let mut w = enc.write_header().expect("in-memory PNG header");
    w.write_image_data(data).expect("in-memory PNG data");
    w.finish().expect("in-memory PNG end");
    out
}

pub fn encode_labels(map: &SemanticMap) -> Vec<u8> {
    encode(map.width(), map.height(), BitDepth::Eight, map.data())
}

pub fn encode_ids(map: &EquirectGrid<u16>) -> Vec<u8> {
    let data: Vec<u8> = map.data().iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(map.width(), map.height(), BitDepth::Sixteen, &data)
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let w = mask.width();
    let stride = w.div_ceil(8);
    let mut data = vec![0u8; stride * mask.height()];
    for row in 0..mask.height() {
        for col in 0..w {
            if mask.get(col, row) {
                data[row * stride + col / 8] |= 0x80 >> (col % 8);
            }
        }
    }
    encode(w, mask.height(), BitDepth::One, &data)
}

struct Decoded {
    width: usize,
    height: usize,
    depth: BitDepth,
    line: usize,
    data: Vec<u8>,
}

fn decode(bytes: Vec<u8>, path: &Path) -> Result<Decoded> {
    let img = |e: png::DecodingError| Error::Image {
        path: path.into(),
        message: e.to_string(),
    };
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(img)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Image {
        path: path.into(),
        message: "image too large".into(),
    })?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(img)?;
    if info.color_type != ColorType::Grayscale {
        return Err(Error::schema(path, "", "label rasters must be single-channel grayscale"));
    }
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        depth: info.bit_depth,
        line: info.line_size,
        data,
    })
}

fn read(path: &Path) -> Result<Decoded> {
    decode(fs::read(path).map_err(|e| Error::io(path, e))?, path)
}

fn shape_error(path: &Path, e: panoroom_core::Error) -> Error {
    Error::schema(path, "", e.to_string())
}

pub fn read_labels(path: &Path) -> Result<SemanticMap> {
    let d = read(path)?;
    if d.depth != BitDepth::Eight {
        return Err(Error::schema(path, "", "class maps must be 8-bit"));
    }
    let data = (0..d.height).flat_map(|r| d.data[r * d.line..r * d.line + d.width].iter().copied()).collect();
    EquirectGrid::from_vec(d.width, d.height, 1, data).map_err(|e| shape_error(path, e))
}

pub fn read_ids(path: &Path) -> Result<EquirectGrid<u16>> {
    let d = read(path)?;
    if d.depth != BitDepth::Sixteen {
        return Err(Error::schema(path, "", "instance maps must be 16-bit"));
    }
    let data = (0..d.height)
        .flat_map(|r| {
            let line = &d.data[r * d.line..r * d.line + 2 * d.width];
            line.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect::<Vec<_>>()
        })
        .collect();
    EquirectGrid::from_vec(d.width, d.height, 1, data).map_err(|e| shape_error(path, e))
}

/// Reads a mask stored as 1-bit, or as 8-bit where nonzero is set.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let d = read(path)?;
    let bit = |c: usize, r: usize| -> bool {
        match d.depth {
            BitDepth::One => d.data[r * d.line + c / 8] & (0x80 >> (c % 8)) != 0,
            _ => d.data[r * d.line + c] != 0,
        }
    };
    if !matches!(d.depth, BitDepth::One | BitDepth::Eight) {
        return Err(Error::schema(path, "", "masks must be 1-bit or 8-bit"));
    }
    EquirectGrid::from_fn(d.width, d.height, bit).map_err(|e| shape_error(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip<T>(bytes: Vec<u8>, read: impl Fn(&Path) -> Result<T>) -> T {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        write(&p, &bytes).unwrap();
        read(&p).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn labels_round_trip(h in 1usize..12, seed in any::<u64>()) {
            let m = EquirectGrid::from_fn(2 * h, h, |c, r| (seed.rotate_left((c * 7 + r) as u32) % 15) as u8).unwrap();
            prop_assert_eq!(round_trip(encode_labels(&m), read_labels), m);
        }

        #[test]
        fn ids_round_trip(h in 1usize..12, seed in any::<u64>()) {
            let m = EquirectGrid::from_fn(2 * h, h, |c, r| (seed.wrapping_mul((c * 31 + r + 1) as u64) >> 48) as u16).unwrap();
            prop_assert_eq!(round_trip(encode_ids(&m), read_ids), m);
        }

        #[test]
        fn masks_round_trip(h in 1usize..12, seed in any::<u64>()) {
            let m = EquirectGrid::from_fn(2 * h, h, |c, r| (seed >> ((c + 3 * r) % 64)) & 1 == 1).unwrap();
            prop_assert_eq!(round_trip(encode_mask(&m), read_mask), m);
        }
    }

    #[test]
    fn wrong_depth_is_a_schema_error() {
        let m = EquirectGrid::filled(8, 4, 1, 3u16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        write(&p, &encode_ids(&m)).unwrap();
        assert_eq!(read_labels(&p).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn non_equirectangular_shape_is_rejected() {
        let bytes = encode(10, 4, BitDepth::Eight, &[0; 40]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        write(&p, &bytes).unwrap();
        assert!(matches!(read_labels(&p), Err(Error::Schema { .. })));
    }
}
