//! NPY (format version 1.0) reader and writer for bit-exact tensor
//! interchange.
//!
//! Supported dtypes are little-endian `<f8`, `<f4` and `<i4`, C order only.
//! f64 round-trips bitwise; f32 widens exactly to f64 on load.

use ovps_core::DenseTensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum NpyError {
    #[error("unsupported dtype `{0}` (expected <f8, <f4 or <i4)")]
    UnsupportedDtype(String),
    #[error("Fortran-order arrays are not supported")]
    FortranOrderUnsupported,
    #[error("corrupt NPY header: {0}")]
    CorruptHeader(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] ovps_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NpyError>;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NpyError + '_ {
    move |source| NpyError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}");
    // magic(6) + version(2) + len(2) + dict + padding + '\n', 64-aligned
    let unpadded = 10 + dict.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + padding + 1;
    let mut out = Vec::with_capacity(10 + header_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(padding));
    out.push(b'\n');
    out
}

/// Write a tensor as `<f8`, C order.
pub fn store_tensor(path: &Path, tensor: &DenseTensor) -> Result<()> {
    let mut bytes = header_bytes("<f8", tensor.shape());
    for v in tensor.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &bytes)
}

/// Write an i32 array (segment or semantic maps) as `<i4`, C order.
pub fn store_i32(path: &Path, shape: &[usize], data: &[i32]) -> Result<()> {
    let mut bytes = header_bytes("<i4", shape);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))?;
    Ok(())
}

struct Header {
    descr: String,
    shape: Vec<usize>,
    data_offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let corrupt = |msg: &str| NpyError::CorruptHeader(format!("{}: {msg}", path.display()));
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(corrupt(&format!("unsupported version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_offset = 10 + header_len;
    if bytes.len() < data_offset {
        return Err(corrupt("truncated header"));
    }
    let text = std::str::from_utf8(&bytes[10..data_offset])
        .map_err(|_| corrupt("header is not utf-8"))?;

    let descr = extract_quoted(text, "descr").ok_or_else(|| corrupt("missing descr"))?;
    let fortran = extract_after(text, "'fortran_order'").ok_or_else(|| corrupt("missing fortran_order"))?;
    if fortran.starts_with("True") {
        return Err(NpyError::FortranOrderUnsupported);
    }
    if !fortran.starts_with("False") {
        return Err(corrupt("unparseable fortran_order"));
    }
    let shape_src = extract_after(text, "'shape'").ok_or_else(|| corrupt("missing shape"))?;
    let open = shape_src.find('(').ok_or_else(|| corrupt("missing shape tuple"))?;
    let close = shape_src.find(')').ok_or_else(|| corrupt("unclosed shape tuple"))?;
    let mut shape = Vec::new();
    for part in shape_src[open + 1..close].split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        shape.push(
            part.parse::<usize>()
                .map_err(|_| corrupt(&format!("bad extent `{part}`")))?,
        );
    }
    if shape.is_empty() {
        return Err(corrupt("rank-0 arrays are not supported"));
    }
    Ok(Header {
        descr,
        shape,
        data_offset,
    })
}

fn extract_quoted(text: &str, key: &str) -> Option<String> {
    let rest = extract_after(text, &format!("'{key}'"))?;
    let rest = rest.strip_prefix('\'')?;
    let end = rest.find('\'')?;
    Some(rest[..end].to_string())
}

fn extract_after<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let at = text.find(key)?;
    let rest = &text[at + key.len()..];
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_start())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    Ok(bytes)
}

/// Load a tensor; `<f4` and `<i4` values widen exactly to f64.
pub fn load_tensor(path: &Path) -> Result<DenseTensor> {
    let bytes = read_file(path)?;
    let header = parse_header(path, &bytes)?;
    let count: usize = header.shape.iter().product();
    let body = &bytes[header.data_offset..];
    let corrupt = |msg: &str| NpyError::CorruptHeader(format!("{}: {msg}", path.display()));
    let data: Vec<f64> = match header.descr.as_str() {
        "<f8" => {
            if body.len() != count * 8 {
                return Err(corrupt("data size does not match shape"));
            }
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
        "<f4" => {
            if body.len() != count * 4 {
                return Err(corrupt("data size does not match shape"));
            }
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect()
        }
        "<i4" => {
            if body.len() != count * 4 {
                return Err(corrupt("data size does not match shape"));
            }
            body.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect()
        }
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    Ok(DenseTensor::new(header.shape, data)?)
}

/// Load an `<i4` array with its shape (for segment and semantic maps).
pub fn load_i32(path: &Path) -> Result<(Vec<usize>, Vec<i32>)> {
    let bytes = read_file(path)?;
    let header = parse_header(path, &bytes)?;
    if header.descr != "<i4" {
        return Err(NpyError::UnsupportedDtype(header.descr));
    }
    let count: usize = header.shape.iter().product();
    let body = &bytes[header.data_offset..];
    if body.len() != count * 4 {
        return Err(NpyError::CorruptHeader(format!(
            "{}: data size does not match shape",
            path.display()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Ok((header.shape, data))
}
