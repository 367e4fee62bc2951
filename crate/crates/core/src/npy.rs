//! Thin helpers over `npyz` for the array layouts the engine exchanges.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use npyz::{DType, NpyFile, Order, WriterBuilder};

use crate::error::{Error, Result};

fn npy_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Npy { path: path.to_path_buf(), message: message.into() }
}

fn open(path: &Path) -> Result<NpyFile<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let npy = NpyFile::new(BufReader::new(file)).map_err(|e| npy_err(path, e.to_string()))?;
    if npy.order() != Order::C {
        return Err(npy_err(path, "only C-order arrays are supported"));
    }
    Ok(npy)
}

fn type_str(dtype: &DType) -> Option<String> {
    match dtype {
        DType::Plain(ts) => Some(ts.to_string()),
        _ => None,
    }
}

/// Reads a float array, returning its shape and C-order values widened to f32.
///
/// `<f4` is the exchange format; `<f8` is accepted and narrowed.
pub fn read_f32(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let npy = open(path)?;
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let ts = type_str(&npy.dtype()).ok_or_else(|| npy_err(path, "structured dtypes are not supported"))?;
    let values = match ts.as_str() {
        "<f4" | "|f4" => npy.into_vec::<f32>(),
        "<f8" | "|f8" => npy.into_vec::<f64>().map(|v| v.into_iter().map(|x| x as f32).collect()),
        other => return Err(npy_err(path, format!("expected little-endian float32, found {other}"))),
    }
    .map_err(|e| npy_err(path, e.to_string()))?;
    Ok((shape, values))
}

/// Reads a float64 array (the engine's own payload format).
pub fn read_f64(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let npy = open(path)?;
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let ts = type_str(&npy.dtype()).ok_or_else(|| npy_err(path, "structured dtypes are not supported"))?;
    let values = match ts.as_str() {
        "<f8" | "|f8" => npy.into_vec::<f64>(),
        "<f4" | "|f4" => npy.into_vec::<f32>().map(|v| v.into_iter().map(f64::from).collect()),
        other => return Err(npy_err(path, format!("expected a float array, found {other}"))),
    }
    .map_err(|e| npy_err(path, e.to_string()))?;
    Ok((shape, values))
}

/// Reads a 1-D integer array of any common width.
pub fn read_ints(path: &Path) -> Result<Vec<i64>> {
    let npy = open(path)?;
    let ts = type_str(&npy.dtype()).ok_or_else(|| npy_err(path, "structured dtypes are not supported"))?;
    let read = match ts.trim_start_matches(['<', '|', '=']) {
        "i8" => npy.into_vec::<i64>(),
        "i4" => npy.into_vec::<i32>().map(|v| v.into_iter().map(i64::from).collect()),
        "i2" => npy.into_vec::<i16>().map(|v| v.into_iter().map(i64::from).collect()),
        "i1" => npy.into_vec::<i8>().map(|v| v.into_iter().map(i64::from).collect()),
        "u4" => npy.into_vec::<u32>().map(|v| v.into_iter().map(i64::from).collect()),
        "u2" => npy.into_vec::<u16>().map(|v| v.into_iter().map(i64::from).collect()),
        "u1" => npy.into_vec::<u8>().map(|v| v.into_iter().map(i64::from).collect()),
        other => return Err(npy_err(path, format!("expected an integer array, found {other}"))),
    };
    read.map_err(|e| npy_err(path, e.to_string()))
}

fn write<T: npyz::AutoSerialize + Copy>(path: &Path, shape: &[usize], values: &[T]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != values.len() {
        return Err(Error::ShapeMismatch { expected: shape.to_vec(), found: vec![values.len()] });
    }
    let shape: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = npyz::WriteOptions::new()
        .default_dtype()
        .shape(&shape)
        .writer(BufWriter::new(file))
        .begin_nd()
        .map_err(|e| Error::io(path, e))?;
    writer.extend(values.iter().copied()).map_err(|e| Error::io(path, e))?;
    writer.finish().map_err(|e| Error::io(path, e))
}

pub fn write_f32(path: &Path, shape: &[usize], values: &[f32]) -> Result<()> {
    write(path, shape, values)
}

pub fn write_f64(path: &Path, shape: &[usize], values: &[f64]) -> Result<()> {
    write(path, shape, values)
}

pub fn write_i64(path: &Path, values: &[i64]) -> Result<()> {
    write(path, &[values.len()], values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_payload_survives_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.npy");
        let values = [0.5f32, -1.25, 3.0, 7.5, 0.0, 1e-8];
        write_f32(&path, &[2, 3], &values).unwrap();
        let (shape, back) = read_f32(&path).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(back, values);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
    }

    #[test]
    fn narrow_int_labels_are_widened() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.npy");
        write(&path, &[3], &[1u8, 0, 9]).unwrap();
        assert_eq!(read_ints(&path).unwrap(), vec![1, 0, 9]);
    }

    #[test]
    fn ints_are_not_activations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.npy");
        write_i64(&path, &[1, 2]).unwrap();
        assert!(matches!(read_f32(&path), Err(Error::Npy { .. })));
    }
}
