//! IDX image/label file support (the MNIST container format).
//!
//! Layout, all integers big-endian u32: images carry magic 0x00000803
//! followed by count, rows, cols and then count·rows·cols unsigned bytes;
//! labels carry magic 0x00000801 followed by count and then count bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads a matched images/labels pair. Pixels are scaled to [0,1] and each
/// image is flattened row-major, so the dataset dimension is rows·cols.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut images = BufReader::new(File::open(images_path)?);
    let magic = read_u32(&mut images)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "bad images magic {magic:#010x} in {}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32(&mut images)? as usize;
    let rows = read_u32(&mut images)? as usize;
    let cols = read_u32(&mut images)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty IDX geometry {count}x{rows}x{cols}")));
    }
    let mut pixels = vec![0u8; count * rows * cols];
    images.read_exact(&mut pixels)?;

    let mut labels_file = BufReader::new(File::open(labels_path)?);
    let magic = read_u32(&mut labels_file)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "bad labels magic {magic:#010x} in {}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = read_u32(&mut labels_file)? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut raw_labels = vec![0u8; count];
    labels_file.read_exact(&mut raw_labels)?;

    let data: Vec<f64> = pixels.into_iter().map(|p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.into_iter().map(|l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, Matrix::new(count, rows * cols, data)?, labels, num_classes)
}

/// Writes a dataset as an IDX pair. Inputs must lie in [0,1] (they are
/// quantized to bytes via round(v·255)) and the dataset dimension must equal
/// rows·cols.
pub fn write_idx(images_path: &Path, labels_path: &Path, ds: &Dataset, rows: usize, cols: usize) -> Result<()> {
    if ds.dim() != rows * cols {
        return Err(Error::dimension(
            "write_idx",
            format!("{rows}x{cols} geometry"),
            format!("{} input dims", ds.dim()),
        ));
    }
    if ds.inputs.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Contract("write_idx requires inputs in [0,1]".into()));
    }
    if ds.labels.iter().any(|&l| l > u8::MAX as usize) {
        return Err(Error::Contract("write_idx labels must fit in a byte".into()));
    }
    let mut images = BufWriter::new(File::create(images_path)?);
    images.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    images.write_all(&(ds.len() as u32).to_be_bytes())?;
    images.write_all(&(rows as u32).to_be_bytes())?;
    images.write_all(&(cols as u32).to_be_bytes())?;
    let bytes: Vec<u8> = ds.inputs.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    images.write_all(&bytes)?;
    images.flush()?;

    let mut labels = BufWriter::new(File::create(labels_path)?);
    labels.write_all(&LABELS_MAGIC.to_be_bytes())?;
    labels.write_all(&(ds.len() as u32).to_be_bytes())?;
    let label_bytes: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    labels.write_all(&label_bytes)?;
    labels.flush()?;
    Ok(())
}
