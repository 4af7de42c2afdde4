//! IDX image/label file reading.

use std::path::Path;

use ledgerfl_core::data::{dataset_from_idx, Dataset, Split};

use crate::{io_err, AppError, AppResult};

pub fn load_idx(images: &Path, labels: &Path, split: Split) -> AppResult<Dataset> {
    let img = std::fs::read(images).map_err(io_err(images))?;
    let lab = std::fs::read(labels).map_err(io_err(labels))?;
    dataset_from_idx(&img, &lab, split).map_err(|e| AppError::Parse {
        path: images.to_path_buf(),
        reason: format!("with {}: {e}", labels.display()),
    })
}

/// The four standard file names inside `dir`.
pub fn load_idx_dir(dir: &Path) -> AppResult<(Dataset, Dataset)> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3];
        for v in [n, 28, 28] {
            b.extend(v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(0u8, 784 * n as usize));
        b
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 1];
        b.extend((ls.len() as u32).to_be_bytes());
        b.extend(ls);
        b
    }

    #[test]
    fn single_zero_image() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&i, images(1)).unwrap();
        std::fs::write(&l, labels(&[7])).unwrap();
        let ds = load_idx(&i, &l, Split::Test).unwrap();
        assert_eq!(ds.dim(), 784);
        assert_eq!(ds.labels, [7]);
        assert!(ds.features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let e = load_idx(&dir.path().join("nope"), &dir.path().join("l"), Split::Test).unwrap_err();
        assert!(e.to_string().contains("nope"), "{e}");
    }

    #[test]
    fn count_mismatch_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&i, images(2)).unwrap();
        std::fs::write(&l, labels(&[1])).unwrap();
        assert!(matches!(
            load_idx(&i, &l, Split::Train),
            Err(AppError::Parse { .. })
        ));
    }
}
