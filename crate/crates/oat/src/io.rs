//! File access for datasets, checkpoints and text artifacts.

use std::fs;
use std::path::Path;

use oat_core::data::{decode_cifar10, decode_oatd, encode_oatd, Dataset};
use oat_core::nn::{decode_model, encode_model, Model};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Oatd,
    Cifar10,
}

impl DataFormat {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "oatd" => Ok(DataFormat::Oatd),
            "cifar10" => Ok(DataFormat::Cifar10),
            _ => Err(CliError::Config(format!("unknown data.format {s:?}"))),
        }
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn format_err(path: &Path, source: oat_core::OatError) -> CliError {
    CliError::Format { path: path.display().to_string(), source }
}

pub fn read_dataset(path: &Path, format: DataFormat) -> CliResult<Dataset> {
    let bytes = read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match format {
        DataFormat::Oatd => decode_oatd(&bytes, &name),
        DataFormat::Cifar10 => decode_cifar10(&bytes, &name),
    }
    .map_err(|e| format_err(path, e))
}

pub fn write_dataset(path: &Path, d: &Dataset) -> CliResult<()> {
    write(path, encode_oatd(d))
}

pub fn read_model(path: &Path) -> CliResult<Model> {
    decode_model(&read(path)?).map_err(|e| format_err(path, e))
}

pub fn write_model(path: &Path, m: &Model) -> CliResult<()> {
    write(path, encode_model(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use oat_core::nn::{build_model, InputShape, ModelSpec};
    use oat_core::RngState;

    #[test]
    fn dataset_and_model_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(vec![1, 2, 3, 4, 5, 6, 7, 8], vec![0, 1], (1, 2, 2), 2, "x").unwrap();
        let p = dir.path().join("sub/train.oatd");
        write_dataset(&p, &d).unwrap();
        let back = read_dataset(&p, DataFormat::Oatd).unwrap();
        assert_eq!(back.images(), d.images());
        assert_eq!(back.name, "train");

        let m = build_model(&ModelSpec::logistic(InputShape::flat(4), 2), &mut RngState::from_seed(0)).unwrap();
        let mp = dir.path().join("m.oatm");
        write_model(&mp, &m).unwrap();
        assert_eq!(read_model(&mp).unwrap().params(), m.params());
    }

    #[test]
    fn failures_map_to_io_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let missing = read_dataset(&dir.path().join("nope.oatd"), DataFormat::Oatd).unwrap_err();
        assert_eq!(missing.exit_code(), 3);
        let junk = dir.path().join("junk.bin");
        fs::write(&junk, b"12345").unwrap();
        assert_eq!(read_dataset(&junk, DataFormat::Cifar10).unwrap_err().exit_code(), 3);
        assert_eq!(read_model(&junk).unwrap_err().exit_code(), 3);
    }
}
