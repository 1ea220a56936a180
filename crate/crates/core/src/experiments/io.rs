//! On-disk formats.
//!
//! Tensor files are little-endian: the magic `MOMP`, a `u32` format version,
//! `u32` dimensions `N_B, N_M, N_S`, a `u64` tensor count, then for every
//! tensor its entries in row-major order as interleaved `f64` real and
//! imaginary parts. JSON files carry everything else.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, ExperimentConfig};
use super::scenario::{build_model, Sample, Scenario};
use crate::calibration::ThetaParams;
use crate::channel::ImpairedSystem;
use crate::error::{Error, Result};
use crate::tensor::{Tensor3, C64};

pub const MAGIC: &[u8; 4] = b"MOMP";
pub const FORMAT_VERSION: u32 = 1;

pub const TRAIN_OBS: &str = "train_obs.bin";
pub const TRAIN_CHANNELS: &str = "train_channels.bin";
pub const TEST_OBS: &str = "test_obs.bin";
pub const TEST_CHANNELS: &str = "test_channels.bin";
pub const SIDECAR: &str = "dataset.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const MANIFEST: &str = "manifest.json";

/// Writes equally shaped tensors to `path`.
pub fn write_tensors(path: &Path, tensors: &[Tensor3], dims: (usize, usize, usize)) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&FORMAT_VERSION.to_le_bytes())?;
    for d in [dims.0, dims.1, dims.2] {
        put(&(d as u32).to_le_bytes())?;
    }
    put(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        if t.dim() != dims {
            return Err(Error::Shape(format!("tensor of shape {:?} in a {:?} file", t.dim(), dims)));
        }
        for z in t.iter() {
            put(&z.re.to_le_bytes())?;
            put(&z.im.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a tensor file written by [`write_tensors`].
pub fn read_tensors(path: &Path) -> Result<(Vec<Tensor3>, (usize, usize, usize))> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let format = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut take = |buf: &mut [u8]| {
        r.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => format("file is truncated".into()),
            _ => Error::io(path, e),
        })
    };
    let mut magic = [0u8; 4];
    take(&mut magic)?;
    if &magic != MAGIC {
        return Err(format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    take(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(format(format!("unsupported format version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        take(&mut b4)?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let mut b8 = [0u8; 8];
    take(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let shape = (dims[0], dims[1], dims[2]);
    let per = dims[0] * dims[1] * dims[2];
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; per * 16];
    for _ in 0..count {
        take(&mut buf)?;
        let values: Vec<C64> = buf
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        out.push(Tensor3::from_shape_vec(shape, values).expect("length matches shape"));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(format("trailing bytes after the last tensor".into()));
    }
    Ok((out, shape))
}

/// Per-split metadata stored in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub ms_index: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    pub snr_db: f64,
}

/// JSON sidecar of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub train: SplitMeta,
    pub test: SplitMeta,
    pub true_system: ImpairedSystem,
    pub true_theta: ThetaParams,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn split_meta(samples: &[Sample], snr_db: f64) -> SplitMeta {
    SplitMeta {
        ms_index: samples.iter().map(|s| s.ms_index).collect(),
        positions: samples.iter().map(|s| s.position).collect(),
        snr_db,
    }
}

/// Writes the tensor files and the sidecar into `dir`. Returns the paths.
pub fn write_scenario(dir: &Path, cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = scenario.model.dims();
    let files = [
        (TRAIN_OBS, scenario.train.iter().map(|s| s.y.clone()).collect::<Vec<_>>()),
        (TRAIN_CHANNELS, scenario.train.iter().map(|s| s.h.clone()).collect()),
        (TEST_OBS, scenario.test.iter().map(|s| s.y.clone()).collect()),
        (TEST_CHANNELS, scenario.test.iter().map(|s| s.h.clone()).collect()),
    ];
    let mut paths = Vec::new();
    for (name, tensors) in files {
        let p = dir.join(name);
        write_tensors(&p, &tensors, dims)?;
        paths.push(p);
    }
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        train: split_meta(&scenario.train, cfg.train_snr_db),
        test: split_meta(&scenario.test, cfg.localization_snr_db),
        true_system: scenario.truth.clone(),
        true_theta: ThetaParams::from_system(&scenario.model.nominal_bs, &scenario.model.nominal_ms, &scenario.truth)?,
    };
    let p = dir.join(SIDECAR);
    write_json(&p, &sidecar)?;
    paths.push(p);
    Ok(paths)
}

fn zip_samples(path: &Path, ys: Vec<Tensor3>, hs: Vec<Tensor3>, meta: &SplitMeta) -> Result<Vec<Sample>> {
    if ys.len() != hs.len() || ys.len() != meta.ms_index.len() || meta.positions.len() != ys.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "tensor counts disagree with the sidecar".into(),
        });
    }
    Ok(ys
        .into_iter()
        .zip(hs)
        .zip(meta.ms_index.iter().zip(&meta.positions))
        .map(|((y, h), (&ms_index, &position))| Sample {
            h,
            y,
            ms_index,
            position,
        })
        .collect())
}

/// Reads a dataset written by [`write_scenario`]. The nominal model is
/// rebuilt from `cfg`, which must match the generating configuration.
pub fn read_scenario(dir: &Path, cfg: &ExperimentConfig) -> Result<(Scenario, Sidecar)> {
    let sidecar_path = dir.join(SIDECAR);
    let sidecar: Sidecar = read_json(&sidecar_path)?;
    if sidecar.config_hash != cfg.hash() {
        return Err(Error::Config(format!(
            "{} was generated with a different configuration or seed",
            sidecar_path.display()
        )));
    }
    let model = build_model(cfg)?;
    let load = |name: &str| -> Result<Vec<Tensor3>> {
        let p = dir.join(name);
        let (t, dims) = read_tensors(&p)?;
        if dims != model.dims() {
            return Err(Error::Format {
                path: p,
                msg: format!("dimensions {dims:?} do not match the model {:?}", model.dims()),
            });
        }
        Ok(t)
    };
    let train = zip_samples(&dir.join(TRAIN_OBS), load(TRAIN_OBS)?, load(TRAIN_CHANNELS)?, &sidecar.train)?;
    let test = zip_samples(&dir.join(TEST_OBS), load(TEST_OBS)?, load(TEST_CHANNELS)?, &sidecar.test)?;
    let scenario = Scenario {
        model,
        truth: sidecar.true_system.clone(),
        train,
        test,
    };
    Ok((scenario, sidecar))
}

/// Comma-separated table with a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}

/// Shortest round-trip representation of a float.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// One output file recorded in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Inputs and outputs of one CLI run. Contains no timestamps so re-runs are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub verb: String,
    pub seed: u64,
    pub config_hash: String,
    pub outputs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(verb: &str, cfg: &ExperimentConfig, outputs: &[PathBuf]) -> Result<Manifest> {
        let outputs = outputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(ManifestEntry {
                    file: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    bytes: bytes.len() as u64,
                    sha256: hex(&Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest {
            verb: verb.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            outputs,
        })
    }
}
