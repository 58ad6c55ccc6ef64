//! Binary checkpoints and the append-only snapshot store used for rewinding.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "PLCK" | version u32 | run_id (u32 len + utf8) | epoch u32 | seed u64
//! tensor count u32
//! per tensor: name (u32 len + utf8) | dtype u8 | rank u32 | extents u32.. | prunable u8 | values f32..
//! checksum u64   first 8 bytes of SHA-256 over everything before it
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{ModelState, ParamTensor};
use crate::prune::SnapshotSource;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"PLCK";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const INDEX_FILE: &str = "index.json";

/// Rewind epochs of the reference 75-epoch schedule.
pub const REFERENCE_REWIND_EPOCHS: [u32; 7] = [0, 5, 10, 20, 40, 60, 75];
const REFERENCE_TOTAL_EPOCHS: u32 = 75;

/// Maps an epoch of the 75-epoch reference schedule onto a `total`-epoch one.
pub fn scale_epoch(epoch: u32, total: u32) -> u32 {
    (f64::from(epoch) * f64::from(total) / f64::from(REFERENCE_TOTAL_EPOCHS)).round() as u32
}

/// Default snapshot epochs for a run of `total` epochs: the scaled reference
/// rewind epochs plus `total`, deduplicated and sorted.
pub fn snapshot_schedule(total: u32) -> Vec<u32> {
    let mut epochs: Vec<u32> = REFERENCE_REWIND_EPOCHS.iter().map(|&e| scale_epoch(e, total)).collect();
    epochs.push(total);
    epochs.sort_unstable();
    epochs.dedup();
    epochs
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn trailing_checksum(body: &[u8]) -> u64 {
    let digest = Sha256::digest(body);
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes `state` into the checkpoint byte format.
pub fn encode(run_id: &str, state: &ModelState) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * state.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, run_id);
    out.extend_from_slice(&state.epoch_tag.to_le_bytes());
    out.extend_from_slice(&state.seed.to_le_bytes());
    out.extend_from_slice(&(state.params.len() as u32).to_le_bytes());
    for p in &state.params {
        put_str(&mut out, &p.name);
        out.push(DTYPE_F32);
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &e in &p.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        out.push(u8::from(p.prunable));
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = trailing_checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("name is not UTF-8".into()))
    }
}

/// Checkpoint contents without the parameter values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub prunable: bool,
}

/// Parses checkpoint bytes, verifying the trailing checksum. `path` is only
/// used for error reporting.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(String, ModelState)> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if trailing_checksum(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(Error::Checksum { path: path.to_path_buf() });
    }
    let mut c = Cursor { bytes: body, pos: 4 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let run_id = c.string()?;
    let epoch = c.u32()?;
    let seed = c.u64()?;
    let count = c.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = c.string()?;
        let dtype = c.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("{name}: unsupported dtype tag {dtype}")));
        }
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let prunable = c.u8()? != 0;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.push(ParamTensor::new(name, shape, values, prunable)?);
    }
    if c.pos != body.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    let config = ModelState::infer_config(&params)?;
    Ok((run_id, ModelState::from_parts(config, epoch, seed, params)?))
}

pub fn write_checkpoint(path: &Path, run_id: &str, state: &ModelState) -> Result<()> {
    fs::write(path, encode(run_id, state))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(String, ModelState)> {
    decode(&fs::read(path)?, path)
}

/// Header fields and tensor directory of a checkpoint file.
#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub run_id: String,
    pub epoch: u32,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    pub sha256: String,
}

pub fn inspect(path: &Path) -> Result<CheckpointInfo> {
    let bytes = fs::read(path)?;
    let (run_id, state) = decode(&bytes, path)?;
    Ok(CheckpointInfo {
        run_id,
        epoch: state.epoch_tag,
        seed: state.seed,
        tensors: state
            .params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                prunable: p.prunable,
            })
            .collect(),
        sha256: sha256_hex(&bytes),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    epoch: u32,
    file: String,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Index {
    run_id: String,
    entries: Vec<IndexEntry>,
}

/// Append-only per-run snapshot directory with a JSON index of
/// `epoch -> (file, sha256)`.
#[derive(Debug)]
pub struct SnapshotStore {
    dir: PathBuf,
    run_id: String,
    entries: BTreeMap<u32, IndexEntry>,
}

impl SnapshotStore {
    /// Opens the store in `dir`, creating an empty one if no index exists.
    pub fn open_or_create(dir: &Path, run_id: &str) -> Result<Self> {
        if dir.join(INDEX_FILE).exists() {
            let store = Self::open(dir)?;
            if store.run_id != run_id {
                return Err(Error::InvalidInput(format!(
                    "store at {} belongs to run {}",
                    dir.display(),
                    store.run_id
                )));
            }
            return Ok(store);
        }
        fs::create_dir_all(dir)?;
        let store = Self {
            dir: dir.to_path_buf(),
            run_id: run_id.to_string(),
            entries: BTreeMap::new(),
        };
        store.write_index()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let raw = fs::read_to_string(dir.join(INDEX_FILE))?;
        let index: Index =
            serde_json::from_str(&raw).map_err(|e| Error::Format(format!("snapshot index: {e}")))?;
        let mut entries = BTreeMap::new();
        for e in index.entries {
            let epoch = e.epoch;
            if entries.insert(epoch, e).is_some() {
                return Err(Error::DuplicateSnapshot(epoch));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            run_id: index.run_id,
            entries,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, epoch: u32) -> Option<PathBuf> {
        self.entries.get(&epoch).map(|e| self.dir.join(&e.file))
    }

    pub fn digest_of(&self, epoch: u32) -> Option<&str> {
        self.entries.get(&epoch).map(|e| e.sha256.as_str())
    }

    fn write_index(&self) -> Result<()> {
        let index = Index {
            run_id: self.run_id.clone(),
            entries: self.entries.values().cloned().collect(),
        };
        let json = serde_json::to_string_pretty(&index).map_err(|e| Error::Format(e.to_string()))?;
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        fs::write(&tmp, json)?;
        fs::rename(tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }

    /// Writes `state` as the snapshot for its `epoch_tag`; returns the hex
    /// SHA-256 of the file.
    pub fn save(&mut self, state: &ModelState) -> Result<String> {
        let epoch = state.epoch_tag;
        if self.entries.contains_key(&epoch) {
            return Err(Error::DuplicateSnapshot(epoch));
        }
        let bytes = encode(&self.run_id, state);
        let file = format!("epoch-{epoch:04}.ckpt");
        let mut f = OpenOptions::new().write(true).create_new(true).open(self.dir.join(&file))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        let sha256 = sha256_hex(&bytes);
        self.entries.insert(
            epoch,
            IndexEntry {
                epoch,
                file,
                sha256: sha256.clone(),
            },
        );
        self.write_index()?;
        Ok(sha256)
    }

    /// Reads one snapshot, verifying its index digest and checksum.
    pub fn load_snapshot(&self, epoch: u32) -> Result<ModelState> {
        let entry = self.entries.get(&epoch).ok_or_else(|| Error::MissingSnapshot {
            epoch,
            available: self.entries.keys().copied().collect(),
        })?;
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Checksum { path });
        }
        Ok(decode(&bytes, &path)?.1)
    }
}

impl SnapshotSource for SnapshotStore {
    fn epochs(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    fn load(&self, epoch: u32) -> Result<ModelState> {
        self.load_snapshot(epoch)
    }
}
