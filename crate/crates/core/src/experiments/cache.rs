//! On-disk cache of expensive artifacts (reduced operators, adiabatic
//! tables), keyed by a SHA-256 hash of everything they depend on.
//!
//! File layout, all integers little endian:
//!
//! ```text
//! magic      8 bytes  "QDOTCACH"
//! version    u32
//! key hash   32 bytes SHA-256 of the canonical key JSON
//! header len u32
//! header     JSON {kind, key, arrays: [{name, shape}]}
//! payload    f64 values of every array in header order, row major
//! checksum   32 bytes SHA-256 of all preceding bytes
//! ```
//!
//! Any mismatch (magic, version, key, length, checksum, decode) makes the
//! entry untrusted: it is rebuilt and overwritten. Each entry is guarded by
//! an exclusive lock on a sibling `.lock` file while it is read or built.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QDOTCACH";
pub const FORMAT_VERSION: u32 = 1;
pub const CACHE_DIR_ENV: &str = "QDOT_CACHE_DIR";
const EXTENSION: &str = "qcache";

/// A named dense array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedArray { name: name.to_string(), shape, data }
    }

    pub fn from_array1(name: &str, a: &ndarray::Array1<f64>) -> Self {
        NamedArray::new(name, vec![a.len()], a.to_vec())
    }

    pub fn from_array2(name: &str, a: &ndarray::Array2<f64>) -> Self {
        NamedArray::new(name, vec![a.nrows(), a.ncols()], a.iter().copied().collect())
    }

    pub fn into_array1(self) -> Result<ndarray::Array1<f64>> {
        if self.shape.len() != 1 {
            return Err(Error::Cache(format!("`{}` is not one-dimensional", self.name)));
        }
        Ok(ndarray::Array1::from(self.data))
    }

    pub fn into_array2(self) -> Result<ndarray::Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::Cache(format!("`{}` is not two-dimensional", self.name)));
        }
        ndarray::Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data)
            .map_err(|e| Error::Cache(e.to_string()))
    }
}

/// Something that can be stored as a list of arrays.
pub trait Artifact: Sized {
    const KIND: &'static str;
    fn encode(&self) -> Vec<NamedArray>;
    fn decode(arrays: Vec<NamedArray>) -> Result<Self>;
}

/// Pops arrays by name in order, for use in [`Artifact::decode`].
pub struct ArrayReader(std::vec::IntoIter<NamedArray>);

impl ArrayReader {
    pub fn new(arrays: Vec<NamedArray>) -> Self {
        ArrayReader(arrays.into_iter())
    }

    pub fn next(&mut self, name: &str) -> Result<NamedArray> {
        match self.0.next() {
            Some(a) if a.name == name => Ok(a),
            Some(a) => Err(Error::Cache(format!("expected array `{name}`, found `{}`", a.name))),
            None => Err(Error::Cache(format!("missing array `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    key: serde_json::Value,
    arrays: Vec<ArrayInfo>,
}

/// Summary of one cache file, for `cache info`.
#[derive(Debug, Clone, Serialize)]
pub struct EntryInfo {
    pub file: PathBuf,
    pub bytes: u64,
    pub kind: Option<String>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Lookup {
    Hit,
    Miss,
    /// Present but untrusted; rebuilt.
    Corrupt,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

/// Cache directory from the environment override, else `~/.cache/qdot`, else
/// `.qdot-cache` in the working directory.
pub fn default_cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_DIR_ENV) {
        return PathBuf::from(d);
    }
    if let Some(home) = std::env::var_os("HOME") {
        return Path::new(&home).join(".cache").join("qdot");
    }
    PathBuf::from(".qdot-cache")
}

pub fn key_hash(key: &serde_json::Value) -> [u8; 32] {
    Sha256::digest(key.to_string().as_bytes()).into()
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, kind: &str, key: &serde_json::Value) -> PathBuf {
        let hash = hex::encode(key_hash(key));
        self.dir.join(format!("{kind}-{}.{EXTENSION}", &hash[..24]))
    }

    /// Returns the cached artifact for `key`, building and storing it on a
    /// miss or when the stored entry cannot be trusted.
    pub fn get_or_build<T, F>(&self, key: &serde_json::Value, build: F) -> Result<(T, Lookup)>
    where
        T: Artifact,
        F: FnOnce() -> Result<T>,
    {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(T::KIND, key);
        let lock_path = path.with_extension("lock");
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path)?;
        lock.lock()?;
        let result = self.get_or_build_locked(&path, key, build);
        let _ = lock.unlock();
        result
    }

    fn get_or_build_locked<T, F>(&self, path: &Path, key: &serde_json::Value, build: F) -> Result<(T, Lookup)>
    where
        T: Artifact,
        F: FnOnce() -> Result<T>,
    {
        let mut status = Lookup::Miss;
        if path.exists() {
            match read_entry(path, T::KIND, key).and_then(T::decode) {
                Ok(v) => return Ok((v, Lookup::Hit)),
                Err(e) => {
                    log::warn!("discarding cache entry {}: {e}", path.display());
                    status = Lookup::Corrupt;
                }
            }
        }
        let value = build()?;
        write_entry(path, T::KIND, key, &value.encode())?;
        Ok((value, status))
    }

    /// All entries with their validity (checksum and layout only).
    pub fn entries(&self) -> Result<Vec<EntryInfo>> {
        let mut out = Vec::new();
        if !self.dir.exists() {
            return Ok(out);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
            .collect();
        files.sort();
        for file in files {
            let bytes = fs::metadata(&file)?.len();
            let parsed = fs::read(&file).map_err(Error::from).and_then(|b| parse(&b));
            let (kind, valid) = match parsed {
                Ok((h, _, _)) => (Some(h.kind), true),
                Err(_) => (None, false),
            };
            out.push(EntryInfo { file, bytes, kind, valid });
        }
        Ok(out)
    }

    /// Removes all entries and lock files; returns the number of entries removed.
    pub fn clear(&self) -> Result<usize> {
        if !self.dir.exists() {
            return Ok(0);
        }
        let mut n = 0;
        for e in fs::read_dir(&self.dir)? {
            let p = e?.path();
            match p.extension().and_then(|x| x.to_str()) {
                Some(EXTENSION) => {
                    fs::remove_file(&p)?;
                    n += 1;
                }
                Some("lock") | Some("tmp") => fs::remove_file(&p)?,
                _ => {}
            }
        }
        Ok(n)
    }
}

fn encode_entry(kind: &str, key: &serde_json::Value, arrays: &[NamedArray]) -> Vec<u8> {
    let header = Header {
        kind: kind.to_string(),
        key: key.clone(),
        arrays: arrays.iter().map(|a| ArrayInfo { name: a.name.clone(), shape: a.shape.clone() }).collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let payload: usize = arrays.iter().map(|a| a.data.len()).sum();
    let mut buf = Vec::with_capacity(80 + header.len() + 8 * payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&key_hash(key));
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for a in arrays {
        for v in &a.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&sum);
    buf
}

fn write_entry(path: &Path, kind: &str, key: &serde_json::Value, arrays: &[NamedArray]) -> Result<()> {
    let bytes = encode_entry(kind, key, arrays);
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse(bytes: &[u8]) -> Result<(Header, [u8; 32], Vec<NamedArray>)> {
    let bad = |m: &str| Error::Cache(m.to_string());
    if bytes.len() < 8 + 4 + 32 + 4 + 32 {
        return Err(bad("file too short"));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    let expect: [u8; 32] = Sha256::digest(body).into();
    if expect.as_slice() != sum {
        return Err(bad("checksum mismatch"));
    }
    if &body[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Cache(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let hash: [u8; 32] = body[12..44].try_into().expect("32 bytes");
    let hlen = u32::from_le_bytes(body[44..48].try_into().expect("4 bytes")) as usize;
    let header_end = 48usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| bad("header overruns file"))?;
    let header: Header = serde_json::from_slice(&body[48..header_end]).map_err(|e| Error::Cache(e.to_string()))?;
    let payload = &body[header_end..];
    let expected: usize = header.arrays.iter().map(|a| a.shape.iter().product::<usize>()).sum();
    if payload.len() != expected * 8 {
        return Err(Error::Cache(format!("payload is {} bytes, header implies {}", payload.len(), expected * 8)));
    }
    let mut arrays = Vec::with_capacity(header.arrays.len());
    let mut pos = 0;
    for info in &header.arrays {
        let n: usize = info.shape.iter().product();
        let data = payload[pos..pos + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        pos += 8 * n;
        arrays.push(NamedArray { name: info.name.clone(), shape: info.shape.clone(), data });
    }
    Ok((header, hash, arrays))
}

fn read_entry(path: &Path, kind: &str, key: &serde_json::Value) -> Result<Vec<NamedArray>> {
    let bytes = fs::read(path)?;
    let (header, hash, arrays) = parse(&bytes)?;
    if header.kind != kind {
        return Err(Error::Cache(format!("entry holds `{}`, expected `{kind}`", header.kind)));
    }
    if hash != key_hash(key) || &header.key != key {
        return Err(Error::Cache("key mismatch".into()));
    }
    Ok(arrays)
}
