//! Binary caches: channel covariance sets and Bussgang models.
//!
//! Both formats are little-endian with an 8-byte magic, a `u32` format
//! version and a 32-byte key (the SHA-256 of everything the content depends
//! on). Complex matrices are stored column-major as `(re, im)` `f64` pairs.
//! A reader that finds a different magic, version or key treats the file
//! as a miss.

use std::path::{Path, PathBuf};

use palink_core::{
    bussgang::{blocks, BussgangModel},
    channel::CcmSet,
    math::{linalg::CMatrix, C64},
    scenario::{Architecture, MpcConfig, Scenario},
};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

const CCM_MAGIC: &[u8; 8] = b"PLCCM\0\0\0";
const BSG_MAGIC: &[u8; 8] = b"PLBSG\0\0\0";
pub const CACHE_VERSION: u32 = 1;

pub type Key = [u8; 32];

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix(&mut self, m: &CMatrix) {
        self.u32(m.nrows() as u32);
        self.u32(m.ncols() as u32);
        for c in m.iter() {
            self.f64(c.re);
            self.f64(c.im);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn matrix(&mut self) -> Option<CMatrix> {
        let r = self.u32()? as usize;
        let c = self.u32()? as usize;
        if self.0.len() < r.checked_mul(c)?.checked_mul(16)? {
            return None;
        }
        let data: Vec<C64> = (0..r * c).map(|_| Some(C64::new(self.f64()?, self.f64()?))).collect::<Option<_>>()?;
        Some(CMatrix::from_vec(r, c, data))
    }
}

fn header(magic: &[u8; 8], key: &Key) -> Writer {
    let mut w = Writer::default();
    w.0.extend_from_slice(magic);
    w.u32(CACHE_VERSION);
    w.0.extend_from_slice(key);
    w
}

/// Checks magic and version and returns the stored key.
fn open<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Option<(Key, Reader<'a>)> {
    let mut r = Reader(bytes);
    if r.take(8)? != magic || r.u32()? != CACHE_VERSION {
        return None;
    }
    let key: Key = r.take(32)?.try_into().ok()?;
    Some((key, r))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write then rename so a concurrent reader never sees a partial file.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Cache key of a covariance set: the array size and every sector.
pub fn ccm_key(scenario: &Scenario, n_antennas: usize) -> Key {
    let sectors: Vec<MpcConfig> = CcmSet::sectors(scenario);
    let json = serde_json::to_vec(&(CACHE_VERSION, n_antennas, scenario.energy, sectors)).expect("serializable");
    Sha256::digest(&json).into()
}

pub fn ccm_path(dir: &Path, key: &Key) -> PathBuf {
    dir.join(format!("ccm-{}.bin", hex::encode(&key[..8])))
}

pub fn encode_ccm(set: &CcmSet, key: &Key) -> Vec<u8> {
    let mut w = header(CCM_MAGIC, key);
    let covs = set.covariances();
    w.u32(set.n_antennas as u32);
    w.u32(covs.len() as u32);
    for c in covs {
        w.matrix(c);
    }
    w.0
}

/// Covariances stored under `key`, or `None` if the bytes do not hold them.
pub fn decode_ccm(bytes: &[u8], key: &Key) -> Option<(usize, Vec<CMatrix>)> {
    let (stored, mut r) = open(bytes, CCM_MAGIC)?;
    if &stored != key {
        return None;
    }
    let n = r.u32()? as usize;
    let count = r.u32()? as usize;
    let covs = (0..count).map(|_| r.matrix()).collect::<Option<Vec<_>>>()?;
    r.0.is_empty().then_some((n, covs))
}

/// Builds the covariance set for `n_antennas`, going through the cache
/// directory when one is given.
pub fn load_or_build_ccm(scenario: &Scenario, n_antennas: usize, dir: Option<&Path>) -> Result<CcmSet> {
    let Some(dir) = dir else {
        return Ok(CcmSet::build(scenario, n_antennas)?);
    };
    let key = ccm_key(scenario, n_antennas);
    let path = ccm_path(dir, &key);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Some((n, covs)) = decode_ccm(&bytes, &key) {
            if n == n_antennas {
                return Ok(CcmSet::from_covariances(scenario, n, covs)?);
            }
        }
    }
    let set = CcmSet::build(scenario, n_antennas)?;
    write_file(&path, &encode_ccm(&set, &key))?;
    Ok(set)
}

/// Full-array and (for partially connected arrays) subarray statistics.
pub fn link_statistics(scenario: &Scenario, dir: Option<&Path>) -> Result<(CcmSet, Option<CcmSet>)> {
    scenario.validate()?;
    let full = load_or_build_ccm(scenario, scenario.array.n_antennas, dir)?;
    let sub = match scenario.array.subarray_size {
        Some(ns) if scenario.array.architecture.is_partial() => Some(load_or_build_ccm(scenario, ns, dir)?),
        _ => None,
    };
    Ok((full, sub))
}

fn arch_code(a: Architecture) -> u32 {
    Architecture::ALL.iter().position(|&x| x == a).expect("listed") as u32
}

pub fn encode_bussgang(model: &BussgangModel, key: &Key) -> Vec<u8> {
    let mut w = header(BSG_MAGIC, key);
    w.u32(arch_code(model.architecture));
    w.u32(model.n_antennas as u32);
    w.u32(model.n_chains as u32);
    w.u32(model.n_frames as u32);
    w.u32(model.n_bins() as u32);
    w.u32(model.excluded_bins.len() as u32);
    for &b in &model.excluded_bins {
        w.u32(b as u32);
    }
    for (a, r) in model.a.iter().zip(&model.r_eta) {
        for (ab, rb) in a.iter().zip(r) {
            w.matrix(ab);
            w.matrix(rb);
        }
    }
    w.0
}

/// The model stored under `key`; shapes are checked against the block
/// layout of the stored architecture.
pub fn decode_bussgang(bytes: &[u8], key: &Key) -> Option<BussgangModel> {
    let (stored, mut r) = open(bytes, BSG_MAGIC)?;
    if &stored != key {
        return None;
    }
    let architecture = *Architecture::ALL.get(r.u32()? as usize)?;
    let n_antennas = r.u32()? as usize;
    let n_chains = r.u32()? as usize;
    let n_frames = r.u32()? as usize;
    let n_bins = r.u32()? as usize;
    let n_excl = r.u32()? as usize;
    let excluded_bins = (0..n_excl).map(|_| r.u32().map(|b| b as usize)).collect::<Option<Vec<_>>>()?;
    let layout = blocks(architecture, n_antennas, n_chains);
    let mut a = Vec::with_capacity(n_bins);
    let mut r_eta = Vec::with_capacity(n_bins);
    for _ in 0..n_bins {
        let mut ai = Vec::with_capacity(layout.len());
        let mut ri = Vec::with_capacity(layout.len());
        for b in &layout {
            let (na, nc) = (b.antennas.len(), b.chains.len());
            let am = r.matrix()?;
            let rm = r.matrix()?;
            if am.shape() != (na, nc) || rm.shape() != (na, na) {
                return None;
            }
            ai.push(am);
            ri.push(rm);
        }
        a.push(ai);
        r_eta.push(ri);
    }
    if !r.0.is_empty() {
        return None;
    }
    Some(BussgangModel { architecture, n_antennas, n_chains, blocks: layout, a, r_eta, n_frames, excluded_bins })
}

pub fn write_bussgang(model: &BussgangModel, key: &Key, path: &Path) -> Result<()> {
    write_file(path, &encode_bussgang(model, key))
}

pub fn read_bussgang(path: &Path, key: &Key) -> Result<Option<BussgangModel>> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(decode_bussgang(&bytes, key)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}
