//! Parameter file: `NUMPARAM` magic, format version, architecture hash,
//! tensor count, then per tensor its rank, dimensions and little-endian
//! `f32` values.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use super::network::Network;
use super::spec::NetworkSpec;
use super::tensor::Scalar;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NUMPARAM";
const VERSION: u32 = 1;

pub fn params_to_bytes<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let hash = net.spec().architecture_hash();
    out.extend_from_slice(&(hash.len() as u32).to_le_bytes());
    out.extend_from_slice(hash.as_bytes());
    out.extend_from_slice(&(net.params.len() as u32).to_le_bytes());
    for t in &net.params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    out
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Builds a network for `spec` from serialized parameters. Nothing is
/// returned unless the whole buffer parses.
pub fn params_from_bytes<T: Scalar>(spec: &NetworkSpec, bytes: &[u8]) -> Result<Network<T>> {
    let mut r = bytes;
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "not a parameter file",
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("parameter format version {version}"),
        )));
    }
    let hash_len = read_u32(&mut r)? as usize;
    if hash_len > 256 {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad hash length",
        )));
    }
    let mut hash = vec![0; hash_len];
    r.read_exact(&mut hash)?;
    let found = String::from_utf8_lossy(&hash).into_owned();
    let expected = spec.architecture_hash();
    if found != expected {
        return Err(Error::SpecMismatch { expected, found });
    }
    let mut net = Network::<T>::zeros(spec.clone())?;
    let count = read_u32(&mut r)? as usize;
    if count != net.params.len() {
        return Err(Error::SpecMismatch {
            expected: format!("{} tensors", net.params.len()),
            found: format!("{count} tensors"),
        });
    }
    for t in &mut net.params {
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        if shape != t.shape() {
            return Err(Error::SpecMismatch {
                expected: format!("{:?}", t.shape()),
                found: format!("{shape:?}"),
            });
        }
        for v in &mut t.data {
            let mut b = [0; 4];
            r.read_exact(&mut b)?;
            *v = T::of(f64::from(f32::from_le_bytes(b)));
        }
    }
    if !r.is_empty() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "trailing bytes",
        )));
    }
    Ok(net)
}

pub fn save_params<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    fs::write(path, params_to_bytes(net)).map_err(|e| Error::io_at(path, e))
}

pub fn load_params<T: Scalar>(spec: &NetworkSpec, path: &Path) -> Result<Network<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    params_from_bytes(spec, &bytes)
}
