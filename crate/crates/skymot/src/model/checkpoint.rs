//! Weight archives.
//!
//! A checkpoint is a single binary file:
//!
//! ```text
//! magic   8 bytes  "SKYMOTCK"
//! version u32 le   1
//! cfg_len u32 le   length of the TOML-serialized NetworkConfig
//! cfg     bytes    the configuration that rebuilds the architecture
//! count   u32 le   number of tensors
//! entry*  per tensor:
//!     name_len u16 le, name utf-8        e.g. "snn.conv1.weight"
//!     ndim     u8,  dims u32 le each     logical shape
//!     data     f32 le, row-major         product(dims) values
//! ```
//!
//! Tensors are stored f32 and widened back to f64 on load: the precision of
//! trained weights comfortably survives the round trip, and files stay half
//! the size. Loading reconstructs the network from the embedded
//! configuration and then requires the tensor set to match the
//! architecture's parameter list exactly, name for name and shape for
//! shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;

use crate::error::{Error, Result};

use super::net::{Network, NetworkConfig};

const MAGIC: &[u8; 8] = b"SKYMOTCK";
const VERSION: u32 = 1;

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = toml::to_string(&net.config)
        .map_err(|e| Error::checkpoint(format!("config serialization failed: {e}")))?;
    let cfg_bytes = cfg.as_bytes();
    w.write_all(&(cfg_bytes.len() as u32).to_le_bytes())?;
    w.write_all(cfg_bytes)?;

    let names = net.param_names();
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for name in &names {
        let tensor = net.param(name).expect("name from param_names");
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u16).to_le_bytes())?;
        w.write_all(nb)?;
        let shape = tensor.shape();
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fill(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::checkpoint("archive is truncated")
        } else {
            e.into()
        }
    })
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    fill(r, &mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

pub fn load(path: &Path) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<8>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::checkpoint(format!(
            "{} is not a weight archive (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported archive version {version} (expected {VERSION})"
        )));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    fill(&mut r, &mut cfg_bytes)?;
    let cfg_str = std::str::from_utf8(&cfg_bytes)
        .map_err(|_| Error::checkpoint("embedded configuration is not UTF-8"))?;
    let config: NetworkConfig = toml::from_str(cfg_str)
        .map_err(|e| Error::checkpoint(format!("embedded configuration is invalid: {e}")))?;

    let mut net = Network::new(config, 0)?;
    let expected: Vec<String> = net.param_names();
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(Error::checkpoint(format!(
            "archive holds {count} tensors, architecture needs {}",
            expected.len()
        )));
    }

    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_exact::<2>(&mut r)?) as usize;
        let mut nb = vec![0u8; name_len];
        fill(&mut r, &mut nb)?;
        let name = String::from_utf8(nb)
            .map_err(|_| Error::checkpoint("tensor name is not UTF-8"))?;
        let ndim = read_exact::<1>(&mut r)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u32(&mut r)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f32::from_le_bytes(read_exact::<4>(&mut r)?) as f64);
        }

        let Some(mut param) = net.param_mut(&name) else {
            return Err(Error::checkpoint(format!(
                "archive tensor '{name}' does not exist in this architecture"
            )));
        };
        if param.shape() != dims.as_slice() {
            return Err(Error::checkpoint(format!(
                "tensor '{name}' has shape {dims:?}, architecture needs {:?}",
                param.shape()
            )));
        }
        let arr = ArrayD::from_shape_vec(dims, data).expect("length was checked");
        param.assign(&arr);
        if !seen.insert(name.clone()) {
            return Err(Error::checkpoint(format!("duplicate tensor '{name}'")));
        }
    }
    for name in &expected {
        if !seen.contains(name) {
            return Err(Error::checkpoint(format!("archive is missing tensor '{name}'")));
        }
    }
    // Trailing garbage means the file was not written by this code.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::checkpoint("archive has trailing bytes"));
    }
    Ok(net)
}
