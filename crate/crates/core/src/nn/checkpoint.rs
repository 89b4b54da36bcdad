//! Versioned binary checkpoint format. All integers and floats are
//! little-endian.
//!
//! ```text
//! magic        8 bytes   "SALNET\r\n"
//! version      u32       currently 1
//! input shape  3 × u32   channels, height, width
//! labels       u32 count, then per label: u32 byte length + UTF-8 bytes
//! layers       u32 count, then per layer: u8 tag + u32 fields
//!                0 conv2d   in, out, kernel, stride, pad
//!                1 relu
//!                2 maxpool  window
//!                3 flatten
//!                4 dense    in, out
//! parameters   u64 count, then f64 values in layer order, weight then bias
//! checksum     u32       CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::layer::{Conv2d, Dense, Layer};
use super::network::Network;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SALNET\r\n";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_FLATTEN: u8 = 3;
const TAG_DENSE: u8 = 4;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    for d in net.input_shape() {
        put_u32(&mut out, d as u32);
    }
    put_u32(&mut out, net.labels().len() as u32);
    for label in net.labels() {
        put_u32(&mut out, label.len() as u32);
        out.extend_from_slice(label.as_bytes());
    }
    put_u32(&mut out, net.layers().len() as u32);
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                out.push(TAG_CONV);
                for v in [c.in_channels, c.out_channels, c.kernel, c.stride, c.pad] {
                    put_u32(&mut out, v as u32);
                }
            }
            Layer::Relu => out.push(TAG_RELU),
            Layer::MaxPool2d { window } => {
                out.push(TAG_POOL);
                put_u32(&mut out, *window as u32);
            }
            Layer::Flatten => out.push(TAG_FLATTEN),
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                put_u32(&mut out, d.inputs as u32);
                put_u32(&mut out, d.outputs as u32);
            }
        }
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for block in net.param_blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    if bytes.len() < r.pos + 4 {
        return Err(truncated());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: r.pos };

    let input_shape = [r.usize()?, r.usize()?, r.usize()?];
    let n_labels = r.usize()?;
    let mut labels = Vec::new();
    for _ in 0..n_labels {
        let len = r.usize()?;
        let s = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::CorruptCheckpoint("label is not UTF-8".into()))?;
        labels.push(s.to_owned());
    }
    let n_layers = r.usize()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let layer = match r.take(1)?[0] {
            TAG_CONV => Layer::Conv2d(Conv2d::zeroed(r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?)),
            TAG_RELU => Layer::Relu,
            TAG_POOL => Layer::MaxPool2d { window: r.usize()? },
            TAG_FLATTEN => Layer::Flatten,
            TAG_DENSE => Layer::Dense(Dense::zeroed(r.usize()?, r.usize()?)),
            t => return Err(Error::CorruptCheckpoint(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let expected: usize = layers.iter().map(Layer::param_count).sum();
    if count != expected as u64 {
        return Err(Error::CorruptCheckpoint(format!(
            "topology needs {expected} parameters, file declares {count}"
        )));
    }
    for layer in &mut layers {
        for block in layer.params_mut() {
            for v in block.iter_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes after parameters".into()));
    }
    Network::new(input_shape, layers, labels).map_err(|e| match e {
        Error::Shape(m) | Error::InvalidInput(m) | Error::Numerical(m) => Error::CorruptCheckpoint(m),
        e => e,
    })
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    decode(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn truncated() -> Error {
    Error::CorruptCheckpoint("file is truncated".into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}
