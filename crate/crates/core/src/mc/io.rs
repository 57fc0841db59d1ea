//! CSV export and a compact binary cache for sample batches.
//!
//! Cache layout (little-endian): `b"HRVB"`, `u32` version, `u32` length and
//! bytes of the model fingerprint, `u64` seed, burn-in, thinning, sample
//! count and dimension, one `u8` block id and one `f64` exponent per
//! coordinate, then the samples row by row.

use std::io::{self, Read, Write};

use super::{BatchMeta, SampleBatch, SimulationConfig};
use crate::models::Blocks;

const MAGIC: &[u8; 4] = b"HRVB";
const VERSION: u32 = 1;

/// One row per sample: `x1..xd, s, omega1..omegad`.
pub fn write_csv<W: Write>(batch: &SampleBatch, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    let d = batch.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("s".into());
    header.extend((1..=d).map(|i| format!("omega{i}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..batch.len() {
        let (s, omega) = batch.polar(i);
        let mut line = String::new();
        for v in batch.row(i).iter().chain(std::iter::once(&s)).chain(&omega) {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_cache<W: Write>(batch: &SampleBatch, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    let fp = batch.meta.fingerprint.as_bytes();
    let cfg = &batch.meta.config;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(fp.len() as u32).to_le_bytes())?;
    w.write_all(fp)?;
    for v in [
        cfg.seed,
        cfg.burn_in as u64,
        cfg.thinning as u64,
        batch.len() as u64,
        batch.dim() as u64,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..batch.dim() {
        w.write_all(&[batch.blocks().block_of(i) as u8])?;
    }
    for a in batch.alphas() {
        w.write_all(&a.to_le_bytes())?;
    }
    for x in batch.xs() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_cache<R: Read>(r: R) -> io::Result<SampleBatch> {
    let mut r = io::BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a sample cache"));
    }
    if read_u32(&mut r)? != VERSION {
        return Err(bad("unsupported cache version"));
    }
    let len = read_u32(&mut r)? as usize;
    if len > 1024 {
        return Err(bad("fingerprint too long"));
    }
    let mut fp = vec![0u8; len];
    r.read_exact(&mut fp)?;
    let fingerprint = String::from_utf8(fp).map_err(|_| bad("fingerprint is not UTF-8"))?;
    let seed = read_u64(&mut r)?;
    let burn_in = read_u64(&mut r)? as usize;
    let thinning = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    if !(2..=32).contains(&d) {
        return Err(bad("bad dimension"));
    }
    let mut ids = vec![0u8; d];
    r.read_exact(&mut ids)?;
    let class = |j: u8| (0..d).filter(|&i| ids[i] == j).collect::<Vec<_>>();
    let blocks = Blocks::new(class(0), class(1), d).map_err(|e| bad(&e.to_string()))?;
    let alphas = (0..d).map(|_| read_f64(&mut r)).collect::<io::Result<Vec<_>>>()?;
    let total = n.checked_mul(d).ok_or_else(|| bad("sample count overflow"))?;
    let mut xs = Vec::with_capacity(total.min(1 << 28));
    for _ in 0..total {
        xs.push(read_f64(&mut r)?);
    }
    let meta = BatchMeta {
        source: "cache".into(),
        fingerprint,
        config: SimulationConfig {
            burn_in,
            n_samples: n,
            seed,
            thinning,
        },
    };
    Ok(SampleBatch::from_rows(xs, alphas, blocks, meta))
}
